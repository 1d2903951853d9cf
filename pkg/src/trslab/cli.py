"""Command-line front end: JSON configs in, CSV traces and JSON reports out.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import re
import sys
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import absorber, asymmetry, hidden_trs, lindblad, models
from .quantum_core import RankError, StateVector, annihilation_op, coherent_state, wigner
from .tfd import AntiUnitary, build_tfd, tfd_correlator

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3

COMMANDS = ("steady-state", "spectrum", "detect-trs", "correlator", "asymmetry-scan", "cqa", "wigner")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (exit code 2)."""


NUMERICAL_ERRORS = (
    lindblad.NumericalError,
    RankError,
    absorber.NoDarkStateError,
    absorber.AmbiguousDarkStateError,
    np.linalg.LinAlgError,
    MemoryError,
)


# ------------------------------------------------------------ JSON helpers


def encode(obj: Any) -> Any:
    """JSON-ready copy: complex numbers become ``{"re", "im"}``, arrays nested lists."""
    if isinstance(obj, dict):
        return {str(k): encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [encode(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"re": obj.real.tolist(), "im": obj.imag.tolist()}
        return obj.tolist()
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def decode_complex(v: Any, what: str) -> complex:
    if isinstance(v, bool):
        raise ConfigError(f"{what}: expected a number")
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, dict) and set(v) <= {"re", "im"}:
        try:
            return complex(float(v.get("re", 0.0)), float(v.get("im", 0.0)))
        except (TypeError, ValueError):
            raise ConfigError(f"{what}: bad complex number {v!r}") from None
    raise ConfigError(f"{what}: expected a number or {{\"re\", \"im\"}}")


def decode_matrix(v: Any, what: str) -> np.ndarray:
    """Nested lists of numbers or ``{"re": [[..]], "im": [[..]]}``."""
    try:
        if isinstance(v, dict):
            if not set(v) <= {"re", "im"} or "re" not in v:
                raise ConfigError(f"{what}: matrix object needs 're' (and optionally 'im')")
            re_ = np.array(v["re"], float)
            im_ = np.array(v.get("im", np.zeros_like(re_)), float)
            m = re_ + 1j * im_
        else:
            m = np.array([[decode_complex(x, what) for x in row] for row in v], complex)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{what}: not a matrix ({exc})") from None
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError(f"{what}: matrix must be square, got shape {m.shape}")
    return m


def _check_keys(d: dict, allowed: set, what: str, required: set = frozenset()):
    if not isinstance(d, dict):
        raise ConfigError(f"{what}: expected an object")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"{what}: unknown key(s) {sorted(unknown)}")
    missing = set(required) - set(d)
    if missing:
        raise ConfigError(f"{what}: missing key(s) {sorted(missing)}")


# ----------------------------------------------------------------- models

QUBIT_KEYS = {"Delta", "Omega", "kappa", "n_th"}
KERR_KEYS = {"K", "Delta", "Lambda1", "Lambda2", "kappa1", "kappa2", "n_th", "n_max"}


@dataclass(frozen=True)
class ModelSpec:
    """Model descriptor; picklable so scans can build models in worker processes."""

    type: str
    params: tuple = ()
    H: np.ndarray | None = field(default=None, compare=False)
    jumps: tuple = field(default=(), compare=False)
    scale_drive: bool = False

    @property
    def p(self) -> dict:
        return dict(self.params)

    def qubit_params(self, n_th: float | None = None) -> models.QubitParams:
        p = self.p
        if n_th is not None:
            if self.scale_drive:
                p["Omega"] = p.get("Omega", 1.0) * (1 + 2 * n_th)
            p["n_th"] = n_th
        return models.QubitParams(**p)

    def kerr_params(self, n_th: float | None = None) -> models.KerrParams:
        p = self.p
        if n_th is not None:
            p["n_th"] = n_th
        if "n_max" not in p:
            p["n_max"] = models.default_truncation(models.KerrParams(**{**p, "n_max": 2}))
        return models.KerrParams(**p)

    def build(self, n_th: float | None = None) -> lindblad.LindbladModel:
        if self.type == "qubit":
            return models.driven_qubit(self.qubit_params(n_th))
        if self.type == "kerr":
            return models.kerr_cavity(self.kerr_params(n_th))
        if n_th is not None:
            raise ConfigError("custom models have no temperature parameter")
        return lindblad.LindbladModel.from_arrays(self.H, list(self.jumps))

    def __call__(self, n_th: float) -> lindblad.LindbladModel:
        return self.build(n_th)


def parse_model(d: Any) -> ModelSpec:
    _check_keys(d, {"type", "params", "H", "jumps", "scale_drive_with_temperature"}, "model", {"type"})
    kind = d["type"]
    scale = bool(d.get("scale_drive_with_temperature", False))
    if kind in ("qubit", "kerr"):
        allowed = QUBIT_KEYS if kind == "qubit" else KERR_KEYS
        params = d.get("params", {})
        _check_keys(params, allowed, f"model.params ({kind})")
        if {"H", "jumps"} & set(d):
            raise ConfigError("'H'/'jumps' are only valid for custom models")
        clean = {}
        for k, v in params.items():
            if k in ("Lambda1", "Lambda2"):
                clean[k] = decode_complex(v, f"model.params.{k}")
            elif k == "n_max":
                if not isinstance(v, int) or isinstance(v, bool):
                    raise ConfigError("model.params.n_max must be an integer")
                clean[k] = v
            else:
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ConfigError(f"model.params.{k} must be a real number")
                clean[k] = float(v)
        spec = ModelSpec(kind, tuple(sorted(clean.items())), scale_drive=scale)
        try:
            spec.qubit_params() if kind == "qubit" else spec.kerr_params()
        except ValueError as exc:
            raise ConfigError(f"model.params: {exc}") from None
        return spec
    if kind == "custom":
        if "params" in d:
            raise ConfigError("custom models take 'H' and 'jumps', not 'params'")
        if "H" not in d:
            raise ConfigError("custom model needs 'H'")
        H = decode_matrix(d["H"], "model.H")
        jumps = tuple(decode_matrix(j, f"model.jumps[{i}]") for i, j in enumerate(d.get("jumps", [])))
        for j in jumps:
            if j.shape != H.shape:
                raise ConfigError("jump operators must match the Hamiltonian's dimension")
        try:
            lindblad.LindbladModel.from_arrays(H, list(jumps))
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from None
        return ModelSpec("custom", (), H, jumps)
    raise ConfigError(f"model.type must be 'qubit', 'kerr' or 'custom', got {kind!r}")


# --------------------------------------------------------- operator tokens

_FACTOR = re.compile(r"^([A-Za-z_][A-Za-z_0-9]*)(?:\^(\d+))?$")
QUBIT_NAMES = ("sx", "sy", "sz", "sm", "sp", "I", "H", "H_eff")
CAVITY_NAMES = ("a", "ad", "n", "X", "P", "I", "H", "H_eff")


def _named_operators(model: lindblad.LindbladModel, kind: str) -> dict[str, np.ndarray]:
    d = model.dim
    ops = {"I": np.eye(d, dtype=complex), "H": model.H, "H_eff": lindblad.effective_hamiltonian(model)}
    if kind == "qubit":
        ops.update(sx=models.SX, sy=models.SY, sz=models.SZ, sm=models.SM, sp=models.SP)
    elif kind == "kerr":
        a = annihilation_op(d).matrix
        ad = a.conj().T
        ops.update(a=a, ad=ad, n=ad @ a, X=(a + ad) / np.sqrt(2), P=-1j * (a - ad) / np.sqrt(2))
    return ops


def parse_token(token: str) -> list[tuple[str, int]]:
    """``"X^2*P"`` -> ``[("X", 2), ("P", 1)]``; raises ``ConfigError`` on bad syntax."""
    if not isinstance(token, str) or not token.strip():
        raise ConfigError(f"operator token must be a non-empty string, got {token!r}")
    out = []
    for part in token.replace(" ", "").split("*"):
        m = _FACTOR.match(part)
        if not m:
            raise ConfigError(f"cannot parse operator factor {part!r} in {token!r}")
        power = int(m.group(2) or 1)
        if power < 1:
            raise ConfigError(f"power must be a positive integer in {token!r}")
        out.append((m.group(1), power))
    return out


@dataclass(frozen=True)
class OperatorRef:
    """Operator from a token or a literal matrix, resolved against a model when needed."""

    token: str | None = None
    literal: np.ndarray | None = field(default=None, compare=False)
    model_kind: str = "custom"

    def __call__(self, model: lindblad.LindbladModel) -> np.ndarray:
        if self.literal is not None:
            if self.literal.shape != (model.dim, model.dim):
                raise ConfigError(f"literal operator has shape {self.literal.shape}, model dimension is {model.dim}")
            return self.literal
        ops = _named_operators(model, self.model_kind)
        out = np.eye(model.dim, dtype=complex)
        for name, power in parse_token(self.token):
            if name not in ops:
                raise ConfigError(f"unknown operator {name!r}; known: {sorted(ops)}")
            out = out @ np.linalg.matrix_power(ops[name], power)
        return out

    def word(self) -> list[str]:
        if self.token is None:
            raise ConfigError("special correlators need operator tokens, not literal matrices")
        return [name for name, power in parse_token(self.token) for _ in range(power)]


def parse_operator(v: Any, model: ModelSpec, what: str) -> OperatorRef:
    if isinstance(v, str):
        names = QUBIT_NAMES if model.type == "qubit" else CAVITY_NAMES if model.type == "kerr" else ("I", "H", "H_eff")
        for name, _ in parse_token(v):
            if name not in names:
                raise ConfigError(f"{what}: unknown operator token {name!r}; known: {list(names)}")
        return OperatorRef(v, None, model.type)
    return OperatorRef(None, decode_matrix(v, what), model.type)


# ---------------------------------------------------------- configuration

TOLERANCES = {
    "null": 1e-10,
    "rank": 1e-12,
    "kernel": hidden_trs.TOL_KERNEL,
    "E": hidden_trs.TOL_E,
    "match": hidden_trs.TOL_MATCH,
    "solution": hidden_trs.TOL_SOLUTION,
    "dark": absorber.TOL_DARK,
    "convergence": absorber.TOL_CONVERGENCE,
    "resolution": asymmetry.RESOLUTION,
}

OPTION_KEYS = {
    "steady-state": set(),
    "spectrum": set(),
    "detect-trs": {"n_psi", "refine", "structured", "candidate_U"},
    "correlator": {"X", "Y", "times", "variant", "connected", "trs", "psi_grid", "solution"},
    "asymmetry-scan": {"n_grid", "temperature_grid", "pairs"},
    "cqa": {"U", "E", "select", "check_step"},
    "wigner": {"source", "alpha", "x", "p", "solution"},
}


@dataclass
class RunConfig:
    command: str
    model: ModelSpec
    tolerances: dict
    output: str | None
    options: dict
    jobs: int = 1


def parse_config(raw: Any, command: str, tol_overrides: dict | None = None) -> RunConfig:
    _check_keys(raw, {"schema_version", "command", "model", "tolerances", "output", "options"}, "config", {"schema_version", "model"})
    if raw["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {raw['schema_version']!r}; expected {SCHEMA_VERSION}")
    if "command" in raw and raw["command"] != command:
        raise ConfigError(f"config is for command {raw['command']!r}, not {command!r}")
    model = parse_model(raw["model"])
    tols = dict(TOLERANCES)
    user_tols = dict(raw.get("tolerances", {}))
    user_tols.update(tol_overrides or {})
    for k, v in user_tols.items():
        if k not in TOLERANCES:
            raise ConfigError(f"unknown tolerance {k!r}; known: {sorted(TOLERANCES)}")
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
            raise ConfigError(f"tolerance {k!r} must be a positive number")
        tols[k] = float(v)
    options = raw.get("options", {})
    _check_keys(options, OPTION_KEYS[command], f"options ({command})")
    out = raw.get("output")
    if out is not None and not isinstance(out, str):
        raise ConfigError("output must be a path string")
    return RunConfig(command, model, tols, out, options)


def _times(v: Any) -> np.ndarray:
    if isinstance(v, dict):
        _check_keys(v, {"start", "stop", "num"}, "options.times", {"start", "stop", "num"})
        if not isinstance(v["num"], int) or v["num"] < 1:
            raise ConfigError("options.times.num must be a positive integer")
        return np.linspace(float(v["start"]), float(v["stop"]), v["num"])
    if isinstance(v, list) and v:
        try:
            return np.array(v, float)
        except (TypeError, ValueError):
            raise ConfigError("options.times must be numbers") from None
    raise ConfigError("options.times must be {start, stop, num} or a non-empty list")


def _int_opt(opts, key, default):
    v = opts.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"options.{key} must be an integer")
    return v


def _bool_opt(opts, key, default):
    v = opts.get(key, default)
    if not isinstance(v, bool):
        raise ConfigError(f"options.{key} must be true or false")
    return v


# ------------------------------------------------------------ time reversal


@dataclass(frozen=True)
class TrsRef:
    """How to obtain the anti-unitary: qubit family, detection, explicit matrix or plain ``K``."""

    type: str
    psi: float = 0.0
    index: int = 0
    V: np.ndarray | None = field(default=None, compare=False)

    def __call__(self, model: lindblad.LindbladModel, spec: ModelSpec | None = None) -> AntiUnitary:
        if self.type == "conjugation":
            return AntiUnitary.complex_conjugation(model.dim)
        if self.type == "matrix":
            return AntiUnitary(self.V, None, "user")
        if self.type == "qubit_family":
            b = _qubit_b_from_model(model)
            return models.qubit_trs_family(b, self.psi)
        sol = _detected_solution(model, self.index)
        return sol.T_extracted


def _qubit_b_from_model(model) -> float:
    """Effective drive ``b' = Omega / (kappa (1 + 2 n_th))`` read off the model."""
    if model.dim != 2:
        raise ConfigError("the qubit time-reversal family needs a qubit model")
    Omega = 2 * np.real(model.H[0, 1])
    rate = sum(np.linalg.norm(c) ** 2 for c in model.jumps)
    return float(Omega / rate)


def _detected_solution(model, index: int):
    rep = hidden_trs.detect(model)
    if not rep.solutions:
        raise lindblad.NumericalError("no hidden time-reversal symmetry detected")
    if index >= len(rep.solutions):
        raise ConfigError(f"solution index {index} out of range ({len(rep.solutions)} found)")
    return rep.solutions[index]


def parse_trs(v: Any, model: ModelSpec, what: str = "options.trs") -> TrsRef:
    if v is None:
        return TrsRef("conjugation")
    _check_keys(v, {"type", "psi", "index", "V"}, what, {"type"})
    t = v["type"]
    if t == "conjugation":
        return TrsRef(t)
    if t == "qubit_family":
        if model.type != "qubit":
            raise ConfigError(f"{what}: qubit_family needs a qubit model")
        return TrsRef(t, psi=float(v.get("psi", np.pi)))
    if t == "detected":
        return TrsRef(t, index=int(v.get("index", 0)))
    if t == "matrix":
        if "V" not in v:
            raise ConfigError(f"{what}: matrix time reversal needs 'V'")
        V = decode_matrix(v["V"], f"{what}.V")
        if np.linalg.norm(V.conj().T @ V - np.eye(V.shape[0])) > 1e-10:
            raise ConfigError(f"{what}.V is not unitary")
        return TrsRef(t, V=V)
    raise ConfigError(f"{what}.type must be conjugation, qubit_family, detected or matrix")


# ----------------------------------------------------------------- outputs


def write_csv(path: str | None, header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["%.17g" % x if isinstance(x, (float, np.floating)) else x for x in r])
    text = buf.getvalue()
    _emit(path, text)
    return text


def write_json(path: str | None, payload: dict) -> str:
    text = json.dumps(encode(payload), indent=2, ensure_ascii=False, allow_nan=True) + "\n"
    _emit(path, text)
    return text


def _emit(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _header(cfg: RunConfig) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": cfg.command}


# ---------------------------------------------------------------- commands


def cmd_steady_state(cfg: RunConfig) -> str:
    model = cfg.model.build()
    ss = lindblad.steady_state(model, tol_null=cfg.tolerances["null"])
    return write_json(
        cfg.output,
        {**_header(cfg), "rho": ss.rho.matrix, "residual": ss.residual, "multiplicity": ss.multiplicity},
    )


def cmd_spectrum(cfg: RunConfig) -> str:
    model = cfg.model.build()
    spec = lindblad.spectrum(model)
    order = np.argsort(-spec.eigenvalues.real)
    return write_json(
        cfg.output,
        {
            **_header(cfg),
            "eigenvalues": [complex(z) for z in spec.eigenvalues[order]],
            "gap": spec.gap(),
            "condition": spec.condition,
            "exceptional_pairs": [list(map(int, p)) for p in spec.exceptional_pairs],
        },
    )


def _solution_json(s) -> dict:
    return {
        "label": s.label,
        "E": s.E,
        "U": s.U,
        "T_unitary": s.T_extracted.unitary_z,
        "residuals": s.residuals,
    }


def _log_json(entry: dict) -> dict:
    return {k: v for k, v in entry.items() if not isinstance(v, np.ndarray) or v.size <= 64}


def _require_involutory(U: np.ndarray, what: str):
    try:
        hidden_trs.check_involutory(U)
    except ValueError as exc:
        raise ConfigError(f"{what}: {exc}") from None


def cmd_detect_trs(cfg: RunConfig) -> str:
    o = cfg.options
    model = cfg.model.build()
    cands = []
    for i, U in enumerate(o.get("candidate_U", [])):
        U = decode_matrix(U, f"options.candidate_U[{i}]")
        if U.shape != (model.n_jumps, model.n_jumps):
            raise ConfigError(f"candidate U must be {model.n_jumps}x{model.n_jumps}")
        _require_involutory(U, f"options.candidate_U[{i}]")
        cands.append(U)
    t = cfg.tolerances
    rep = hidden_trs.detect(
        model,
        candidate_Us=cands,
        n_psi=_int_opt(o, "n_psi", hidden_trs.N_PSI_GRID),
        refine=_bool_opt(o, "refine", True),
        structured=_bool_opt(o, "structured", True),
        tol_kernel=t["kernel"],
        tol_E=t["E"],
        tol_match=t["match"],
        tol_solution=t["solution"],
        tol_rank=t["rank"],
    )
    return write_json(
        cfg.output,
        {
            **_header(cfg),
            "n_solutions": len(rep.solutions),
            "solutions": [_solution_json(s) for s in rep.solutions],
            "cqdb": rep.cqdb,
            "cqdb_residual": rep.cqdb_residual,
            "steady_state_multiplicity": rep.steady_state_multiplicity,
            "rank_deficient": rep.rank_deficient,
            "searched_families": rep.searched_families,
            "candidate_U_log": [_log_json(e) for e in rep.candidate_U_log],
        },
    )


def _special_aliases(model, kind) -> dict:
    """Aliases ``name -> (c_k, scale)`` for named operators proportional to a jump."""
    ops = _named_operators(model, kind)
    aliases = {}
    for name in ("a", "ad", "sm", "sp"):
        if name not in ops:
            continue
        X = ops[name]
        for k, c in enumerate(model.jumps):
            nc = np.vdot(c, c)
            if abs(nc) == 0:
                continue
            s = np.vdot(c, X) / nc
            if abs(s) > 0 and np.linalg.norm(X - s * c) <= 1e-10 * np.linalg.norm(X):
                aliases[name] = (f"c{k}", complex(s))
                break
    return aliases


def cmd_correlator(cfg: RunConfig) -> str:
    o = cfg.options
    _check_keys(o, OPTION_KEYS["correlator"], "options (correlator)", {"X", "Y", "times"})
    variant = o.get("variant", "single")
    if variant not in ("single", "two_sided", "tfd", "special"):
        raise ConfigError(f"options.variant must be single, two_sided, tfd or special, got {variant!r}")
    Xref = parse_operator(o["X"], cfg.model, "options.X")
    Yref = parse_operator(o["Y"], cfg.model, "options.Y")
    t = _times(o["times"])
    connected = _bool_opt(o, "connected", False)
    if "psi_grid" in o and variant != "two_sided":
        raise ConfigError("options.psi_grid is only valid for the two_sided variant")
    model = cfg.model.build()
    ss = lindblad.steady_state(model, tol_null=cfg.tolerances["null"])
    if ss.multiplicity != 1:
        raise lindblad.NumericalError(f"steady state is {ss.multiplicity}-fold degenerate")
    rho = ss.rho.matrix
    X, Y = Xref(model), Yref(model)
    prop = lindblad.Propagator(model)

    if variant == "single":
        vals = np.empty(t.size, complex)
        pos = t >= 0
        vals[pos] = prop.evaluate(X, Y @ rho, t[pos])
        vals[~pos] = prop.evaluate(Y, X @ rho, -t[~pos])
        if connected:
            vals -= np.trace(X @ rho) * np.trace(Y @ rho)
        return write_csv(cfg.output, ["t", "re", "im"], [(a, c.real, c.imag) for a, c in zip(t, vals)])

    if variant == "two_sided":
        if "psi_grid" in o:
            if cfg.model.type != "qubit":
                raise ConfigError("options.psi_grid needs a qubit model")
            psis = [float(p) for p in o["psi_grid"]]
            b = _qubit_b_from_model(model)
            rows = []
            for psi in psis:
                V = models.qubit_trs_family(b, psi).unitary_z
                tr = lindblad.two_sided_correlator(model, X, Y, V, t, connected, rho, prop)
                rows += [(psi, a, c.real, c.imag) for a, c in zip(t, tr.values)]
            return write_csv(cfg.output, ["psi", "t", "re", "im"], rows)
        T = parse_trs(o.get("trs"), cfg.model)(model)
        tr = lindblad.two_sided_correlator(model, X, Y, T.unitary_z, t, connected, rho, prop)
        return write_csv(cfg.output, ["t", "re", "im"], [(a, c.real, c.imag) for a, c in zip(t, tr.values)])

    if variant == "tfd":
        T = parse_trs(o.get("trs", {"type": "detected"}), cfg.model)(model)
        tfd = build_tfd(rho, T, tol_rank=cfg.tolerances["rank"])
        tr = tfd_correlator(model, tfd, X, Y, t, connected, prop)
        rows = [
            (a, c.real, c.imag, cl.real, cl.imag, en.real, en.imag)
            for a, c, cl, en in zip(t, tr.total, tr.classical, tr.entanglement)
        ]
        return write_csv(cfg.output, ["t", "re", "im", "re_cl", "im_cl", "re_en", "im_en"], rows)

    # special: forward branch for t >= 0, ratio-weighted backward branch for t < 0
    sol = _detected_solution(model, _int_opt(o, "solution", 0))
    aliases = _special_aliases(model, cfg.model.type)
    try:
        tr = hidden_trs.special_correlator_symmetry(
            model, sol, Xref.word(), Yref.word(), np.abs(t), connected, aliases, prop, rho
        )
    except hidden_trs.NotSimpleError as exc:
        raise ConfigError(f"special correlator: {exc}") from None
    vals = np.where(t >= 0, tr.forward, tr.ratio * tr.backward)
    return write_csv(cfg.output, ["t", "re", "im"], [(a, c.real, c.imag) for a, c in zip(t, vals)])


def _pairs(o, model: ModelSpec) -> list[asymmetry.PairSpec]:
    raw = o.get("pairs")
    if not isinstance(raw, list) or not raw:
        raise ConfigError("options.pairs must be a non-empty list")
    out = []
    for i, p in enumerate(raw):
        what = f"options.pairs[{i}]"
        _check_keys(p, {"label", "X", "Y", "kind", "trs"}, what, {"X", "Y"})
        kind = p.get("kind", "single")
        if kind not in ("single", "two_sided", "tfd"):
            raise ConfigError(f"{what}.kind must be single, two_sided or tfd")
        trs = parse_trs(p["trs"], model, f"{what}.trs") if "trs" in p else None
        if kind != "single" and trs is None:
            raise ConfigError(f"{what}: kind {kind!r} needs 'trs'")
        label = p.get("label", f"{p['X']}|{p['Y']}")
        X = parse_operator(p["X"], model, f"{what}.X")
        Y = parse_operator(p["Y"], model, f"{what}.Y")
        out.append(asymmetry.PairSpec(str(label), X, Y, kind, trs))
    return out


def cmd_asymmetry_scan(cfg: RunConfig) -> str:
    o = cfg.options
    if cfg.model.type == "custom":
        raise ConfigError("asymmetry-scan needs a qubit or kerr model family")
    if ("n_grid" in o) == ("temperature_grid" in o):
        raise ConfigError("give exactly one of options.n_grid or options.temperature_grid")
    raw = o.get("n_grid", o.get("temperature_grid"))
    if not isinstance(raw, list) or not raw:
        raise ConfigError("the occupancy/temperature grid must be a non-empty list")
    try:
        grid = np.array(raw, float)
    except (TypeError, ValueError):
        raise ConfigError("grid values must be numbers") from None
    if np.any(grid < 0):
        raise ConfigError("grid values must be non-negative")
    if "temperature_grid" in o:
        grid = np.asarray(models.bose_occupancy(grid), float)
    pairs = _pairs(o, cfg.model)
    scan = asymmetry.temperature_scan(cfg.model, grid, pairs, jobs=cfg.jobs, resolution=cfg.tolerances["resolution"])
    header = ["n_th", "kT_over_hw", "gap", "gap_estimate"]
    for lab in scan.labels:
        header += [f"m_{lab}", f"m_re_{lab}", f"m_im_{lab}", f"err_{lab}"]
    header += ["failed"]
    rows = []
    for i, n in enumerate(scan.n_th):
        est = float("nan")
        if cfg.model.type == "kerr":
            g = models.dissipative_gap_estimate(cfg.model.kerr_params(float(n)))
            est = float("nan") if g is None else float(g)
        row = [float(n), float(scan.temperature[i]), float(scan.gaps[i]), est]
        for lab in scan.labels:
            row += [float(scan.values(lab, part)[i]) for part in ("m", "m_real", "m_imag", "error")]
        row.append(int(scan.failed[i]))
        rows.append(row)
    return write_csv(cfg.output, header, rows)


def cmd_cqa(cfg: RunConfig) -> str:
    o = cfg.options
    model = cfg.model.build()
    E = float(o.get("E", 0.0))
    Uopt = o.get("U", "detected")
    if Uopt == "detected":
        sol = _detected_solution(model, 0)
        U, E = sol.U, sol.E
    else:
        U = decode_matrix(Uopt, "options.U")
        if U.shape != (model.n_jumps, model.n_jumps):
            raise ConfigError(f"options.U must be {model.n_jumps}x{model.n_jumps}")
        _require_involutory(U, "options.U")
    select = o.get("select")
    res = absorber.cqa_steady_state(model, U, E, select=select, tol=cfg.tolerances["dark"])
    ss = lindblad.steady_state(model, tol_null=cfg.tolerances["null"]).rho.matrix
    err = float(np.linalg.norm(res.rho.matrix - ss) / np.linalg.norm(ss))
    d = model.dim
    payload = {
        **_header(cfg),
        "U": U,
        "E": E,
        "n_dark": res.n_dark,
        "dark_state": res.dark.amplitudes.reshape(d, d),
        "rho": res.rho.matrix,
        "lindblad_residual": res.residual,
        "roundtrip_error": err,
        "absorber_residuals": {
            "jumps": list(res.absorber.jumps),
            "hamiltonian": res.absorber.hamiltonian,
            "liouvillian": res.absorber.liouvillian,
        },
    }
    if "check_step" in o:
        if cfg.model.type != "kerr":
            raise ConfigError("options.check_step applies to kerr models only")
        step = _int_opt(o, "check_step", 5)
        p = cfg.model.kerr_params()
        conv = absorber.cqa_converged(
            lambda n: models.kerr_cavity(p.with_(n_max=n)), p.n_max, U, E, step, cfg.tolerances["convergence"]
        )
        payload["truncation_check"] = {"n_max": conv.n_max, "check_n_max": conv.check_n_max, "change": conv.change, "converged": conv.converged}
    return write_json(cfg.output, payload)


def _axis(v: Any, what: str) -> np.ndarray:
    if not (isinstance(v, list) and len(v) == 3 and isinstance(v[2], int) and v[2] >= 1):
        raise ConfigError(f"{what} must be [min, max, num]")
    return np.linspace(float(v[0]), float(v[1]), v[2])


def cmd_wigner(cfg: RunConfig) -> str:
    o = cfg.options
    source = o.get("source", "steady")
    if source not in ("steady", "vacuum", "T_plus_on_coherent", "T_minus_on_coherent"):
        raise ConfigError("options.source must be steady, vacuum, T_plus_on_coherent or T_minus_on_coherent")
    if cfg.model.type != "kerr":
        raise ConfigError("wigner needs a kerr model")
    xs = _axis(o.get("x", [-4.0, 4.0, 81]), "options.x")
    ps = _axis(o.get("p", [-4.0, 4.0, 81]), "options.p")
    model = cfg.model.build()
    n_max = model.dim
    if source == "steady":
        state = lindblad.steady_state(model, tol_null=cfg.tolerances["null"]).rho.matrix
    elif source == "vacuum":
        state = coherent_state(0.0, n_max)
    else:
        alpha = decode_complex(o.get("alpha", 0.0), "options.alpha")
        want = 1 if source == "T_plus_on_coherent" else -1
        p = cfg.model.kerr_params()
        structured = p.n_th == 0 and p.kappa2 == 0
        with warnings.catch_warnings():
            if structured:
                # the rank warning concerns the extracted T, which is replaced below
                warnings.simplefilter("ignore", RuntimeWarning)
            rep = hidden_trs.detect(model)
        sols = [s for s in rep.solutions if s.u is not None and abs(s.u - want) < 1e-6]
        if not sols:
            raise lindblad.NumericalError(f"no hidden time reversal with u = {want:+d} was detected")
        T = sols[0].T_extracted
        if structured:
            # the double-precision polar factor is unreliable on weakly populated levels
            T = models.kerr_time_reversal(p, want, E=float(np.real(sols[0].E)))
        psi = T.apply(coherent_state(alpha, n_max).amplitudes)
        state = StateVector(model.space, psi)
    W = wigner(state, xs, ps)
    rows = [(float(x), float(p), float(W[j, i])) for j, p in enumerate(ps) for i, x in enumerate(xs)]
    return write_csv(cfg.output, ["x", "p", "w"], rows)


HANDLERS: dict[str, Callable[[RunConfig], str]] = {
    "steady-state": cmd_steady_state,
    "spectrum": cmd_spectrum,
    "detect-trs": cmd_detect_trs,
    "correlator": cmd_correlator,
    "asymmetry-scan": cmd_asymmetry_scan,
    "cqa": cmd_cqa,
    "wigner": cmd_wigner,
}


# ------------------------------------------------------------------- entry


def _tol_pair(s: str) -> tuple[str, float]:
    if "=" not in s:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {s!r}")
    k, v = s.split("=", 1)
    try:
        return k.strip(), float(v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tolerance value {v!r} is not a number") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
    common.add_argument("--out", metavar="PATH", help="output file (default: config 'output' or stdout)")
    common.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes for scans")
    common.add_argument("--tol", type=_tol_pair, action="append", default=[], metavar="NAME=VALUE", help="override a named tolerance")
    parser = _Parser(prog="trslab", description="Hidden time-reversal symmetry toolkit for Lindblad models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        cfg = parse_config(raw, args.command, dict(args.tol))
        cfg.jobs = args.jobs
        if args.out is not None:
            cfg.output = args.out
        HANDLERS[args.command](cfg)
    except ConfigError as exc:
        print(f"trslab: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        print(f"trslab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"trslab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main(argv: list[str] | None = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
