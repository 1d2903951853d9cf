import csv
import json

import numpy as np
import pytest

from trslab import cli, lindblad, models
from trslab.models import QubitParams

QUBIT = {"type": "qubit", "params": {"Delta": 0.3, "Omega": 1.2, "kappa": 1.0, "n_th": 0.0}}
DRIVEN = {"type": "qubit", "params": {"Delta": 0.0, "Omega": 1.0, "kappa": 1.0, "n_th": 0.0}}


@pytest.fixture
def run(tmp_path):
    def go(cmd, model, options=None, extra=(), **top):
        cfg = {"schema_version": 1, "model": model, **top}
        if options is not None:
            cfg["options"] = options
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        out = tmp_path / "out"
        code = cli.run([cmd, "--config", str(path), "--out", str(out), *extra])
        text = out.read_text() if out.exists() else None
        return code, text

    return go


def load(text):
    return json.loads(text)


def cplx(v):
    return np.array(v["re"]) + 1j * np.array(v["im"])


def test_steady_state_matches_closed_form(run):
    code, text = run("steady-state", QUBIT)
    assert code == 0
    out = load(text)
    rho = cplx(out["rho"])
    ref = models.qubit_analytic_steady_state(QubitParams(0.3, 1.2, 1.0, 0.0)).matrix
    assert np.allclose(rho, ref, atol=1e-12)
    assert out["multiplicity"] == 1
    assert out["schema_version"] == 1


def test_kerr_parity_degeneracy(run):
    model = {"type": "kerr", "params": {"K": 1.0, "Lambda2": 1.0, "kappa1": 0.0, "kappa2": 0.5, "n_max": 12}}
    code, text = run("steady-state", model)
    assert code == 0
    assert load(text)["multiplicity"] == 2


def test_spectrum_complex_encoding(run):
    code, text = run("spectrum", DRIVEN)
    assert code == 0
    out = load(text)
    ev = np.array([complex(z["re"], z["im"]) for z in out["eigenvalues"]])
    ref = lindblad.spectrum(models.driven_qubit(QubitParams(0.0, 1.0, 1.0))).eigenvalues
    assert np.allclose(np.sort_complex(ev), np.sort_complex(ref), atol=1e-10)
    assert abs(ev[0]) < 1e-10


def test_detect_counts(run):
    code, text = run("detect-trs", DRIVEN)
    assert code == 0
    out = load(text)
    assert out["n_solutions"] == 1 and not out["cqdb"]
    hot = {"type": "qubit", "params": {"Omega": 1.4, "kappa": 1.0, "n_th": 0.2}}
    code, text = run("detect-trs", hot)
    assert code == 0 and load(text)["n_solutions"] == 0


def test_correlator_csv_roundtrip(run):
    opts = {"X": "sx", "Y": "sz", "times": [0.0, 0.5, 1.5]}
    code, text = run("correlator", QUBIT, opts)
    assert code == 0
    rows = list(csv.reader(text.splitlines()))
    assert rows[0] == ["t", "re", "im"]
    vals = np.array([float(r[1]) + 1j * float(r[2]) for r in rows[1:]])
    ref = lindblad.correlator(models.driven_qubit(QubitParams(0.3, 1.2, 1.0)), models.SX, models.SZ, [0.0, 0.5, 1.5]).values
    # %.17g round-trips doubles exactly
    assert np.array_equal(vals, np.asarray(ref))


def test_wigner_vacuum_peak(run):
    model = {"type": "kerr", "params": {"K": 1.0, "Lambda2": 0.5, "kappa1": 0.5, "n_max": 10}}
    code, text = run("wigner", model, {"source": "vacuum", "x": [-1.0, 1.0, 3], "p": [-1.0, 1.0, 3]})
    assert code == 0
    rows = list(csv.reader(text.splitlines()))[1:]
    peak = [float(w) for x, p, w in rows if float(x) == 0 and float(p) == 0]
    assert np.isclose(peak[0], 1 / np.pi, atol=1e-14)


def test_cqa_roundtrip_and_numerical_failure(run):
    code, text = run("cqa", DRIVEN, {"U": [[1.0]]})
    assert code == 0
    assert load(text)["roundtrip_error"] < 1e-10
    # u = -1 does not solve the driven qubit: no dark state
    code, _ = run("cqa", DRIVEN, {"U": [[-1.0]]})
    assert code == 3


@pytest.mark.parametrize(
    "command, model, options, top",
    [
        ("steady-state", {"type": "qubit", "params": {"Omega": 1.0, "bogus": 1}}, None, {}),
        ("steady-state", {"type": "spin"}, None, {}),
        ("correlator", QUBIT, {"X": "sq", "Y": "sz", "times": [0.0]}, {}),
        ("correlator", QUBIT, {"X": "sx", "Y": "sz", "times": []}, {}),
        ("correlator", QUBIT, {"X": "sx", "Y": "sz", "times": [0.0], "extra": 1}, {}),
        ("cqa", DRIVEN, {"U": [[{"re": 0.0, "im": 1.0}]]}, {}),
        ("detect-trs", DRIVEN, {"candidate_U": [[2.0]]}, {}),
        ("asymmetry-scan", DRIVEN, {"n_grid": [], "pairs": [{"X": "sx", "Y": "sz"}]}, {}),
        ("steady-state", QUBIT, None, {"tolerances": {"nope": 1.0}}),
        ("steady-state", QUBIT, None, {"command": "spectrum"}),
    ],
)
def test_config_errors_exit_2(run, command, model, options, top):
    code, _ = run(command, model, options, **top)
    assert code == 2


def test_bad_schema_version(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"schema_version": 2, "model": QUBIT}))
    assert cli.run(["steady-state", "--config", str(path)]) == 2
    path.write_text("{not json")
    assert cli.run(["steady-state", "--config", str(path)]) == 2
    assert cli.run(["steady-state", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.run(["frobnicate", "--config", str(path)]) == 2


def test_tolerance_override(run):
    code, _ = run("steady-state", QUBIT, extra=("--tol", "null=1e-9"))
    assert code == 0
    code, _ = run("steady-state", QUBIT, extra=("--tol", "null=-1"))
    assert code == 2


def test_encode_helpers():
    out = cli.encode({"z": 1 + 2j, "a": np.array([1.0, 2.0]), "c": np.array([1j]), "b": np.bool_(True)})
    assert out == {"z": {"re": 1.0, "im": 2.0}, "a": [1.0, 2.0], "c": {"re": [0.0], "im": [1.0]}, "b": True}
    assert cli.decode_complex({"re": 1, "im": -1}, "x") == 1 - 1j
    with pytest.raises(cli.ConfigError):
        cli.decode_complex(True, "x")
    assert cli.parse_token("X^2*P") == [("X", 2), ("P", 1)]
    with pytest.raises(cli.ConfigError):
        cli.parse_token("X^^2")
