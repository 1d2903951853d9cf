"""Hidden time-reversal symmetry: constraint solver, detailed-balance check and special correlators.

A hidden symmetry exists when some doubled-system pure state ``Psi`` (as a
``d x d`` coefficient matrix), a real shift ``E`` and an involutory unitary
``U`` satisfy

    Psi H_eff^T - H_eff Psi = E Psi
    Psi c_l^T = sum_k U_lk c_k Psi

with ``Psi Psi^dag = rho_ss``. ``U`` is searched over structured families;
for each candidate the jump constraints are solved first (a linear kernel),
then the Hamiltonian constraint is diagonalized inside that kernel.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import least_squares, minimize_scalar

from .lindblad import LindbladModel, Propagator, effective_hamiltonian, steady_state
from .quantum_core import TOL_PSD, TOL_RANK, as_array
from .tfd import AntiUnitary, TfdState, check_trs_invariance, rho_eigenbasis

TOL_KERNEL = 1e-9
TOL_E = 1e-8
TOL_E_SCREEN = 1e-6
TOL_MATCH = 1e-8
TOL_SOLUTION = 1e-8
TOL_CQDB = 1e-9
TOL_INVOLUTION = 1e-8
N_PSI_GRID = 24


@dataclass(frozen=True, eq=False)
class CandidateU:
    U: np.ndarray
    label: str
    family: str
    param: float | None = None


@dataclass(frozen=True, eq=False)
class TrsSolution:
    tfd: TfdState
    E: float
    U: np.ndarray
    T_extracted: AntiUnitary
    residuals: dict
    label: str = ""

    @property
    def u(self) -> complex | None:
        """Scalar ``U`` for single-jump models."""
        return complex(self.U[0, 0]) if self.U.shape == (1, 1) else None


@dataclass(eq=False)
class DetectionReport:
    solutions: list[TrsSolution]
    cqdb: bool
    cqdb_residual: float
    steady_state_multiplicity: int
    candidate_U_log: list[dict] = field(default_factory=list)
    searched_families: list[str] = field(default_factory=list)
    rank_deficient: bool = False

    @property
    def found(self) -> bool:
        return bool(self.solutions)

    @property
    def discovered_u(self) -> list[complex]:
        return [s.u for s in self.solutions if s.u is not None]


def check_cqdb(model: LindbladModel, rho_ss=None, tol: float = TOL_CQDB) -> tuple[bool, float]:
    """``[H, rho_ss] = 0`` relative to ``||H|| ||rho||`` (traceless-jump Hamiltonian)."""
    rho = as_array(rho_ss) if rho_ss is not None else steady_state(model).rho.matrix
    H = model.H
    comm = np.linalg.norm(H @ rho - rho @ H)
    scale = np.linalg.norm(H) * np.linalg.norm(rho)
    if scale == 0:
        return True, 0.0
    rel = float(comm / scale)
    return rel < tol, rel


# ----------------------------------------------------------------------------
# candidate mixing matrices


def _offdiag(psi: float) -> np.ndarray:
    return np.array([[0, np.exp(-1j * psi)], [np.exp(1j * psi), 0]], complex)


def enumerate_candidate_U(
    M: int,
    jumps: Sequence | None = None,
    n_psi: int = N_PSI_GRID,
    extra: Sequence[np.ndarray] = (),
    include_swaps: bool = True,
) -> list[CandidateU]:
    """Structured involutory unitaries to try.

    All ``2^M`` diagonal sign patterns, then for every pair ``(i, j)`` the
    phase-swap ``[[0, e^{-i psi}], [e^{i psi}, 0]]`` on a ``psi`` grid with
    the remaining diagonal set to ``+1``. User matrices are appended last.
    ``jumps`` is accepted for interface symmetry and not needed here.
    """
    if M < 1:
        raise ValueError("need at least one jump operator")
    out = []
    for signs in itertools.product((1, -1), repeat=M):
        out.append(CandidateU(np.diag(np.array(signs, complex)), f"diag{signs}", "diagonal"))
    if include_swaps and M >= 2:
        grid = 2 * np.pi * np.arange(n_psi) / n_psi
        for i, j in itertools.combinations(range(M), 2):
            for psi in grid:
                U = np.eye(M, dtype=complex)
                U[np.ix_([i, j], [i, j])] = _offdiag(psi)
                out.append(CandidateU(U, f"swap({i},{j}) psi={psi:.6f}", f"swap({i},{j})", float(psi)))
    for k, U in enumerate(extra):
        out.append(CandidateU(np.asarray(U, complex), f"user[{k}]", "user"))
    return out


def check_involutory(U, tol: float = TOL_INVOLUTION) -> float:
    U = np.asarray(U, complex)
    eye = np.eye(U.shape[0])
    err = max(np.linalg.norm(U @ U.conj().T - eye), np.linalg.norm(U @ U - eye))
    if err > tol:
        raise ValueError(f"U is not an involutory unitary (residual {err:.3e})")
    return float(err)


# ----------------------------------------------------------------------------
# linear-algebra core


def jump_map_matrix(jumps: Sequence[np.ndarray], U: np.ndarray) -> np.ndarray:
    """Stacked matrix of ``Psi -> Psi c_l^T - sum_k U_lk c_k Psi`` on ``vec(Psi)`` (column stacking)."""
    d = jumps[0].shape[0]
    eye = np.eye(d)
    blocks = []
    for l, c in enumerate(jumps):
        mixed = sum(U[l, k] * jumps[k] for k in range(len(jumps)))
        blocks.append(np.kron(c, eye) - np.kron(eye, mixed))
    return np.vstack(blocks)


def sylvester_matrix(Heff: np.ndarray) -> np.ndarray:
    """Matrix of ``Psi -> Psi H^T - H Psi`` on ``vec(Psi)``."""
    d = Heff.shape[0]
    eye = np.eye(d)
    return np.kron(Heff, eye) - np.kron(eye, Heff)


def _kernel(A: np.ndarray, tol: float):
    _, s, vh = np.linalg.svd(A, full_matrices=True)
    smax = s[0] if s.size else 1.0
    full = np.zeros(A.shape[1])
    full[: s.size] = s
    keep = full <= tol * smax
    return vh[keep].conj().T, full / smax


def _smallest_sv_ratio(A: np.ndarray) -> float:
    s = np.linalg.svd(A, compute_uv=False)
    n = A.shape[1]
    if s.size < n:
        return 0.0
    return float(s[-1] / s[0])


def _vec(P):
    return P.reshape(-1, order="F")


def _unvec(v, d):
    return v.reshape(d, d, order="F")


def extract_antiunitary(tfd_or_psi, rho_ss, tol: float = 1e-6) -> AntiUnitary:
    """``V_z^T = rho^{-1/2} Psi``, computed as the unitary polar factor of ``Psi``.

    With ``Psi Psi^dag = rho`` the left polar decomposition ``Psi = rho^{1/2} W``
    gives ``W = V_z^T`` without inverting ``rho``, so numerically tiny
    eigenvalues (truncated Fock tails) do no harm. Returned as ``T = V K``
    with conjugation in the ``rho`` eigenbasis; the global phase makes the
    largest-magnitude entry of ``V`` real positive.
    """
    Psi = tfd_or_psi.Psi if isinstance(tfd_or_psi, TfdState) else np.asarray(tfd_or_psi, complex)
    Psi = Psi / np.linalg.norm(Psi)
    rho = as_array(rho_ss)
    err = np.linalg.norm(Psi @ Psi.conj().T - rho) / np.linalg.norm(rho)
    if err > tol:
        raise ValueError(f"TFD does not purify rho (mismatch {err:.3e})")
    _, B = rho_eigenbasis(rho, warn=False)
    W, _ = sla.polar(Psi, side="left")
    Vz = W.T
    V = Vz @ B.conj() @ B.conj().T
    j = np.unravel_index(np.argmax(np.abs(V)), V.shape)
    phase = np.exp(-1j * np.angle(V[j]))
    return AntiUnitary(V * phase, B, "extracted")


def _validate(Psi, rho, B, w, tol_match):
    Psi = Psi / np.linalg.norm(Psi)
    match = np.linalg.norm(Psi @ Psi.conj().T - rho) / np.linalg.norm(rho)
    # the polar factor must commute with rho once both are written in its eigenbasis
    W, _ = sla.polar(Psi, side="left")
    Wr = B.conj().T @ W @ B.conj()
    comm = np.linalg.norm(Wr * w[None, :] - w[:, None] * Wr) / np.linalg.norm(rho)
    return Psi, float(match), float(comm)


def _closest_purifying(basis_psis: list[np.ndarray], rho: np.ndarray, seed: int = 0) -> np.ndarray:
    """Combination ``sum x_i Psi_i`` minimizing ``||Psi Psi^dag - rho||`` (degenerate eigenspaces only)."""
    g = len(basis_psis)
    stack = np.array(basis_psis)

    def resid(z):
        x = z[:g] + 1j * z[g:]
        P = np.tensordot(x, stack, axes=1)
        r = P @ P.conj().T - rho
        return np.concatenate([r.real.ravel(), r.imag.ravel()])

    rng = np.random.default_rng(seed)
    best = None
    starts = [np.eye(g)[i] for i in range(g)] + [rng.normal(size=g) for _ in range(4)]
    for x0 in starts:
        z0 = np.concatenate([x0, np.zeros(g)])
        sol = least_squares(resid, z0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if best is None or sol.cost < best.cost:
            best = sol
    x = best.x[:g] + 1j * best.x[g:]
    return np.tensordot(x, stack, axes=1)


def solve_for_U(
    model: LindbladModel,
    rho: np.ndarray,
    U: np.ndarray,
    *,
    Heff: np.ndarray | None = None,
    S: np.ndarray | None = None,
    tol_kernel: float = TOL_KERNEL,
    tol_E: float = TOL_E,
    tol_match: float = TOL_MATCH,
    tol_solution: float = TOL_SOLUTION,
    label: str = "",
) -> tuple[list[TrsSolution], dict]:
    """Solve the constraint equations for one fixed ``U``; returns validated solutions and a log entry."""
    d = model.dim
    jumps = list(model.jumps)
    Heff = effective_hamiltonian(model) if Heff is None else Heff
    S = sylvester_matrix(Heff) if S is None else S
    hnorm = max(np.linalg.norm(Heff, 2), 1e-300)
    log = {"label": label, "U": U, "kernel_dim": 0, "E_candidates": [], "validated": 0, "note": ""}
    if jumps:
        A = jump_map_matrix(jumps, U)
        Q, svals = _kernel(A, tol_kernel)
        log["min_singular"] = float(np.min(svals))
    else:
        Q = np.eye(d * d, dtype=complex)
    k = Q.shape[1]
    log["kernel_dim"] = int(k)
    if k == 0:
        log["note"] = "empty jump kernel"
        return [], log
    SQ = S @ Q
    Evals = np.linalg.eigvals(Q.conj().T @ SQ)
    w, B = rho_eigenbasis(rho, warn=False)
    sols: list[TrsSolution] = []
    # Galerkin eigenvalues only propose E; the kernel need not be invariant under S
    screen = np.abs(Evals.imag) < TOL_E_SCREEN * hnorm
    log["E_candidates"] = [complex(e) for e in Evals[screen]]
    used = np.zeros(Evals.size, bool)
    for i in np.flatnonzero(screen):
        if used[i]:
            continue
        grp = [j for j in np.flatnonzero(screen & ~used) if abs(Evals[j] - Evals[i]) < TOL_E_SCREEN * hnorm]
        used[grp] = True
        E, X = _exact_shift(SQ, Q, Evals[grp].real, hnorm, tol_solution)
        if X is None:
            continue
        psis = [_unvec(Q @ X[:, j], d) for j in range(X.shape[1])]
        cand = psis if len(psis) == 1 else [_closest_purifying(psis, rho)]
        imag_E = float(np.max(np.abs(Evals[grp].imag)))
        if imag_E > tol_E * hnorm:
            log["note"] += f" E={E:.6g} accepted from the exact null space although Galerkin Im E={imag_E:.2e};"
        for P in cand:
            Psi, match, comm = _validate(P, rho, B, w, tol_match)
            if match > tol_match:
                continue
            # make the phase convention reproducible
            j = np.unravel_index(np.argmax(np.abs(Psi)), Psi.shape)
            Psi = Psi * np.exp(-1j * np.angle(Psi[j]))
            res_H = np.linalg.norm(Psi @ Heff.T - Heff @ Psi - E * Psi) / hnorm
            res_c = [
                float(np.linalg.norm(Psi @ c.T - sum(U[l, m] * jumps[m] for m in range(len(jumps))) @ Psi) / max(np.linalg.norm(c, 2), 1e-300))
                for l, c in enumerate(jumps)
            ]
            if res_H > tol_solution or (res_c and max(res_c) > tol_solution):
                continue
            try:
                T = extract_antiunitary(Psi, rho)
            except ValueError:
                continue
            inv = check_trs_invariance(rho, T)
            if inv > max(tol_match, 1e-8) * max(1.0, np.linalg.norm(rho)) * 10:
                continue
            residuals = {
                "hamiltonian": float(res_H),
                "jumps": res_c,
                "match": match,
                "commutator": comm,
                "invariance": float(inv),
                "U_involution": float(np.linalg.norm(U @ U - np.eye(U.shape[0]))),
                "imag_E_galerkin": imag_E,
            }
            sols.append(TrsSolution(TfdState(Psi, rho, T), E, U, T, residuals, label))
    log["validated"] = len(sols)
    return sols, log


def _exact_shift(SQ, Q, E_group, hnorm, tol):
    """Real ``E`` near ``E_group`` and kernel coordinates ``x`` with ``(S - E) Q x = 0``.

    Returns ``(E, X)`` with the null vectors as columns of ``X``, or
    ``(E, None)`` when no exact solution exists near the proposed values.
    """

    def smin(E):
        return np.linalg.svd(SQ - E * Q, compute_uv=False)[-1] / hnorm

    E0 = float(np.mean(E_group))
    if smin(E0) > tol:
        half = max(float(np.ptp(E_group)), 1e-9 * hnorm)
        r = minimize_scalar(smin, bounds=(E0 - half, E0 + half), method="bounded", options={"xatol": 1e-14 * hnorm})
        E0 = float(r.x)
    _, sv, vh = np.linalg.svd(SQ - E0 * Q, full_matrices=False)
    keep = sv / hnorm <= tol
    if not np.any(keep):
        return E0, None
    return E0, vh[keep].conj().T


def _best_match_score(model, rho, U, Heff, S, tol_kernel, tol_E) -> float:
    """How close ``U`` comes to a full solution: null-space defect plus purification mismatch."""
    d = model.dim
    A = jump_map_matrix(list(model.jumps), U)
    Q, _ = _kernel(A, tol_kernel)
    if Q.shape[1] == 0:
        return 1.0
    SQ = S @ Q
    hnorm = np.linalg.norm(Heff, 2)
    best = 1.0
    for E in np.linalg.eigvals(Q.conj().T @ SQ):
        _, sv, vh = np.linalg.svd(SQ - E.real * Q, full_matrices=False)
        P = _unvec(Q @ vh[-1].conj(), d)
        m = np.linalg.norm(P @ P.conj().T - rho) / np.linalg.norm(rho)
        best = min(best, m + sv[-1] / hnorm + abs(E.imag) / hnorm)
    return float(best)


def detect(
    model: LindbladModel,
    rho_ss=None,
    candidate_Us: Sequence[np.ndarray] | None = None,
    *,
    n_psi: int = N_PSI_GRID,
    refine: bool = True,
    tol_kernel: float = TOL_KERNEL,
    tol_E: float = TOL_E,
    tol_match: float = TOL_MATCH,
    tol_solution: float = TOL_SOLUTION,
    tol_rank: float = TOL_RANK,
    structured: bool = True,
) -> DetectionReport:
    """Search the structured ``U`` families (plus ``candidate_Us``) for hidden-symmetry solutions."""
    ss = steady_state(model)
    if rho_ss is None:
        if ss.multiplicity > 1:
            raise ValueError(
                f"steady state is {ss.multiplicity}-fold degenerate; pass the desired rho_ss explicitly"
            )
        rho = ss.rho.matrix
    else:
        rho = as_array(rho_ss)
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if w[0] < -TOL_PSD:
        raise ValueError(f"rho_ss is not positive semidefinite (smallest eigenvalue {w[0]:.3e})")
    rank_deficient = bool(w[0] <= tol_rank)
    if rank_deficient:
        warnings.warn(
            f"steady state is numerically rank deficient (smallest eigenvalue {w[0]:.3e}); "
            "the time reversal is undetermined on the unresolved subspace",
            RuntimeWarning,
            stacklevel=2,
        )
    cq, cq_res = check_cqdb(model, rho)
    M = model.n_jumps
    Heff = effective_hamiltonian(model)
    S = sylvester_matrix(Heff)
    extra = list(candidate_Us or [])
    for U in extra:
        check_involutory(U)
    if structured:
        cands = enumerate_candidate_U(M, model.jumps, n_psi=n_psi, extra=extra)
    else:
        cands = [CandidateU(np.asarray(U, complex), f"user[{k}]", "user") for k, U in enumerate(extra)]
    families = sorted({c.family for c in cands})
    report = DetectionReport([], cq, cq_res, ss.multiplicity, [], families, rank_deficient)
    kw = dict(Heff=Heff, S=S, tol_kernel=tol_kernel, tol_E=tol_E, tol_match=tol_match, tol_solution=tol_solution)
    by_family: dict[str, list[tuple[CandidateU, list, dict]]] = {}
    for c in cands:
        sols, log = solve_for_U(model, rho, c.U, label=c.label, **kw)
        log["family"] = c.family
        log["param"] = c.param
        report.candidate_U_log.append(log)
        report.solutions.extend(sols)
        by_family.setdefault(c.family, []).append((c, sols, log))
    if refine:
        for fam, entries in by_family.items():
            if not fam.startswith("swap") or any(s for _, s, _ in entries):
                continue
            report.solutions.extend(_refine_family(model, rho, entries, kw, report.candidate_U_log))
    return report


def _refine_family(model, rho, entries, kw, log_list):
    """One-dimensional refinement of a phase-swap family between grid points."""
    params = np.array([c.param for c, _, _ in entries])
    M = model.n_jumps
    i, j = (int(x) for x in entries[0][0].family[5:-1].split(","))

    def U_of(psi):
        U = np.eye(M, dtype=complex)
        U[np.ix_([i, j], [i, j])] = _offdiag(psi)
        return U

    sv = np.array([lg.get("min_singular", 1.0) for _, _, lg in entries])
    kernel_everywhere = np.all([lg["kernel_dim"] > 0 for _, _, lg in entries])
    if kernel_everywhere:
        score = lambda p: _best_match_score(model, rho, U_of(p), kw["Heff"], kw["S"], kw["tol_kernel"], kw["tol_E"])
        vals = np.array([score(p) for p in params])
    else:
        score = lambda p: _smallest_sv_ratio(jump_map_matrix(list(model.jumps), U_of(p)))
        vals = sv
    n = params.size
    step = 2 * np.pi / n
    found = []
    for k in range(n):
        if not (vals[k] <= vals[(k - 1) % n] and vals[k] <= vals[(k + 1) % n]):
            continue
        if vals[k] > 0.1:
            continue
        r = minimize_scalar(score, bounds=(params[k] - step, params[k] + step), method="bounded", options={"xatol": 1e-12})
        psi = float(np.mod(r.x, 2 * np.pi))
        sols, log = solve_for_U(model, rho, U_of(psi), label=f"swap({i},{j}) refined psi={psi:.10f}", **kw)
        log["family"] = f"swap({i},{j})"
        log["param"] = psi
        log["note"] = f"refined from grid point {params[k]:.6f} (score {r.fun:.3e})"
        log_list.append(log)
        found.extend(sols)
    return found


# ----------------------------------------------------------------------------
# special single-system correlators


@dataclass(frozen=True)
class Generator:
    """A named operator together with its image under the exchange map."""

    matrix: np.ndarray
    image: np.ndarray


def exchange_generators(model: LindbladModel, solution: TrsSolution, aliases: Mapping[str, tuple[str, complex]] | None = None) -> dict[str, Generator]:
    """Generators with known exchange images: ``c0..c{M-1}``, ``H_eff`` and ``1``.

    ``aliases`` maps a new name to ``(existing_name, scale)`` so that e.g.
    ``"a": ("c0", 1/sqrt(kappa))`` exposes the bare field operator.
    """
    U = solution.U
    jumps = model.jumps
    gens = {}
    for l, c in enumerate(jumps):
        img = sum(U[l, k] * jumps[k] for k in range(len(jumps)))
        gens[f"c{l}"] = Generator(np.asarray(c), np.asarray(img))
    H = effective_hamiltonian(model)
    gens["H_eff"] = Generator(H, H + solution.E * np.eye(model.dim))
    gens["1"] = Generator(np.eye(model.dim, dtype=complex), np.eye(model.dim, dtype=complex))
    for name, (base, scale) in (aliases or {}).items():
        g = gens[base]
        # the exchange map is linear, so the scale carries over unchanged
        gens[name] = Generator(scale * g.matrix, scale * g.image)
    return gens


class NotSimpleError(ValueError):
    pass


def exchange_word(word: Sequence[str], gens: Mapping[str, Generator]) -> tuple[np.ndarray, np.ndarray]:
    """Matrix of a product ``g1 g2 ... gn`` and its exchange image ``J[gn] ... J[g1]``."""
    if not word:
        raise ValueError("empty operator word")
    d = next(iter(gens.values())).matrix.shape[0]
    X = np.eye(d, dtype=complex)
    JX = np.eye(d, dtype=complex)
    for g in word:
        if g not in gens:
            raise NotSimpleError(f"'{g}' has no known exchange image; allowed generators: {sorted(gens)}")
        X = X @ gens[g].matrix
        JX = gens[g].image @ JX
    return X, JX


def exchange_eigenvalue(X: np.ndarray, JX: np.ndarray, tol: float = 1e-8) -> complex:
    """``lam`` with ``J[X] = lam X``; raises if ``J[X]`` is not proportional to ``X``."""
    nx = np.vdot(X, X)
    if abs(nx) == 0:
        raise NotSimpleError("operator is zero")
    lam = np.vdot(X, JX) / nx
    err = np.linalg.norm(JX - lam * X) / np.sqrt(abs(nx))
    if err > tol:
        raise NotSimpleError(f"exchange image is not proportional to the operator (residual {err:.3e})")
    return complex(lam)


@dataclass(frozen=True, eq=False)
class SpecialSymmetryTrace:
    times: np.ndarray
    forward: np.ndarray
    backward: np.ndarray
    asymmetry: np.ndarray
    ratio: complex

    @property
    def relative(self) -> float:
        scale = max(np.abs(self.forward).max(), np.abs(self.backward).max(), 1e-300)
        return float(np.abs(self.asymmetry).max() / scale)


def special_correlator_symmetry(
    model: LindbladModel,
    solution: TrsSolution,
    X_word: Sequence[str],
    Y_word: Sequence[str],
    times,
    connected: bool = True,
    aliases: Mapping[str, tuple[str, complex]] | None = None,
    propagator: Propagator | None = None,
    rho_ss=None,
) -> SpecialSymmetryTrace:
    """``C(t) - (lam_X/lam_Y) C(-t)`` for ``C(t>=0) = <X(t) Y>``, ``C(t<0) = <Y(-t) X>``.

    Requires ``J[X] = lam_X X`` and ``J[Y] = lam_Y Y``; then hidden symmetry
    implies ``lam_Y <X(t) Y> = lam_X <Y(t) X>`` so the returned trace vanishes.
    ``times`` should be non-negative; both branches are evaluated at ``|t|``.
    """
    gens = exchange_generators(model, solution, aliases)
    X, JX = exchange_word(X_word, gens)
    Y, JY = exchange_word(Y_word, gens)
    lx = exchange_eigenvalue(X, JX)
    ly = exchange_eigenvalue(Y, JY)
    if abs(ly) == 0:
        raise NotSimpleError("Y is annihilated by the exchange map")
    ratio = lx / ly
    t = np.abs(np.asarray(times, float))
    prop = propagator or Propagator(model)
    rho = as_array(rho_ss) if rho_ss is not None else solution.tfd.rho_ss
    fwd = prop.evaluate(X, Y @ rho, t)
    bwd = prop.evaluate(Y, X @ rho, t)
    if connected:
        c0 = np.trace(X @ rho) * np.trace(Y @ rho)
        fwd = fwd - c0
        bwd = bwd - c0
    return SpecialSymmetryTrace(t, fwd, bwd, fwd - ratio * bwd, ratio)


def single_system_asymmetry(model: LindbladModel, X, Y, times, connected: bool = True, propagator=None, rho_ss=None):
    """``<X(t) Y> - <Y(t) X>`` at ``t >= 0`` for arbitrary operators (no symmetry implied)."""
    t = np.abs(np.asarray(times, float))
    prop = propagator or Propagator(model)
    rho = as_array(rho_ss) if rho_ss is not None else steady_state(model).rho.matrix
    X = as_array(X)
    Y = as_array(Y)
    fwd = prop.evaluate(X, Y @ rho, t)
    bwd = prop.evaluate(Y, X @ rho, t)
    if connected:
        c0 = np.trace(X @ rho) * np.trace(Y @ rho)
        fwd, bwd = fwd - c0, bwd - c0
    return fwd, bwd


def cqdb_correlation_scan(
    model: LindbladModel,
    trs_family: Callable[[float], AntiUnitary],
    params: Sequence[float],
    X,
    Y,
    times,
    connected: bool = False,
    tol_invariance: float = 1e-8,
) -> dict[float, np.ndarray]:
    """Two-sided correlator asymmetry ``C(t) - C(-t)`` for each member of a family of time reversals.

    Every member must leave ``rho_ss`` invariant. Returns ``{param: asym}``
    sampled at the non-negative ``times``.
    """
    rho = steady_state(model).rho.matrix
    prop = Propagator(model)
    t = np.abs(np.asarray(times, float))
    X = as_array(X)
    Y = as_array(Y)
    fwd = prop.evaluate(X, Y @ rho, t)
    if connected:
        fwd = fwd - np.trace(X @ rho) * np.trace(Y @ rho)
    out = {}
    for p in params:
        T = trs_family(p)
        res = check_trs_invariance(rho, T)
        if res > tol_invariance:
            raise ValueError(f"family member {p} does not leave the steady state invariant ({res:.3e})")
        # C(-t) = <Y~(t) X~> with O~ = T O T^-1, evaluated on the same |t| grid
        Xt = T.conjugate(X)
        Yt = T.conjugate(Y)
        bwd = prop.evaluate(Yt, Xt @ rho, t)
        if connected:
            bwd = bwd - np.trace(Yt @ rho) * np.trace(Xt @ rho)
        out[p] = fwd - bwd
    return out
