"""Time-asymmetry metrics ``m = int_0^inf |C(t) - C(-t)| dt`` and temperature scans.

The difference ``D(t) = C(t) - C(-t)`` of a stationary correlator is always of
the form ``x1^T e^{Lt} z1 - x2^T e^{Lt} z2``. It is expanded over Liouvillian
modes, ``D(t) = sum_k D_k exp(lambda_k t)``, with each amplitude built from
its own left/right eigenvector pair so that its accuracy is set by that
mode's condition number rather than by the whole eigenbasis.

Strongly non-normal Liouvillians (the Kerr cat regime) contain clusters of
nearly defective modes whose individual amplitudes are meaningless even
though their sum is finite. Those modes are never used spectrally: up to
``t_switch = 40 / min(decay rate of the cluster)`` the exact ``D(t)`` is
sampled with dense matrix exponentials, and only the well-conditioned modes
carry the integral beyond. The mismatch at ``t_switch`` is added to the error
estimate.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .lindblad import (
    CorrelatorTrace,
    LindbladModel,
    NumericalError,
    build_liouvillian,
    conjugate_by,
    steady_state,
)
from .quantum_core import as_array, vectorize
from .models import bose_temperature
from .tfd import build_tfd

COND_MODE = 1e6
DECAY_HORIZON = 40.0
TOL_ZERO = 1e-9
TOL_DIVERGENT = 1e-8
DROP_TOL = 1e-14
RESOLUTION = 0.25
MAX_POINTS = 20_000_000
WORK_BUDGET = 200_000_000
RTOL = 1e-8
CHUNK = 4_000_000


class DivergentAsymmetryError(NumericalError):
    """The asymmetry has a non-decaying component so ``m`` is infinite."""


def asymmetry_trace(C: CorrelatorTrace, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """``|C(t) - C(-t)|`` on the non-negative half of a symmetric time grid."""
    t = np.asarray(C.times, float)
    vals = np.asarray(C.values)
    pos = np.flatnonzero(t >= 0)
    order = np.argsort(t)
    ts = t[order]
    j = np.searchsorted(ts, -t[pos])
    j = np.clip(j, 0, ts.size - 1)
    mirror = order[j]
    if np.max(np.abs(t[mirror] + t[pos]), initial=0.0) > tol * max(1.0, np.abs(t).max()):
        raise ValueError("time grid is not symmetric about zero")
    return t[pos], np.abs(vals[pos] - vals[mirror])


# ---------------------------------------------------------------- pair setup


@dataclass(frozen=True, eq=False)
class AsymmetryPair:
    """The two correlator branches as ``(x, z)`` vector pairs on the Liouville space.

    ``D(t) = x1 . e^{Lt} z1 - ratio * x2 . e^{Lt} z2``.
    """

    x1: np.ndarray
    z1: np.ndarray
    x2: np.ndarray
    z2: np.ndarray
    ratio: complex = 1.0

    @property
    def scale(self) -> float:
        return float(np.linalg.norm(self.x1) * np.linalg.norm(self.z1) + abs(self.ratio) * np.linalg.norm(self.x2) * np.linalg.norm(self.z2))


def single_pair(X, Y, rho) -> AsymmetryPair:
    """``C(t) = <X(t) Y>`` and ``C(-t) = <Y(t) X>``."""
    X, Y, rho = as_array(X), as_array(Y), as_array(rho)
    return AsymmetryPair(vectorize(X.T), vectorize(Y @ rho), vectorize(Y.T), vectorize(X @ rho))


def two_sided_pair(X, Y, rho, T_unitary=None) -> AsymmetryPair:
    """``C(-t) = <Y~(t) X~>`` with ``O~ = T O T^{-1}`` and ``T = V K_z``."""
    X, Y, rho = as_array(X), as_array(Y), as_array(rho)
    V = np.eye(X.shape[0]) if T_unitary is None else as_array(T_unitary)
    Xt, Yt = conjugate_by(V, X), conjugate_by(V, Y)
    return AsymmetryPair(vectorize(X.T), vectorize(Y @ rho), vectorize(Yt.T), vectorize(Xt @ rho))


def tfd_pair(X, Y, tfd) -> AsymmetryPair:
    """Doubled-system correlator ``<X_A(t) Y_B>`` against ``<Y_A(t) X_B>``."""
    X, Y = as_array(X), as_array(Y)
    Psi = tfd.Psi
    Zxy = Psi @ Y.T @ Psi.conj().T
    Zyx = Psi @ X.T @ Psi.conj().T
    return AsymmetryPair(vectorize(X.T), vectorize(Zxy), vectorize(Y.T), vectorize(Zyx))


def special_pair(X, Y, rho, ratio: complex) -> AsymmetryPair:
    """``<X(t) Y> - (lam_X/lam_Y) <Y(t) X>`` for operators with simple exchange action."""
    p = single_pair(X, Y, rho)
    return AsymmetryPair(p.x1, p.z1, p.x2, p.z2, complex(ratio))


# ------------------------------------------------------------ mode analysis


@dataclass(frozen=True, eq=False)
class ModeData:
    """Liouvillian eigenpairs with individually normalised left vectors."""

    L: np.ndarray
    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray  # columns l_k with l_k^dag r_k = 1
    condition: np.ndarray  # per-mode eigenvalue condition numbers

    @classmethod
    def from_liouvillian(cls, L: np.ndarray) -> "ModeData":
        lam, VL, VR = sla.eig(L, left=True, right=True)
        s = np.einsum("ij,ij->j", VL.conj(), VR)
        cond = np.linalg.norm(VL, axis=0) * np.linalg.norm(VR, axis=0) / np.maximum(np.abs(s), 1e-300)
        VL = VL / s.conj()
        return cls(L, lam, VR, VL, cond)

    def amplitudes(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        return (x @ self.right) * (self.left.conj().T @ z)

    def ill_conditioned(self, cond_max: float = COND_MODE) -> np.ndarray:
        return self.condition > cond_max


# ------------------------------------------------------------- quadrature


def _simpson(y: np.ndarray, h: float) -> float:
    n = y.size - 1
    if n == 0:
        return 0.0
    return float(h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum()))


def _three_norms(D: np.ndarray, h: float, coarse: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Simpson integrals of ``|D|, |Re D|, |Im D|`` at spacing ``h`` and ``coarse*h``."""
    fine = np.empty(3)
    crude = np.empty(3)
    for i, y in enumerate((np.abs(D), np.abs(D.real), np.abs(D.imag))):
        fine[i] = _simpson(y, h)
        crude[i] = _simpson(y[::coarse], coarse * h)
    return fine, crude


def _grid_count(length: float, h: float) -> int:
    """Number of intervals, a positive multiple of 8 so both grids admit Simpson."""
    return int(8 * max(1, np.ceil(length / (8.0 * h))))


def _spectral_values(D: np.ndarray, lam: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.empty(t.size, complex)
    step = max(1, CHUNK // max(lam.size, 1))
    for s in range(0, t.size, step):
        out[s : s + step] = np.exp(np.outer(t[s : s + step], lam)) @ D
    return out


def _propagated_values(L: np.ndarray, pair: AsymmetryPair, t_end: float, h: float) -> tuple[np.ndarray, float]:
    """Exact ``D`` on a uniform grid over ``[0, t_end]`` from dense matrix exponentials.

    Panel starts are reached with ``exp(L W)`` acting on the two row vectors;
    inside a panel the offsets ``exp(L j h) z`` are precomputed once. The cost
    is about ``(W/h + t_end/W)`` dense mat-vecs, minimised at ``W ~ sqrt(t_end h)``.
    """
    n_int = _grid_count(t_end, h)
    h = t_end / n_int
    per = int(max(1, min(n_int, round(np.sqrt(n_int)))))
    Z = np.column_stack([pair.z1, pair.z2])
    Ph = sla.expm(L * h)
    offsets = np.empty((per, Z.shape[0], 2), complex)
    cur = Z.copy()
    for j in range(per):
        offsets[j] = cur
        cur = Ph @ cur
    PW = sla.expm(L * (per * h))
    rows = np.vstack([pair.x1, pair.x2])
    weights = np.array([1.0, -pair.ratio])
    vals = np.empty(n_int + 1, complex)
    k = 0
    while k <= n_int:
        m = min(per, n_int + 1 - k)
        # D = sum_b w_b rows[b] . offsets[j][:, b]
        vals[k : k + m] = np.einsum("bn,jnb,b->j", rows, offsets[:m], weights)
        k += m
        rows = rows @ PW
    return vals, h


@dataclass(frozen=True)
class AsymmetryResult:
    """Integrated asymmetry with quadrature diagnostics.

    ``m`` integrates the complex modulus; ``m_real`` and ``m_imag`` integrate
    ``|Re D|`` and ``|Im D|``. ``error`` is the sum of the 4x-grid refinement
    difference, the analytic tail beyond ``t_max``, the bound for modes
    dropped as negligible and the mismatch at the switch from exact
    propagation to the spectral sum.
    """

    m: float
    m_real: float
    m_imag: float
    error: float
    refinement: float
    tail: float
    t_max: float
    t_switch: float
    n_ill_conditioned: int
    gap: float
    scale: float
    divergent: bool = False

    @classmethod
    def divergent_result(cls, gap, scale, n_bad):
        inf = float("inf")
        return cls(inf, inf, inf, inf, inf, inf, inf, 0.0, n_bad, gap, scale, True)


def integrate_pair(
    modes: ModeData,
    pair: AsymmetryPair,
    resolution: float = RESOLUTION,
    cond_max: float = COND_MODE,
    raise_divergent: bool = False,
    rtol: float = RTOL,
) -> AsymmetryResult:
    """``int_0^inf`` of ``|D(t)|`` for one prepared pair. See the module docstring."""
    lam = modes.eigenvalues
    D = modes.amplitudes(pair.x1, pair.z1) - pair.ratio * modes.amplitudes(pair.x2, pair.z2)
    scale = pair.scale
    zero = np.abs(lam) < TOL_ZERO
    bad = modes.ill_conditioned(cond_max) & ~zero
    rates = -lam.real
    nonzero = ~zero
    gap = float(rates[nonzero].min()) if nonzero.any() else 0.0
    d_inf = D[zero].sum()
    if abs(d_inf) > TOL_DIVERGENT * max(scale, 1e-300) or (bad & zero).any():
        if raise_divergent:
            raise DivergentAsymmetryError(f"stationary part of the asymmetry is {abs(d_inf):.3e}; the integral diverges")
        return AsymmetryResult.divergent_result(gap, scale, int(bad.sum()))
    if np.any(rates[nonzero] <= 0):
        raise NumericalError("Liouvillian has a non-decaying nonzero mode")
    good = nonzero & ~bad
    lam_g, D_g, r_g = lam[good], D[good], rates[good]
    weight = np.abs(D_g) / r_g
    floor = DROP_TOL * max(scale, 1e-300)
    significant = weight > 1e-8 * max(weight.max(initial=0.0), floor)
    omegas = np.abs(lam_g[significant])
    if bad.any():
        omegas = np.concatenate([omegas, np.abs(lam[bad])])
    omega_res = float(omegas.max()) if omegas.size else 1.0
    keep = weight > floor
    dropped = float(weight[~keep].sum())
    lam_g, D_g, r_g, weight = lam_g[keep], D_g[keep], r_g[keep], weight[keep]
    t_max = DECAY_HORIZON / float(r_g.min()) if r_g.size else 0.0

    fine = np.zeros(3)
    refinement = 0.0
    switch_err = 0.0
    t_switch = 0.0
    if bad.any():
        t_switch = DECAY_HORIZON / float(rates[bad].min())
        h = resolution / omega_res
        vals, h = _propagated_values(modes.L, pair, t_switch, h)
        vals = vals - d_inf
        f, c = _three_norms(vals, h)
        fine += f
        refinement += float(np.abs(f - c).max())
        spec_at_switch = _spectral_values(D_g, lam_g, np.array([t_switch]))[0]
        switch_err = abs(vals[-1] - spec_at_switch) / float(rates[bad].min())
        t_max = max(t_max, t_switch)

    # spectral region [t_switch, t_max] in doubling segments
    active = np.ones(lam_g.size, bool)
    a = t_switch
    while a < t_max and active.any():
        bound = np.abs(D_g) * np.exp(-r_g * a) / r_g
        newly = active & (bound <= floor)
        dropped += float(bound[newly].sum())
        active &= ~newly
        if not active.any():
            break
        la, Da = lam_g[active], D_g[active]
        h = resolution / float(np.abs(la).max())
        b = min(t_max, a + max(a, 64 * h))
        n_int = _grid_count(b - a, h)
        if n_int > MAX_POINTS:
            warnings.warn("asymmetry quadrature capped; result under-resolved", RuntimeWarning, stacklevel=2)
            n_int = 8 * (MAX_POINTS // 8)
        while True:
            t = np.linspace(a, b, n_int + 1)
            f, c = _three_norms(_spectral_values(Da, la, t), (b - a) / n_int)
            diff = float(np.abs(f - c).max())
            # |D| has kinks at zeros of a real D, so Simpson may need refining
            if diff <= rtol * f[0] + floor or 2 * n_int * la.size > WORK_BUDGET:
                break
            n_int *= 2
        fine += f
        refinement += diff
        a = b
    tail = float((np.abs(D_g[active]) * np.exp(-r_g[active] * t_max) / r_g[active]).sum()) if active.any() else 0.0
    error = refinement + tail + dropped + switch_err
    return AsymmetryResult(
        float(fine[0]), float(fine[1]), float(fine[2]), error, refinement, tail + dropped,
        t_max, t_switch, int(bad.sum()), gap, scale,
    )


def integrated_asymmetry(
    model: LindbladModel,
    X,
    Y,
    kind: str = "single",
    *,
    rho_ss=None,
    T_unitary=None,
    tfd=None,
    ratio: complex | None = None,
    modes: ModeData | None = None,
    resolution: float = RESOLUTION,
    raise_divergent: bool = False,
) -> AsymmetryResult:
    """``m = int_0^inf |C(t) - C(-t)| dt`` for the pair ``(X, Y)``.

    ``kind`` selects the correlator: ``"single"`` (``<X(t)Y>`` vs ``<Y(t)X>``),
    ``"two_sided"`` (mirror branch conjugated by ``T_unitary``), ``"tfd"``
    (doubled-system correlator of ``tfd``) or ``"special"`` (backward branch
    weighted by ``ratio = lam_X / lam_Y``).
    """
    X, Y = as_array(X), as_array(Y)
    if kind == "tfd":
        if tfd is None:
            raise ValueError("kind='tfd' needs a TFD state")
        rho = tfd.rho_ss
    else:
        rho = as_array(rho_ss) if rho_ss is not None else _unique_steady_state(model)
    if kind == "single":
        pair = single_pair(X, Y, rho)
    elif kind == "two_sided":
        pair = two_sided_pair(X, Y, rho, T_unitary)
    elif kind == "tfd":
        pair = tfd_pair(X, Y, tfd)
    elif kind == "special":
        if ratio is None:
            raise ValueError("kind='special' needs the exchange-eigenvalue ratio")
        pair = special_pair(X, Y, rho, ratio)
    else:
        raise ValueError(f"unknown correlator kind {kind!r}")
    if modes is None:
        modes = ModeData.from_liouvillian(build_liouvillian(model).matrix)
    return integrate_pair(modes, pair, resolution, raise_divergent=raise_divergent)


def _unique_steady_state(model: LindbladModel) -> np.ndarray:
    ss = steady_state(model)
    if ss.multiplicity != 1:
        raise NumericalError(f"steady state is not unique (multiplicity {ss.multiplicity})")
    return ss.rho.matrix


# ------------------------------------------------------------------ scans


@dataclass(frozen=True)
class PairSpec:
    """A correlator pair; ``X`` and ``Y`` may be arrays or callables of the model.

    ``trs`` maps the model to an ``AntiUnitary`` and is required for the
    ``"tfd"`` and ``"two_sided"`` kinds.
    """

    label: str
    X: object
    Y: object
    kind: str = "single"
    trs: Callable | None = None

    def operators(self, model: LindbladModel) -> tuple[np.ndarray, np.ndarray]:
        X = self.X(model) if callable(self.X) else self.X
        Y = self.Y(model) if callable(self.Y) else self.Y
        return as_array(X), as_array(Y)


@dataclass(frozen=True)
class ScanPoint:
    n_th: float
    results: dict
    gap: float
    failed: bool = False
    reason: str = ""


@dataclass(frozen=True, eq=False)
class AsymmetryScan:
    """``m`` per pair on a grid of bath occupancies, with per-point diagnostics."""

    n_th: np.ndarray
    labels: tuple[str, ...]
    points: tuple[ScanPoint, ...] = field(repr=False)

    @property
    def temperature(self) -> np.ndarray:
        """``k_B T / (hbar omega)`` from the Bose factor."""
        return bose_temperature(self.n_th)

    def values(self, label: str, part: str = "m") -> np.ndarray:
        out = np.full(self.n_th.size, np.nan)
        for i, p in enumerate(self.points):
            if not p.failed:
                out[i] = getattr(p.results[label], part)
        return out

    def errors(self, label: str) -> np.ndarray:
        return self.values(label, "error")

    @property
    def gaps(self) -> np.ndarray:
        return np.array([p.gap for p in self.points])

    @property
    def failed(self) -> np.ndarray:
        return np.array([p.failed for p in self.points])

    def onset_temperature(self, label: str, fraction: float = 0.5) -> float:
        """``k_B T / (hbar omega)`` where ``m`` first reaches ``fraction * max m``.

        Linear interpolation on the temperature axis between the bracketing
        grid points; failed points are skipped.
        """
        m = self.values(label)
        ok = np.isfinite(m)
        T = self.temperature[ok]
        m = m[ok]
        order = np.argsort(T)
        T, m = T[order], m[order]
        if m.size == 0:
            return float("nan")
        level = fraction * m.max()
        idx = int(np.flatnonzero(m >= level)[0])
        if idx == 0:
            return float(T[0])
        t0, t1, m0, m1 = T[idx - 1], T[idx], m[idx - 1], m[idx]
        return float(t0 + (level - m0) * (t1 - t0) / (m1 - m0))


def heuristic_onset_temperature(switching_rate: float, kappa: float) -> float:
    """Temperature at which the thermal excitation rate ``kappa n_th`` equals ``switching_rate``."""
    return float(bose_temperature(switching_rate / kappa))


def _scan_point(args) -> ScanPoint:
    factory, n, pairs, resolution = args
    try:
        model = factory(n)
        rho = _unique_steady_state(model)
        modes = ModeData.from_liouvillian(build_liouvillian(model).matrix)
        res = {}
        for p in pairs:
            X, Y = p.operators(model)
            kw = {}
            if p.kind in ("tfd", "two_sided"):
                if p.trs is None:
                    raise ValueError(f"pair {p.label!r} needs a time reversal")
                T = p.trs(model)
                if p.kind == "tfd":
                    kw["tfd"] = build_tfd(rho, T)
                else:
                    kw["T_unitary"] = T.unitary_z
            res[p.label] = integrated_asymmetry(
                model, X, Y, p.kind, rho_ss=rho, modes=modes, resolution=resolution, **kw
            )
        nz = np.abs(modes.eigenvalues) >= TOL_ZERO
        gap = float(-modes.eigenvalues[nz].real.max()) if nz.any() else 0.0
        return ScanPoint(float(n), res, gap)
    except (NumericalError, np.linalg.LinAlgError, ValueError, MemoryError) as exc:
        return ScanPoint(float(n), {}, float("nan"), True, f"{type(exc).__name__}: {exc}")


def temperature_scan(
    model_factory: Callable[[float], LindbladModel],
    n_grid: Sequence[float],
    pairs: Sequence[PairSpec],
    jobs: int = 1,
    resolution: float = RESOLUTION,
) -> AsymmetryScan:
    """Integrated asymmetry of every pair at each bath occupancy in ``n_grid``.

    Points are independent and may run in a process pool (``jobs > 1``; the
    factory and operators must then be picklable). A point that fails is
    flagged with its reason and the scan continues.
    """
    grid = np.asarray(n_grid, float)
    if grid.size == 0:
        raise ValueError("empty occupancy grid")
    if np.any(grid < 0):
        raise ValueError("occupancies must be non-negative")
    pairs = tuple(pairs)
    labels = tuple(p.label for p in pairs)
    if len(set(labels)) != len(labels):
        raise ValueError("pair labels must be unique")
    tasks = [(model_factory, float(n), pairs, resolution) for n in grid]
    if jobs > 1 and grid.size > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            points = list(ex.map(_scan_point, tasks))
    else:
        points = [_scan_point(t) for t in tasks]
    for p in points:
        if p.failed:
            warnings.warn(f"scan point n_th={p.n_th} failed: {p.reason}", RuntimeWarning, stacklevel=2)
    return AsymmetryScan(grid, labels, tuple(points))
