"""Liouvillian construction, steady states, spectra and two-time correlators."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .quantum_core import (
    TOL_HERM,
    DensityMatrix,
    HilbertSpace,
    Operator,
    as_array,
    devectorize,
    vectorize,
)

TOL_NULL = 1e-10
COND_MAX = 1e8
MAX_LIOUVILLE_DIM = 4096


class NumericalError(RuntimeError):
    """A numerical routine failed to meet its accuracy contract."""


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Hamiltonian plus jump operators (rates absorbed into the jumps).

    With ``traceless=True`` every jump ``c`` is replaced by ``c - mu`` with
    ``mu = Tr(c)/d`` and the Hamiltonian picks up the compensating term
    ``+(i/2) sum(mu* c - mu c^dag)``; the master equation is unchanged and the
    scalar shifts are kept in ``jump_shifts``.
    """

    space: HilbertSpace
    H: np.ndarray
    jumps: tuple[np.ndarray, ...]
    traceless: bool = True
    jump_shifts: tuple[complex, ...] = field(default=(), init=False)
    name: str = ""

    def __post_init__(self):
        H = np.array(as_array(self.H), dtype=complex)
        d = self.space.total_dim
        if H.shape != (d, d):
            raise ValueError("Hamiltonian dimension does not match the space")
        herm = np.linalg.norm(H - H.conj().T)
        if herm > TOL_HERM * max(1.0, np.linalg.norm(H)):
            raise ValueError(f"Hamiltonian is not Hermitian (residual {herm:.3e})")
        H = 0.5 * (H + H.conj().T)
        jumps = []
        shifts = []
        for c in self.jumps:
            c = np.array(as_array(c), dtype=complex)
            if c.shape != (d, d):
                raise ValueError("jump operator dimension does not match the space")
            mu = np.trace(c) / d if self.traceless else 0.0
            if mu != 0:
                c = c - mu * np.eye(d)
                H = H + 0.5j * (np.conj(mu) * c - mu * c.conj().T)
            jumps.append(c)
            shifts.append(complex(mu))
        H.setflags(write=False)
        for c in jumps:
            c.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "jumps", tuple(jumps))
        object.__setattr__(self, "jump_shifts", tuple(shifts))

    @classmethod
    def from_arrays(cls, H, jumps: Sequence, space: HilbertSpace | None = None, **kw):
        H = as_array(H)
        return cls(space or HilbertSpace.single(H.shape[0]), H, tuple(jumps), **kw)

    @property
    def dim(self) -> int:
        return self.space.total_dim

    @property
    def n_jumps(self) -> int:
        return len(self.jumps)


@dataclass(frozen=True, eq=False)
class Superoperator:
    space: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self):
        d = self.space.total_dim
        if self.matrix.shape != (d * d, d * d):
            raise ValueError("superoperator dimension inconsistent with space")

    def apply(self, op) -> Operator:
        return devectorize(self.matrix @ vectorize(op), self.space)


@dataclass(frozen=True, eq=False)
class LiouvillianSpectrum:
    """Eigenvalues with biorthonormal right/left modes, ``Tr(l_j^dag r_k) = delta_jk``.

    ``right`` holds vectorized right modes as columns; ``left_dual`` holds the
    rows ``vec(l_k)^dag`` so that ``left_dual @ vec(X)`` gives ``Tr(l_k^dag X)``.
    """

    space: HilbertSpace
    eigenvalues: np.ndarray
    right: np.ndarray
    left_dual: np.ndarray
    condition: float
    exceptional_pairs: tuple[tuple[int, int], ...] = ()

    def right_mode(self, k: int) -> np.ndarray:
        return self.right[:, k].reshape(self.space.total_dim, -1, order="F")

    def left_mode(self, k: int) -> np.ndarray:
        d = self.space.total_dim
        return self.left_dual[k].conj().reshape(d, d, order="F")

    @property
    def well_conditioned(self) -> bool:
        return self.condition <= COND_MAX

    def zero_modes(self, tol: float = 1e-9) -> np.ndarray:
        scale = max(1.0, np.abs(self.eigenvalues).max())
        return np.flatnonzero(np.abs(self.eigenvalues) < tol * scale)

    def gap(self) -> float:
        """Smallest nonzero ``|Re lambda|`` (the dissipative gap)."""
        re = -self.eigenvalues.real
        nz = np.ones(re.size, bool)
        nz[self.zero_modes()] = False
        return float(re[nz].min()) if nz.any() else 0.0


@dataclass(frozen=True, eq=False)
class CorrelatorTrace:
    times: np.ndarray
    values: np.ndarray
    labels: tuple[str, str] = ("X", "Y")

    def __post_init__(self):
        t = np.asarray(self.times, float)
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("correlator times must be strictly increasing")


def effective_hamiltonian(model: LindbladModel) -> np.ndarray:
    H = model.H.copy()
    for c in model.jumps:
        H = H - 0.5j * (c.conj().T @ c)
    return H


def _liouvillian_matrix(H: np.ndarray, jumps: Sequence[np.ndarray]) -> np.ndarray:
    d = H.shape[0]
    I = np.eye(d)
    Heff = H - 0.5j * sum((c.conj().T @ c for c in jumps), np.zeros_like(H))
    # vec(A X B) = (B^T kron A) vec(X)
    L = -1j * (np.kron(I, Heff) - np.kron(Heff.conj(), I))
    for c in jumps:
        L += np.kron(c.conj(), c)
    return L


def build_liouvillian(model: LindbladModel) -> Superoperator:
    return Superoperator(model.space, _liouvillian_matrix(model.H, model.jumps))


def build_adjoint(model: LindbladModel) -> Superoperator:
    d = model.dim
    I = np.eye(d)
    Heff = effective_hamiltonian(model)
    Hd = Heff.conj().T
    M = 1j * (np.kron(I, Hd) - np.kron(Heff.T, I))
    for c in model.jumps:
        M += np.kron(c.T, c.conj().T)
    return Superoperator(model.space, M)


@dataclass(frozen=True, eq=False)
class SteadyStateResult:
    rho: DensityMatrix
    multiplicity: int
    residual: float
    kernel_basis: tuple[np.ndarray, ...] = ()

    def __iter__(self):
        # allows ``rho, mult = steady_state(model)``
        return iter((self.rho, self.multiplicity))


def _hermitian_kernel_basis(vecs: np.ndarray, d: int) -> list[np.ndarray]:
    """Orthonormal Hermitian basis of the span of the given vectorized operators."""
    mats = [v.reshape(d, d, order="F") for v in vecs.T]
    herm = []
    for m in mats:
        herm.append(0.5 * (m + m.conj().T))
        herm.append(-0.5j * (m - m.conj().T))
    A = np.array([vectorize(h) for h in herm]).T
    # real-linear combinations of Hermitian matrices stay Hermitian
    Ar = np.vstack([A.real, A.imag])
    u, s, _ = np.linalg.svd(Ar, full_matrices=False)
    k = vecs.shape[1]
    basis = []
    for j in range(k):
        col = u[:, j]
        v = col[: d * d] + 1j * col[d * d:]
        m = v.reshape(d, d, order="F")
        m = 0.5 * (m + m.conj().T)
        basis.append(m / np.linalg.norm(m))
    return basis


def steady_state(
    model: LindbladModel,
    tol_null: float = TOL_NULL,
    L: np.ndarray | None = None,
) -> SteadyStateResult:
    """Kernel of the Liouvillian from its singular value decomposition.

    The multiplicity is the number of singular values below
    ``tol_null * sigma_max``; for a degenerate kernel an orthonormal Hermitian
    basis is returned in ``kernel_basis`` and ``rho`` is their (normalized)
    trace-carrying member, which the caller may replace.
    """
    d = model.dim
    if L is None:
        L = build_liouvillian(model).matrix
    _, s, vh = np.linalg.svd(L)
    smax = s[0]
    mult = int(np.sum(s <= tol_null * smax))
    if mult == 0:
        raise NumericalError(
            f"no Liouvillian null vector: smallest singular value {s[-1]:.3e} "
            f"exceeds {tol_null:.1e} * sigma_max"
        )
    vecs = vh[-mult:].conj().T
    if mult == 1:
        r = vecs[:, 0].reshape(d, d, order="F")
        tr = np.trace(r)
        r = r / tr
        r = 0.5 * (r + r.conj().T)
        basis = (r / np.linalg.norm(r),)
    else:
        basis = tuple(_hermitian_kernel_basis(vecs, d))
        traces = np.array([np.trace(b).real for b in basis])
        # pick the combination carrying unit trace with minimal norm
        r = sum(t * b for t, b in zip(traces, basis)) / np.sum(traces**2)
        r = 0.5 * (r + r.conj().T)
    res = float(np.linalg.norm(L @ vectorize(r)))
    return SteadyStateResult(DensityMatrix(Operator(model.space, r)), mult, res, basis)


def _detect_exceptional(lam: np.ndarray, R: np.ndarray, tol: float = 1e-6):
    scale = max(1.0, np.abs(lam).max())
    Rn = R / np.linalg.norm(R, axis=0)
    # sweep in order of real part so only near neighbours are compared
    order = np.argsort(lam.real)
    pairs = []
    for a in range(order.size):
        i = order[a]
        for b in range(a + 1, order.size):
            j = order[b]
            if lam[j].real - lam[i].real > tol * scale:
                break
            if abs(lam[i] - lam[j]) < tol * scale and abs(np.vdot(Rn[:, i], Rn[:, j])) > 1 - tol:
                pairs.append((int(min(i, j)), int(max(i, j))))
    return tuple(sorted(pairs))


def spectrum(model: LindbladModel, max_dim: int = MAX_LIOUVILLE_DIM, L: np.ndarray | None = None) -> LiouvillianSpectrum:
    """Full eigendecomposition of the Liouvillian with biorthonormal modes.

    The left duals are the rows of ``R^{-1}``; ``condition`` is the 2-norm
    condition number of the right eigenvector matrix.  Near an exceptional
    point this blows up, and nearly coalescing pairs with nearly parallel
    eigenvectors are reported in ``exceptional_pairs``.
    """
    d = model.dim
    if d * d > max_dim:
        raise ValueError(f"Liouville dimension {d * d} exceeds the configured maximum {max_dim}")
    if L is None:
        L = build_liouvillian(model).matrix
    lam, R = sla.eig(L)
    order = np.lexsort((lam.imag, -lam.real))
    lam, R = lam[order], R[:, order]
    R = R / np.linalg.norm(R, axis=0)
    cond = float(np.linalg.cond(R))
    try:
        Linv = np.linalg.solve(R, np.eye(R.shape[0]))
    except np.linalg.LinAlgError:
        Linv = np.linalg.pinv(R)
        cond = np.inf
    exc = _detect_exceptional(lam, R)
    return LiouvillianSpectrum(model.space, lam, R, Linv, cond, exc)


class Propagator:
    """Evaluate ``Tr(X e^{Lt}[Z])`` by spectral sums, or by ``expm`` when ill-conditioned."""

    def __init__(self, model: LindbladModel, spec: LiouvillianSpectrum | None = None, L: np.ndarray | None = None):
        self.model = model
        self.L = build_liouvillian(model).matrix if L is None else L
        self.spec = spectrum(model, L=self.L) if spec is None else spec
        self.use_spectral = self.spec.well_conditioned

    def amplitudes(self, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
        """Coefficients ``A_k`` with ``Tr(X e^{Lt}[Z]) = sum_k A_k exp(lambda_k t)``."""
        xr = vectorize(X.T) @ self.spec.right  # Tr(X r_k)
        zl = self.spec.left_dual @ vectorize(Z)  # Tr(l_k^dag Z)
        return xr * zl

    def evaluate(self, X: np.ndarray, Z: np.ndarray, times: np.ndarray) -> np.ndarray:
        times = np.asarray(times, float)
        if self.use_spectral:
            A = self.amplitudes(X, Z)
            return np.exp(np.outer(times, self.spec.eigenvalues)) @ A
        return self._evaluate_expm(X, Z, times)

    def _evaluate_expm(self, X, Z, times):
        out = np.empty(times.size, complex)
        xv = vectorize(X.T)
        zv = vectorize(Z)
        order = np.argsort(times)
        t_prev = 0.0
        state = zv.copy()
        cache: dict[float, np.ndarray] = {}
        for idx in order:
            t = times[idx]
            dt = t - t_prev
            # uniform grids reuse one step propagator
            key = round(dt, 12)
            if key not in cache:
                cache[key] = sla.expm(self.L * dt)
            state = cache[key] @ state
            t_prev = t
            out[idx] = xv @ state
        return out


def _check_times(times, allow_negative=False):
    t = np.asarray(times, float)
    if not allow_negative and np.any(t < 0):
        raise ValueError("times must be non-negative")
    return t


def correlator(
    model: LindbladModel,
    X,
    Y,
    times,
    connected: bool = False,
    rho_ss: np.ndarray | None = None,
    propagator: Propagator | None = None,
    labels: tuple[str, str] = ("X", "Y"),
) -> CorrelatorTrace:
    """``C(t) = Tr(X e^{Lt}[Y rho_ss])`` for ``t >= 0``."""
    t = _check_times(times)
    prop = propagator or Propagator(model)
    if prop.spec.zero_modes().size == 0:
        raise NumericalError("model has no stationary mode")
    rho = as_array(rho_ss) if rho_ss is not None else as_array(steady_state(model).rho)
    X = as_array(X)
    Y = as_array(Y)
    vals = prop.evaluate(X, Y @ rho, t)
    if connected:
        vals = vals - np.trace(X @ rho) * np.trace(Y @ rho)
    return CorrelatorTrace(t, vals, labels)


def conjugate_by(T_unitary: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``T X T^{-1}`` for the anti-unitary ``T = V K`` in the computational basis."""
    return T_unitary @ X.conj() @ T_unitary.conj().T


def two_sided_correlator(
    model: LindbladModel,
    X,
    Y,
    T_unitary: np.ndarray | None,
    times,
    connected: bool = False,
    rho_ss: np.ndarray | None = None,
    propagator: Propagator | None = None,
    tol_invariance: float = 1e-8,
) -> CorrelatorTrace:
    """``C(t>=0) = <X(t) Y>`` and ``C(t<0) = <Y~(-t) X~>`` with ``O~ = T O T^{-1}``.

    ``T_unitary`` is the unitary factor of ``T = V K_z`` in the computational
    basis; ``None`` means plain complex conjugation.
    """
    t = _check_times(times, allow_negative=True)
    prop = propagator or Propagator(model)
    rho = as_array(rho_ss) if rho_ss is not None else as_array(steady_state(model).rho)
    X = as_array(X)
    Y = as_array(Y)
    V = np.eye(model.dim) if T_unitary is None else as_array(T_unitary)
    inv = np.linalg.norm(conjugate_by(V, rho) - rho)
    if inv > tol_invariance:
        warnings.warn(f"T does not leave the steady state invariant (residual {inv:.3e})", RuntimeWarning, stacklevel=2)
    Xt = conjugate_by(V, X)
    Yt = conjugate_by(V, Y)
    out = np.empty(t.size, complex)
    pos = t >= 0
    out[pos] = prop.evaluate(X, Y @ rho, t[pos])
    out[~pos] = prop.evaluate(Yt, Xt @ rho, -t[~pos])
    if connected:
        out[pos] -= np.trace(X @ rho) * np.trace(Y @ rho)
        out[~pos] -= np.trace(Yt @ rho) * np.trace(Xt @ rho)
    return CorrelatorTrace(t, out)
