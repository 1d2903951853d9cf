"""Hilbert-space bookkeeping, operators, vectorization and phase-space rendering.

Conventions used throughout the package:

* vectorization is column stacking, so ``|i><j|`` maps to index ``i + j*d`` and
  ``vec(A X B) = (B^T kron A) vec(X)``;
* in a doubled space subsystem A is factor 0 and subsystem B is factor 1;
* qubit basis order is ``(|e>, |g>)`` with ``sz|e> = +|e>`` and ``sm = |g><e|``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import prod
from typing import Sequence, Union

import numpy as np

TOL_HERM = 1e-10
TOL_TRACE = 1e-10
TOL_PSD = 1e-9
TOL_RANK = 1e-12
TOL_NORM = 1e-12


class RankError(ValueError):
    """Raised when a density matrix is not full rank within tolerance."""


@dataclass(frozen=True)
class HilbertSpace:
    subsystem_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.subsystem_dims)
        if not dims:
            raise ValueError("subsystem_dims must be nonempty")
        if any(d < 2 for d in dims):
            raise ValueError(f"every subsystem needs dimension >= 2, got {dims}")
        object.__setattr__(self, "subsystem_dims", dims)

    @property
    def total_dim(self) -> int:
        return prod(self.subsystem_dims)

    def doubled(self) -> "HilbertSpace":
        return HilbertSpace(self.subsystem_dims + self.subsystem_dims)

    @classmethod
    def single(cls, d: int) -> "HilbertSpace":
        return cls((d,))


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense complex square matrix tagged with its Hilbert space."""

    space: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.space.total_dim
        if m.shape != (d, d):
            raise ValueError(f"matrix shape {m.shape} does not match dimension {d}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_matrix(cls, m, space: HilbertSpace | None = None) -> "Operator":
        m = np.asarray(m, dtype=complex)
        return cls(space or HilbertSpace.single(m.shape[0]), m)

    @property
    def dim(self) -> int:
        return self.space.total_dim

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    def _other(self, other):
        return other.matrix if isinstance(other, Operator) else other

    def __matmul__(self, other):
        return Operator(self.space, self.matrix @ self._other(other))

    def __add__(self, other):
        return Operator(self.space, self.matrix + self._other(other))

    def __sub__(self, other):
        return Operator(self.space, self.matrix - self._other(other))

    def __mul__(self, scalar):
        return Operator(self.space, self.matrix * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return Operator(self.space, -self.matrix)

    def __pow__(self, n: int):
        return Operator(self.space, np.linalg.matrix_power(self.matrix, int(n)))


OperatorLike = Union[Operator, np.ndarray]


def as_array(op: OperatorLike) -> np.ndarray:
    """Return the complex matrix behind an operator-like argument."""
    if isinstance(op, Operator):
        return op.matrix
    if isinstance(op, DensityMatrix):
        return op.op.matrix
    return np.asarray(op, dtype=complex)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    op: Operator
    tol_herm: float = TOL_HERM
    tol_trace: float = TOL_TRACE
    tol_psd: float = TOL_PSD

    def __post_init__(self):
        m = self.op.matrix
        scale = max(1.0, np.linalg.norm(m))
        herm_err = np.linalg.norm(m - m.conj().T)
        if herm_err > self.tol_herm * scale:
            raise ValueError(f"density matrix not Hermitian (residual {herm_err:.3e})")
        tr = np.trace(m)
        if abs(tr - 1) > self.tol_trace:
            raise ValueError(f"density matrix trace {tr:.12g} differs from 1")
        emin = np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0]
        if emin < -self.tol_psd:
            raise ValueError(f"density matrix not positive (min eigenvalue {emin:.3e})")

    @classmethod
    def from_matrix(cls, m, space: HilbertSpace | None = None, **tols) -> "DensityMatrix":
        return cls(Operator.from_matrix(m, space), **tols)

    @property
    def matrix(self) -> np.ndarray:
        return self.op.matrix

    @property
    def space(self) -> HilbertSpace:
        return self.op.space

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


@dataclass(frozen=True, eq=False)
class StateVector:
    space: HilbertSpace
    amplitudes: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.amplitudes, dtype=complex).ravel()
        if v.size != self.space.total_dim:
            raise ValueError("amplitude vector length does not match the space")
        v.setflags(write=False)
        object.__setattr__(self, "amplitudes", v)

    def normalized(self) -> "StateVector":
        n = np.linalg.norm(self.amplitudes)
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.space, self.amplitudes / n)

    def projector(self) -> Operator:
        v = self.amplitudes
        return Operator(self.space, np.outer(v, v.conj()))

    def density_matrix(self) -> DensityMatrix:
        s = self.normalized()
        return DensityMatrix(s.projector())


def to_density(rho, space: HilbertSpace | None = None) -> DensityMatrix:
    if isinstance(rho, DensityMatrix):
        return rho
    if isinstance(rho, StateVector):
        return rho.density_matrix()
    if isinstance(rho, Operator):
        return DensityMatrix(rho)
    return DensityMatrix.from_matrix(rho, space)


def annihilation_op(n_max: int) -> Operator:
    """Truncated bosonic lowering operator on ``n_max`` Fock levels."""
    if int(n_max) < 2:
        raise ValueError(f"invalid truncation n_max={n_max}; need n_max >= 2")
    n_max = int(n_max)
    return Operator(HilbertSpace.single(n_max), np.diag(np.sqrt(np.arange(1, n_max)), 1))


def number_op(n_max: int) -> Operator:
    return Operator(HilbertSpace.single(n_max), np.diag(np.arange(n_max, dtype=float)))


def pauli_ops() -> tuple[Operator, Operator, Operator, Operator, Operator]:
    """Return ``(sx, sy, sz, sm, sp)`` in the ``(|e>, |g>)`` basis."""
    q = HilbertSpace.single(2)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.diag([1.0, -1.0]).astype(complex)
    sm = np.array([[0, 0], [1, 0]], dtype=complex)
    return tuple(Operator(q, m) for m in (sx, sy, sz, sm, sm.T.copy()))


def identity(space: HilbertSpace) -> Operator:
    return Operator(space, np.eye(space.total_dim))


def embed(op: OperatorLike, subsystem_index: int, target: HilbertSpace) -> Operator:
    """Tensor ``op`` into ``target`` at ``subsystem_index`` with identities elsewhere."""
    m = as_array(op)
    dims = target.subsystem_dims
    if not 0 <= subsystem_index < len(dims):
        raise IndexError(f"subsystem index {subsystem_index} out of range for {dims}")
    if m.shape != (dims[subsystem_index],) * 2:
        raise ValueError(
            f"operator dimension {m.shape[0]} does not match subsystem {subsystem_index} "
            f"of dimension {dims[subsystem_index]}"
        )
    left = prod(dims[:subsystem_index])
    right = prod(dims[subsystem_index + 1:])
    out = np.kron(np.kron(np.eye(left), m), np.eye(right))
    return Operator(target, out)


def partial_trace(rho, keep: int | Sequence[int], space: HilbertSpace | None = None) -> DensityMatrix:
    """Reduced density matrix on the subsystems listed in ``keep``."""
    rho = rho if isinstance(rho, (DensityMatrix, Operator)) else np.asarray(rho)
    m = as_array(rho)
    if space is None:
        space = rho.space if isinstance(rho, (DensityMatrix, Operator)) else None
    if space is None:
        raise ValueError("partial_trace needs a HilbertSpace for raw arrays")
    dims = space.subsystem_dims
    if len(dims) < 2:
        raise ValueError("partial_trace needs at least two subsystems")
    keep = [keep] if np.isscalar(keep) else list(keep)
    if any(not 0 <= k < len(dims) for k in keep):
        raise IndexError(f"invalid subsystem index in {keep} for dims {dims}")
    n = len(dims)
    t = m.reshape(dims + dims)
    drop = [k for k in range(n) if k not in keep]
    # trace out from the highest index down so the axis bookkeeping stays simple
    for k in sorted(drop, reverse=True):
        nk = t.ndim // 2
        t = np.trace(t, axis1=k, axis2=k + nk)
    kd = tuple(dims[k] for k in sorted(keep))
    dk = prod(kd)
    out = t.reshape(dk, dk)
    return DensityMatrix(Operator(HilbertSpace(kd), out))


def reduced_state(m: np.ndarray, dims: Sequence[int], keep: int) -> np.ndarray:
    """Array-level partial trace without density-matrix validation."""
    return _ptrace_array(np.asarray(m), tuple(dims), keep)


def _ptrace_array(m: np.ndarray, dims: tuple[int, ...], keep: int) -> np.ndarray:
    n = len(dims)
    t = m.reshape(dims + dims)
    for k in range(n - 1, -1, -1):
        if k == keep:
            continue
        nk = t.ndim // 2
        t = np.trace(t, axis1=k, axis2=k + nk)
    return t.reshape(dims[keep], dims[keep])


def vectorize(op: OperatorLike) -> np.ndarray:
    return np.asarray(as_array(op)).reshape(-1, order="F")


def devectorize(v: np.ndarray, space: HilbertSpace | None = None) -> Operator:
    v = np.asarray(v, dtype=complex).ravel()
    d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise ValueError(f"vector length {v.size} is not a perfect square")
    space = space or HilbertSpace.single(d)
    if space.total_dim != d:
        raise ValueError("space dimension does not match vector length")
    return Operator(space, v.reshape(d, d, order="F"))


def _eigh_checked(rho, tol_rank: float):
    m = as_array(rho)
    m = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(m)
    if w[0] <= tol_rank:
        raise RankError(f"density matrix is not full rank: smallest eigenvalue {w[0]:.3e}")
    return w, v


def matrix_sqrt(rho, tol_rank: float = TOL_RANK) -> Operator:
    """Principal square root of a full-rank density matrix."""
    w, v = _eigh_checked(rho, tol_rank)
    space = rho.space if isinstance(rho, (DensityMatrix, Operator)) else None
    return Operator.from_matrix((v * np.sqrt(w)) @ v.conj().T, space)


def matrix_inv_sqrt(rho, tol_rank: float = TOL_RANK) -> Operator:
    w, v = _eigh_checked(rho, tol_rank)
    space = rho.space if isinstance(rho, (DensityMatrix, Operator)) else None
    return Operator.from_matrix((v / np.sqrt(w)) @ v.conj().T, space)


def coherent_state(alpha: complex, n_max: int) -> StateVector:
    """Truncated coherent state, renormalized on the kept levels."""
    from scipy.special import gammaln

    n = np.arange(n_max)
    if alpha == 0:
        amp = np.zeros(n_max, complex)
        amp[0] = 1.0
    else:
        logamp = n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1) - 0.5 * abs(alpha) ** 2
        amp = np.exp(logamp + 1j * n * np.angle(alpha))
    return StateVector(HilbertSpace.single(n_max), amp).normalized()


def fock_state(n: int, n_max: int) -> StateVector:
    amp = np.zeros(n_max, complex)
    amp[n] = 1.0
    return StateVector(HilbertSpace.single(n_max), amp)


def wigner(state, xvec: np.ndarray, pvec: np.ndarray, warn: bool = True) -> np.ndarray:
    """Wigner function on the grid ``W[ip, ix]`` with ``int W dx dp = 1``.

    Uses the displaced-parity expectation ``W = (2/pi) Tr[rho D(a) P D(-a)]``
    with ``a = (x + i p)/sqrt(2)``; the Fock matrix elements of the displaced
    parity are summed by a Laguerre recurrence, so no truncated displacement
    operator is ever formed.
    """
    from ._kernels import wigner_grid

    if isinstance(state, StateVector):
        v = state.normalized().amplitudes
        rho = np.outer(v, v.conj())
    else:
        rho = as_array(state)
    n_max = rho.shape[0]
    xvec = np.asarray(xvec, float)
    pvec = np.asarray(pvec, float)
    X, P = np.meshgrid(xvec, pvec)
    alpha = (X + 1j * P) / np.sqrt(2)
    amax = float(np.max(np.abs(alpha)) ** 2)
    if warn and amax > 0.5 * n_max:
        warnings.warn(
            f"Wigner grid reaches |alpha|^2 = {amax:.3g} > 0.5*n_max = {0.5 * n_max:.3g}; "
            "values near the edge are outside the truncation's validity",
            RuntimeWarning,
            stacklevel=2,
        )
    return wigner_grid(np.ascontiguousarray(rho, dtype=complex), alpha)
