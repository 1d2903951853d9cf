"""Thermofield-double purifications, the exchange map and doubled-system correlators."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .lindblad import LindbladModel, Propagator, steady_state
from .quantum_core import TOL_RANK, RankError, as_array, vectorize

TOL_DEGENERACY = 1e-10


@dataclass(frozen=True, eq=False)
class AntiUnitary:
    """``T = V K`` with ``K`` complex conjugation in a declared basis.

    ``basis`` holds the conjugation basis as columns (``None`` means the
    computational basis). ``T|phi> = V B (B^dag phi)^*`` and in computational
    form ``T = V_z K_z`` with ``V_z = V B B^T``.
    """

    V: np.ndarray
    basis: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        V = np.array(as_array(self.V), dtype=complex)
        err = np.linalg.norm(V.conj().T @ V - np.eye(V.shape[0]))
        if err > 1e-10:
            raise ValueError(f"V is not unitary (residual {err:.3e})")
        object.__setattr__(self, "V", V)
        if self.basis is not None:
            object.__setattr__(self, "basis", np.array(self.basis, dtype=complex))

    @property
    def conjugation_basis(self) -> str:
        return "computational" if self.basis is None else "rho_eigenbasis"

    @property
    def unitary_z(self) -> np.ndarray:
        if self.basis is None:
            return self.V
        B = self.basis
        return self.V @ B @ B.T

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.unitary_z @ np.conj(v)

    def conjugate(self, X) -> np.ndarray:
        """``T X T^{-1}``."""
        Vz = self.unitary_z
        return Vz @ np.conj(as_array(X)) @ Vz.conj().T

    def in_basis(self, basis: np.ndarray | None) -> "AntiUnitary":
        """Same anti-unitary, re-expressed with conjugation in ``basis``."""
        Vz = self.unitary_z
        if basis is None:
            return AntiUnitary(Vz, None, self.label)
        B = np.asarray(basis, complex)
        return AntiUnitary(Vz @ B.conj() @ B.conj().T, B, self.label)

    @classmethod
    def complex_conjugation(cls, d: int, basis: np.ndarray | None = None) -> "AntiUnitary":
        return cls(np.eye(d), basis, "K")


def rho_eigenbasis(rho, tol_degeneracy: float = TOL_DEGENERACY, warn: bool = True):
    """Eigenvalues (descending) and eigenvectors of ``rho`` with a fixed gauge.

    Each eigenvector's largest-magnitude component is made real positive so
    that the basis is reproducible.
    """
    m = as_array(rho)
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    w, v = w[::-1], v[:, ::-1]
    for k in range(v.shape[1]):
        j = np.argmax(np.abs(v[:, k]))
        v[:, k] *= np.exp(-1j * np.angle(v[j, k]))
    if warn and w.size > 1:
        gaps = np.abs(np.diff(w)) / max(abs(w[0]), 1e-300)
        if gaps.min() < tol_degeneracy:
            warnings.warn("steady-state spectrum is degenerate; TFD gauge is ill-defined", RuntimeWarning, stacklevel=2)
    return w, v


@dataclass(frozen=True, eq=False)
class TfdState:
    """``|psi> = sum_ij Psi_ij |i>_A |j>_B`` purifying ``rho_ss``."""

    Psi: np.ndarray
    rho_ss: np.ndarray
    T: AntiUnitary | None = None

    @property
    def vector(self) -> np.ndarray:
        # row-major flattening matches the A-before-B kron ordering
        return self.Psi.reshape(-1)

    def reduced_A(self) -> np.ndarray:
        return self.Psi @ self.Psi.conj().T

    def reduced_B(self) -> np.ndarray:
        return self.Psi.T @ self.Psi.conj()

    def fidelity(self, other: "TfdState | np.ndarray") -> float:
        P = other.Psi if isinstance(other, TfdState) else np.asarray(other)
        a = self.Psi / np.linalg.norm(self.Psi)
        b = P / np.linalg.norm(P)
        return float(abs(np.vdot(a, b)) ** 2)


def _check_rank(rho: np.ndarray, tol_rank: float):
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if w[0] <= tol_rank:
        raise RankError(f"steady state is not full rank: smallest eigenvalue {w[0]:.3e}")
    return w


def build_tfd(
    rho_ss,
    T: AntiUnitary,
    tol_rank: float = TOL_RANK,
    tol_degeneracy: float = TOL_DEGENERACY,
    eigenbasis: np.ndarray | None = None,
) -> TfdState:
    """``Psi = rho^{1/2} V_z^T`` for ``T = V_z K_z``.

    This is ``sum_n sqrt(p_n) |n> (T|n>)`` written as a matrix and is
    independent of the phases chosen for the pointer states.
    """
    rho = as_array(rho_ss)
    w = _check_rank(rho, tol_rank)
    if eigenbasis is None and w.size > 1:
        gaps = np.abs(np.diff(w)) / w[-1]
        if gaps.min() < tol_degeneracy:
            raise ValueError(
                f"steady-state spectrum degenerate (relative gap {gaps.min():.2e}); "
                "supply an explicit eigenbasis"
            )
    if eigenbasis is not None:
        B = np.asarray(eigenbasis, complex)
        p = np.real(np.einsum("ik,ij,jk->k", B.conj(), rho, B))
        s = (B * np.sqrt(p)) @ B.conj().T
    else:
        ww, vv = np.linalg.eigh(0.5 * (rho + rho.conj().T))
        s = (vv * np.sqrt(ww)) @ vv.conj().T
    Psi = s @ T.unitary_z.T
    return TfdState(Psi, rho, T)


def check_trs_invariance(rho_ss, T: AntiUnitary) -> float:
    rho = as_array(rho_ss)
    return float(np.linalg.norm(T.conjugate(rho) - rho))


def _sqrt_pair(rho, tol_rank):
    w = _check_rank(rho, tol_rank)
    _, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    return (v * np.sqrt(w)) @ v.conj().T, (v / np.sqrt(w)) @ v.conj().T


class ExchangeMap:
    """``J[X] = rho^{1/2} (T X T^{-1})^dag rho^{-1/2}``.

    Defining property: ``J[X]_B |psi_T> = X_A |psi_T>`` whenever ``T`` leaves
    ``rho`` invariant.
    """

    def __init__(self, rho_ss, T: AntiUnitary, tol_rank: float = TOL_RANK):
        self.rho = as_array(rho_ss)
        self.T = T
        self.sqrt, self.inv_sqrt = _sqrt_pair(self.rho, tol_rank)

    def __call__(self, X) -> np.ndarray:
        Xt = self.T.conjugate(X)
        return self.sqrt @ Xt.conj().T @ self.inv_sqrt

    def matrix(self) -> np.ndarray:
        """Matrix of ``J`` on column-stacked vectors, ``vec(J[X]) = M @ vec(X)``.

        The two conjugations inside ``J`` (by ``T`` and by the adjoint) cancel,
        so the map is linear.
        """
        d = self.rho.shape[0]
        cols = []
        for k in range(d * d):
            E = np.zeros(d * d, complex)
            E[k] = 1.0
            X = E.reshape(d, d, order="F")
            cols.append(vectorize(self(X)))
        return np.array(cols).T


def exchange_superop(rho_ss, T: AntiUnitary, tol_rank: float = TOL_RANK) -> ExchangeMap:
    return ExchangeMap(rho_ss, T, tol_rank)


@dataclass(frozen=True, eq=False)
class TfdCorrelator:
    times: np.ndarray
    total: np.ndarray
    classical: np.ndarray
    entanglement: np.ndarray

    def asymmetry(self):
        """``C(t) - C(-t)`` for the three parts on the non-negative half of a symmetric grid."""
        t = self.times
        pos = t >= 0
        idx_neg = np.array([np.argmin(np.abs(t + s)) for s in t[pos]])
        if np.max(np.abs(t[idx_neg] + t[pos])) > 1e-12 * max(1.0, np.abs(t).max()):
            raise ValueError("time grid is not symmetric about zero")
        return (
            t[pos],
            self.total[pos] - self.total[idx_neg],
            self.classical[pos] - self.classical[idx_neg],
            self.entanglement[pos] - self.entanglement[idx_neg],
        )


def tfd_correlator(
    model: LindbladModel,
    tfd: TfdState,
    X,
    Y,
    times,
    connected: bool = False,
    propagator: Propagator | None = None,
    pointer_basis: np.ndarray | None = None,
) -> TfdCorrelator:
    """Doubled-system correlator ``<X_A(t) Y_B>`` (``t >= 0``) and ``<Y_A(-t) X_B>`` (``t < 0``).

    ``Tr_B(Y_B |psi><psi|) = Psi Y^T Psi^dag`` is evolved under the
    single-system Liouvillian. The classical part keeps only the diagonal of
    that operator in the pointer (``rho`` eigen-) basis; the entanglement part
    is the remainder.
    """
    X = as_array(X)
    Y = as_array(Y)
    if X.shape != tfd.Psi.shape or Y.shape != tfd.Psi.shape:
        raise ValueError("operator dimensions do not match the TFD state")
    t = np.asarray(times, float)
    prop = propagator or Propagator(model)
    Psi = tfd.Psi
    if pointer_basis is None:
        _, W = rho_eigenbasis(tfd.rho_ss, warn=False)
    else:
        W = np.asarray(pointer_basis, complex)

    def pieces(A, B, tt):
        Z = Psi @ B.T @ Psi.conj().T
        Zw = W.conj().T @ Z @ W
        Zcl = W @ np.diag(np.diag(Zw)) @ W.conj().T
        tot = prop.evaluate(A, Z, tt)
        cl = prop.evaluate(A, Zcl, tt)
        if connected:
            rho = tfd.rho_ss
            # <A><B_B> with the B marginal
            c0 = np.trace(A @ rho) * np.trace(B @ tfd.reduced_B())
            tot = tot - c0
            cl = cl - c0
        return tot, cl

    total = np.empty(t.size, complex)
    cl = np.empty(t.size, complex)
    pos = t >= 0
    total[pos], cl[pos] = pieces(X, Y, t[pos])
    total[~pos], cl[~pos] = pieces(Y, X, -t[~pos])
    return TfdCorrelator(t, total, cl, total - cl)


def tfd_from_model(model: LindbladModel, T: AntiUnitary) -> TfdState:
    return build_tfd(steady_state(model).rho, T)


def marginal_drift(model: LindbladModel, tfd: TfdState, X, times, propagator: Propagator | None = None) -> np.ndarray:
    """``<X_A>(t) - <X_A>(0)`` under ``e^{(L kron 1) t}`` started in the TFD state."""
    prop = propagator or Propagator(model)
    rhoA = tfd.reduced_A()
    X = as_array(X)
    vals = prop.evaluate(X, rhoA, np.asarray(times, float))
    return vals - np.trace(X @ rhoA)


def family_tfds(rho_ss, family: Callable[[float], AntiUnitary], params) -> list[TfdState]:
    return [build_tfd(rho_ss, family(p)) for p in params]
