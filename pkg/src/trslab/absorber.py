"""Coherent quantum absorber: cascaded doubled system and its pure dark state.

System ``B`` sits downstream of ``A``. Its jumps are ``d_l = sum_k U_lk c_k``
and the coupled Hamiltonian is

    H_AB = H_A - H_B - (i/2) sum_l (c_{l,A}^dag d_{l,B} - h.c.)

with collective jumps ``C_l = c_{l,A} - d_{l,B}``. A hidden-symmetry TFD with
shift ``E`` is annihilated by every ``C_l`` and satisfies
``H_AB |psi> = -E |psi>``; the shift is stored as ``E_shift = -E`` so that
``H_AB - E_shift`` annihilates the dark state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .lindblad import LindbladModel, steady_state
from .quantum_core import (
    TOL_HERM,
    DensityMatrix,
    HilbertSpace,
    Operator,
    StateVector,
)

TOL_DARK = 1e-9
TOL_E_REL = 1e-8
MEMORY_CEILING = 4 * 2**30
TOL_CONVERGENCE = 1e-8


class NoDarkStateError(RuntimeError):
    pass


class AmbiguousDarkStateError(RuntimeError):
    pass


def doubled_memory_bytes(d: int) -> int:
    """Bytes for one dense complex operator on the doubled space (``16 d^4``)."""
    return 16 * d**4


def _check_memory(d: int, ceiling: int):
    need = doubled_memory_bytes(d)
    if need > ceiling:
        raise MemoryError(f"doubled-space operator needs {need / 2**30:.2f} GiB, above the ceiling of {ceiling / 2**30:.2f} GiB")


@dataclass(frozen=True, eq=False)
class CascadedSystem:
    space: HilbertSpace
    H_AB: np.ndarray
    collective_jumps: tuple[np.ndarray, ...]
    E_shift: float
    U: np.ndarray
    single_dim: int

    @property
    def H_shifted(self) -> np.ndarray:
        """``H_AB - E_shift``, whose kernel holds the dark state."""
        return self.H_AB - self.E_shift * np.eye(self.H_AB.shape[0])

    def liouvillian_action(self, rho: np.ndarray) -> np.ndarray:
        """Cascaded master-equation right-hand side applied to a doubled-space ``rho``."""
        H = self.H_AB
        out = -1j * (H @ rho - rho @ H)
        for C in self.collective_jumps:
            CdC = C.conj().T @ C
            out += C @ rho @ C.conj().T - 0.5 * (CdC @ rho + rho @ CdC)
        return out


def _check_involutory(U, tol=1e-8):
    U = np.atleast_2d(np.asarray(U, complex))
    eye = np.eye(U.shape[0])
    err = max(np.linalg.norm(U @ U.conj().T - eye), np.linalg.norm(U @ U - eye))
    if err > tol:
        raise ValueError(f"U is not an involutory unitary (residual {err:.3e})")
    return U


def build_cascaded(model: LindbladModel, U, E: float = 0.0, memory_ceiling: int = MEMORY_CEILING) -> CascadedSystem:
    """Cascaded system-plus-absorber for mixing matrix ``U`` and shift ``E``."""
    U = _check_involutory(U)
    M = model.n_jumps
    if U.shape != (M, M):
        raise ValueError(f"U must be {M}x{M} for this model")
    d = model.dim
    _check_memory(d, memory_ceiling)
    eye = np.eye(d)
    H = model.H
    H_AB = np.kron(H, eye) - np.kron(eye, H)
    jumps = model.jumps
    Cs = []
    for l, c in enumerate(jumps):
        dl = sum(U[l, k] * jumps[k] for k in range(M))
        cA = np.kron(c, eye)
        dB = np.kron(eye, dl)
        X = cA.conj().T @ dB
        H_AB = H_AB - 0.5j * (X - X.conj().T)
        Cs.append(cA - dB)
    herm = np.linalg.norm(H_AB - H_AB.conj().T)
    if herm > TOL_HERM * max(1.0, np.linalg.norm(H_AB)):
        raise ValueError("cascaded Hamiltonian is not Hermitian")
    H_AB = 0.5 * (H_AB + H_AB.conj().T)
    return CascadedSystem(model.space.doubled(), H_AB, tuple(Cs), -float(E), U, d)


def _phase_fix(v: np.ndarray) -> np.ndarray:
    j = np.argmax(np.abs(v))
    return v * np.exp(-1j * np.angle(v[j]))


def dark_state(cascaded: CascadedSystem, tol: float = TOL_DARK, match_shift: bool = True) -> list[StateVector]:
    """Pure states annihilated by every collective jump with ``H_AB`` eigenvalue ``E_shift``.

    Kernel first: the joint kernel of the ``C_l`` is computed by SVD, then
    ``(H_AB - E_shift)`` is solved inside it. With ``match_shift=False`` any
    real eigenvalue of ``H_AB`` on the kernel is accepted instead.
    """
    D = cascaded.H_AB.shape[0]
    if cascaded.collective_jumps:
        A = np.vstack(cascaded.collective_jumps)
        _, s, vh = np.linalg.svd(A, full_matrices=True)
        full = np.zeros(D)
        full[: s.size] = s
        scale = max(s[0], 1e-300)
        Q = vh[full <= tol * scale].conj().T
    else:
        Q = np.eye(D, dtype=complex)
    if Q.shape[1] == 0:
        return []
    hnorm = max(np.linalg.norm(cascaded.H_AB, 2), 1.0)
    HQ = cascaded.H_AB @ Q
    if match_shift:
        shifts = [cascaded.E_shift]
    else:
        shifts = sorted({round(float(e.real), 12) for e in np.linalg.eigvals(Q.conj().T @ HQ)})
    out = []
    for e in shifts:
        _, sv, vh2 = np.linalg.svd(HQ - e * Q, full_matrices=False)
        keep = sv / hnorm <= tol
        for x in vh2[keep]:
            v = _phase_fix(Q @ x.conj())
            out.append(StateVector(cascaded.space, v / np.linalg.norm(v)))
    return out


@dataclass(frozen=True)
class AbsorberResiduals:
    jumps: tuple[float, ...]
    hamiltonian: float
    liouvillian: float

    @property
    def max(self) -> float:
        return max((*self.jumps, self.hamiltonian, self.liouvillian))


def verify_absorber(cascaded: CascadedSystem, psi) -> AbsorberResiduals:
    """``||C_l psi||``, ``||(H_AB - E_shift) psi||`` and ``||L_casc[|psi><psi|]||_F``."""
    v = psi.amplitudes if isinstance(psi, StateVector) else np.asarray(psi, complex)
    v = v / np.linalg.norm(v)
    jr = tuple(float(np.linalg.norm(C @ v)) for C in cascaded.collective_jumps)
    hr = float(np.linalg.norm(cascaded.H_shifted @ v))
    rho = np.outer(v, v.conj())
    lr = float(np.linalg.norm(cascaded.liouvillian_action(rho)))
    return AbsorberResiduals(jr, hr, lr)


@dataclass(frozen=True, eq=False)
class CqaResult:
    rho: DensityMatrix
    dark: StateVector
    residual: float
    absorber: AbsorberResiduals
    n_dark: int


def _trace_out_B(v: np.ndarray, d: int) -> np.ndarray:
    Psi = v.reshape(d, d)
    return Psi @ Psi.conj().T


def cqa_steady_state(
    model: LindbladModel,
    U,
    E: float = 0.0,
    select: int | None = None,
    tol: float = TOL_DARK,
    memory_ceiling: int = MEMORY_CEILING,
) -> CqaResult:
    """Steady state from the absorber dark state: ``rho = Tr_B |psi><psi|``."""
    from .lindblad import build_liouvillian
    from .quantum_core import vectorize

    casc = build_cascaded(model, U, E, memory_ceiling)
    states = dark_state(casc, tol)
    if not states:
        raise NoDarkStateError("no dark state for this U and E; the hidden-symmetry assumption fails")
    if len(states) > 1 and select is None:
        raise AmbiguousDarkStateError(f"{len(states)} dark states found; pass select= to choose one")
    psi = states[select or 0]
    d = model.dim
    rho = _trace_out_B(psi.amplitudes, d)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    L = build_liouvillian(model).matrix if d * d <= 4096 else None
    if L is not None:
        res = float(np.linalg.norm(L @ vectorize(rho)))
    else:
        res = float(np.linalg.norm(_lindblad_action(model, rho)))
    dm = DensityMatrix(Operator(model.space, rho))
    return CqaResult(dm, psi, res, verify_absorber(casc, psi), len(states))


def _lindblad_action(model: LindbladModel, rho: np.ndarray) -> np.ndarray:
    H = model.H
    out = -1j * (H @ rho - rho @ H)
    for c in model.jumps:
        cdc = c.conj().T @ c
        out += c @ rho @ c.conj().T - 0.5 * (cdc @ rho + rho @ cdc)
    return out


def _pad(rho: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, n), complex)
    m = rho.shape[0]
    out[:m, :m] = rho
    return out


@dataclass(frozen=True, eq=False)
class ConvergedCqa:
    result: CqaResult
    n_max: int
    check_n_max: int
    change: float
    converged: bool


def cqa_converged(
    model_factory: Callable[[int], LindbladModel],
    n_max: int,
    U,
    E: float = 0.0,
    step: int = 5,
    tol: float = TOL_CONVERGENCE,
) -> ConvergedCqa:
    """Run the absorber at ``n_max`` and ``n_max + step``; report the Frobenius change of ``rho``."""
    r1 = cqa_steady_state(model_factory(n_max), U, E)
    r2 = cqa_steady_state(model_factory(n_max + step), U, E)
    n = n_max + step
    change = float(np.linalg.norm(_pad(r1.rho.matrix, n) - r2.rho.matrix))
    return ConvergedCqa(r1, n_max, n, change, change < tol)


def roundtrip_error(model: LindbladModel, U, E: float = 0.0) -> float:
    """Relative Frobenius distance between the absorber and null-space steady states."""
    r = cqa_steady_state(model, U, E)
    ss = steady_state(model).rho.matrix
    return float(np.linalg.norm(r.rho.matrix - ss) / np.linalg.norm(ss))


def marginal_spectra(psi, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) of both single-copy marginals of a doubled pure state."""
    v = psi.amplitudes if isinstance(psi, StateVector) else np.asarray(psi)
    Psi = v.reshape(d, d)
    a = np.linalg.eigvalsh(Psi @ Psi.conj().T)[::-1]
    b = np.linalg.eigvalsh(Psi.T @ Psi.conj())[::-1]
    return a, b
