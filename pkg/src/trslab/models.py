"""Built-in qubit and Kerr-cavity models with their closed-form references."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .lindblad import LindbladModel, LiouvillianSpectrum, effective_hamiltonian
from .quantum_core import DensityMatrix, HilbertSpace, Operator, annihilation_op, pauli_ops
from .tfd import AntiUnitary

SX, SY, SZ, SM, SP = (op.matrix for op in pauli_ops())
I2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class QubitParams:
    Delta: float = 0.0
    Omega: float = 1.0
    kappa: float = 1.0
    n_th: float = 0.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.n_th < 0:
            raise ValueError("n_th must be non-negative")

    @property
    def b(self) -> float:
        return self.Omega / self.kappa

    @property
    def kappa_eff(self) -> float:
        """Total decay rate ``kappa (1 + 2 n_th)`` that sets the relaxation."""
        return self.kappa * (1 + 2 * self.n_th)

    @property
    def b_prime(self) -> float:
        return self.Omega / self.kappa_eff


@dataclass(frozen=True)
class KerrParams:
    K: float = 1.0
    Delta: float = 0.0
    Lambda1: complex = 0.0
    Lambda2: complex = 0.0
    kappa1: float = 1.0
    kappa2: float = 0.0
    n_th: float = 0.0
    n_max: int = 20

    def __post_init__(self):
        if self.kappa1 < 0 or self.kappa2 < 0:
            raise ValueError("loss rates must be non-negative")
        if self.n_th < 0:
            raise ValueError("n_th must be non-negative")
        if int(self.n_max) < 2:
            raise ValueError("n_max must be at least 2")
        if self.kappa1 == 0 and self.kappa2 == 0:
            raise ValueError("at least one of kappa1, kappa2 must be positive")

    def with_(self, **kw) -> "KerrParams":
        d = dict(self.__dict__)
        d.update(kw)
        return KerrParams(**d)


def driven_qubit(p: QubitParams) -> LindbladModel:
    """``H = Delta sz + (Omega/2) sx`` with decay, plus thermal excitation when ``n_th > 0``."""
    H = p.Delta * SZ + 0.5 * p.Omega * SX
    if p.n_th == 0:
        jumps = (np.sqrt(p.kappa) * SM,)
    else:
        jumps = (np.sqrt(p.kappa * (1 + p.n_th)) * SM, np.sqrt(p.kappa * p.n_th) * SP)
    return LindbladModel(HilbertSpace.single(2), H, jumps, name="driven_qubit")


def bloch_to_density(rx: float, ry: float, rz: float) -> np.ndarray:
    return 0.5 * I2 + rx * SX + ry * SY + rz * SZ


def qubit_analytic_steady_state(p: QubitParams) -> DensityMatrix:
    """Textbook Bloch-vector solution; at finite temperature the decay rate is ``kappa(1+2 n_th)``.

    Returns Pauli coefficients ``rho = 1/2 + cx sx + cy sy + cz sz`` scaled by
    ``1/(1+2 n_th)`` in the undriven limit, which reproduces the thermal state.
    """
    k = p.kappa_eff
    D = 16 * p.Delta**2 + 2 * p.Omega**2 + k**2
    cx = -4 * p.Delta * p.Omega / D
    cy = p.Omega * k / D
    cz = -(16 * p.Delta**2 + k**2) / (2 * D)
    # the thermal bath shrinks the Bloch vector by the equilibrium polarization
    pol = 1.0 / (1 + 2 * p.n_th)
    rho = 0.5 * I2 + pol * (cx * SX + cy * SY) + pol * cz * SZ
    return DensityMatrix(Operator(HilbertSpace.single(2), rho))


def _alpha(b: float) -> complex:
    """Damped Rabi frequency ``sqrt(16 b^2 - 1)``, continued to ``i sqrt(1 - 16 b^2)`` below ``b = 1/4``."""
    x = 16 * b * b - 1
    return complex(np.sqrt(x)) if x >= 0 else 1j * np.sqrt(-x)


def qubit_analytic_spectrum(b: float, kappa: float = 1.0, Delta: float = 0.0, n_th: float = 0.0) -> LiouvillianSpectrum:
    """Closed-form resonant spectrum ``{0, -k/2, -k(3 +- i alpha)/4}`` with ``k = kappa(1+2 n_th)``.

    ``b`` is the dimensionless drive ``Omega/k``. Right modes are returned as
    vectorized columns; left duals come from inverting that basis.
    """
    if Delta != 0:
        raise NotImplementedError("closed-form spectrum exists only at resonance; use lindblad.spectrum")
    k = kappa * (1 + 2 * n_th)
    al = _alpha(b)
    lam = np.array([0.0, -k / 2, -k * (3 + 1j * al) / 4, -k * (3 - 1j * al) / 4])
    p = QubitParams(0.0, b * k, kappa, n_th)
    r0 = qubit_analytic_steady_state(p).matrix
    if b == 0:
        r2, r3 = SY.copy(), SZ.copy()
    else:
        r2 = SY + (1 + 1j * al) / (4 * b) * SZ
        r3 = (1 + 1j * al) / (4 * b) * SY + SZ
    modes = [r0, SX, r2, r3]
    R = np.array([m.reshape(-1, order="F") for m in modes]).T
    R = R / np.linalg.norm(R, axis=0)
    cond = float(np.linalg.cond(R))
    Linv = np.linalg.pinv(R)
    return LiouvillianSpectrum(HilbertSpace.single(2), lam, R, Linv, cond)


def qubit_trs_family(b: float, psi: float) -> AntiUnitary:
    """Unitary factor ``V`` of the permissible anti-unitaries ``T = V K_z``.

    ``V = sin(psi/2)/sqrt(4b^2+1) (1 - 2ib sx) + i cos(psi/2) sz``. At finite
    temperature pass the effective drive ``b' = Omega/(kappa(1+2 n_th))``.
    """
    s = np.sqrt(4 * b * b + 1)
    V = np.sin(psi / 2) / s * (I2 - 2j * b * SX) + 1j * np.cos(psi / 2) * SZ
    return AntiUnitary(V, None, f"T_psi={psi:.6g}")


def qubit_hidden_trs(b: float) -> AntiUnitary:
    """Unitary factor of the hidden time reversal ``(1 - 2ib sx) K_z / sqrt(4b^2+1)``."""
    return qubit_trs_family(b, np.pi)


def qubit_asymmetry_analytic(b: float, n_th: float, psi: float, t, kappa: float = 1.0):
    """Closed-form ``C(t) - C(-t)`` of the TFD ``sy``-``sz`` correlator, split in two.

    ``b`` is the bare ``Omega/kappa``; the effective drive ``b'`` and rate
    ``kappa(1+2 n_th)`` are formed internally. Returns ``(classical,
    entanglement)`` arrays; below ``b' = 1/4`` the oscillatory factor
    ``sin(alpha x)/alpha`` continues to ``sinh(|alpha| x)/|alpha|``.
    """
    t = np.asarray(t, float)
    k = kappa * (1 + 2 * n_th)
    bp = b / (1 + 2 * n_th)
    eta = 1 - 1 / (1 + 2 * n_th) ** 2
    al = _alpha(bp)
    x = k * t / 4
    if abs(al) < 1e-12:
        osc = x
    elif al.imag == 0:
        osc = np.sin(al.real * x) / al.real
    else:
        osc = np.sinh(al.imag * x) / al.imag
    pref = -8 * bp * osc * np.exp(-3 * k * t / 4) / ((2 * bp**2 + 1) * (4 * bp**2 + 1))
    core = 4 * bp**4 + (4 * bp**2 + 1) * eta
    cl = pref * core
    en = pref * 2 * bp**2 * np.sqrt(core) * np.cos(psi)
    return cl.astype(complex), en.astype(complex)


def qubit_pointer_weights(b: float) -> tuple[float, float]:
    """Steady-state eigenvalues at resonance, ``1/2 (1 +- |r|)`` from the Bloch vector."""
    D = 2 * b * b + 1
    r = np.sqrt(4 * b * b + 1) / D
    return 0.5 * (1 + r), 0.5 * (1 - r)


def kerr_operators(n_max: int):
    a = annihilation_op(n_max).matrix
    return a, a.conj().T


def kerr_cavity(p: KerrParams, warn: bool = True) -> LindbladModel:
    """Driven Kerr resonator on ``n_max`` Fock levels.

    Losses are ``sqrt(kappa1) a`` and ``sqrt(kappa2) a^2`` at zero temperature;
    with ``n_th > 0`` the one-photon channel becomes the thermal pair
    ``sqrt(kappa1 (1+n_th)) a`` and ``sqrt(kappa1 n_th) a^dag``.
    """
    n = int(p.n_max)
    a, ad = kerr_operators(n)
    H = (
        0.5 * p.K * ad @ ad @ a @ a
        + p.Delta * ad @ a
        + p.Lambda1 * ad
        + np.conj(p.Lambda1) * a
        + 0.5 * p.Lambda2 * ad @ ad
        + 0.5 * np.conj(p.Lambda2) * a @ a
    )
    jumps = []
    if p.kappa1 > 0:
        jumps.append(np.sqrt(p.kappa1 * (1 + p.n_th)) * a)
        if p.n_th > 0:
            jumps.append(np.sqrt(p.kappa1 * p.n_th) * ad)
    if p.kappa2 > 0:
        jumps.append(np.sqrt(p.kappa2) * a @ a)
    model = LindbladModel(HilbertSpace.single(n), H, tuple(jumps), name="kerr")
    if warn:
        nbar = semiclassical_photon_number(p)
        if nbar > 0.5 * n:
            warnings.warn(
                f"expected photon number {nbar:.3g} exceeds half the truncation n_max={n}",
                RuntimeWarning,
                stacklevel=2,
            )
    return model


def semiclassical_photon_number(p: KerrParams) -> float:
    """Rough ``<n>`` estimate used for truncation warnings and defaults."""
    L2 = abs(p.Lambda2)
    k = p.kappa1
    if p.K != 0 and L2 > k / 2:
        return float(np.sqrt(L2**2 - k * k / 4) / abs(p.K))
    if abs(p.Lambda1) > 0:
        # weak-drive linear response plus a Kerr-limited amplitude
        lin = abs(p.Lambda1) / max(abs(p.Delta + 0.5j * k), 1e-12)
        if p.K != 0:
            lin = min(lin**2, (abs(p.Lambda1) / abs(p.K)) ** (2 / 3))
        else:
            lin = lin**2
        return float(lin)
    return 0.0


def default_truncation(p: KerrParams) -> int:
    return int(max(20, np.ceil(6 * semiclassical_photon_number(p))))


def dissipative_gap_estimate(p: KerrParams, convention: str = "squared") -> float | None:
    """Cat-manifold switching rate ``Gamma = kappa |alpha|^2 exp(-2 |alpha|^2)``.

    ``convention="printed"`` takes ``|alpha| = sqrt((L2^2 - k^2/4)/K^2)``;
    ``convention="squared"`` takes that same expression as ``|alpha|^2``, the
    usual cat-state amplitude. Returns ``None`` below the parametric threshold.
    """
    L2 = abs(p.Lambda2)
    k = p.kappa1
    if L2**2 <= k * k / 4 or p.K == 0:
        return None
    root = np.sqrt((L2**2 - k * k / 4) / p.K**2)
    if convention == "printed":
        amp2 = root**2
    elif convention == "squared":
        amp2 = root
    else:
        raise ValueError("convention must be 'printed' or 'squared'")
    return float(k * amp2 * np.exp(-2 * amp2))


def bose_temperature(n_th: np.ndarray | float) -> np.ndarray:
    """``k_B T / (hbar omega)`` for a Bose occupancy ``n_th``."""
    n = np.asarray(n_th, float)
    with np.errstate(divide="ignore"):
        return np.where(n > 0, 1.0 / np.log1p(1.0 / np.where(n > 0, n, 1.0)), 0.0)


def bose_occupancy(kT_over_hw: np.ndarray | float) -> np.ndarray:
    x = np.asarray(kT_over_hw, float)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(x > 0, 1.0 / np.expm1(1.0 / np.where(x > 0, x, 1.0)), 0.0)


def two_mode_squeezed_amplitude(p: KerrParams) -> complex:
    """Squeezing amplitude ``z`` of the ``K -> 0`` TFD ``exp[z (a^dag + s b^dag)^2] |00>``.

    Solving the jump and effective-Hamiltonian constraints for a Gaussian
    ansatz with ``H_eff = (Delta - i kappa1/2) a^dag a + (L2/2) a^dag^2 + h.c.``
    gives ``E = 0`` and ``z = -L2 / (4 (Delta - i kappa1/2))``. The state is
    normalizable exactly below the parametric threshold ``|L2| < |Delta + i kappa1/2|``.
    """
    return -p.Lambda2 / (4 * (p.Delta - 0.5j * p.kappa1))


def two_mode_squeezed_tfd(p: KerrParams, sign: int, z: complex | None = None) -> np.ndarray:
    """Coefficient matrix of ``exp[z (a^dag + sign b^dag)^2] |00>`` on ``n_max`` levels, normalized."""
    from scipy.special import gammaln

    n = int(p.n_max)
    z = two_mode_squeezed_amplitude(p) if z is None else z
    Psi = np.zeros((n, n), complex)
    lf = gammaln(np.arange(2 * n + 2) + 1)
    for j in range(n):
        for k in range(j % 2, n, 2):
            m = (j + k) // 2
            # <j,k| (a^dag + s b^dag)^{2m} |00> = C(2m, j) s^k sqrt(j! k!)
            logc = lf[2 * m] - lf[m] - 0.5 * (lf[j] + lf[k])
            Psi[j, k] = np.exp(logc) * sign**k * z**m
    return Psi / np.linalg.norm(Psi)


def kerr_effective_hamiltonian(p: KerrParams) -> np.ndarray:
    return effective_hamiltonian(kerr_cavity(p, warn=False))


def _kerr_hankel_tfd(H: np.ndarray, sign: int, E: float, dps: int):
    """Hankel amplitudes ``g_m`` of the single-loss Kerr TFD at ``dps`` digits.

    The jump constraint ``a Psi = s Psi a^T`` forces
    ``Psi_jk = s^k g_{j+k} / sqrt(j! k!)`` and, on the truncated space,
    ``g_m = 0`` for ``m >= d``. The remaining ``d`` amplitudes span the
    null vector of ``Psi H^T - H Psi - E Psi``.
    """
    import mpmath as mp

    d = H.shape[0]
    with mp.workdps(dps):
        Hm = mp.matrix([[mp.mpc(complex(H[i, j])) for j in range(d)] for i in range(d)])
        rf = [1 / mp.sqrt(mp.factorial(k)) for k in range(d)]
        A = mp.matrix(d * d, d)
        for m in range(d):
            P = mp.matrix(d, d)
            for j in range(max(0, m - d + 1), min(m, d - 1) + 1):
                P[j, m - j] = sign ** (m - j) * rf[j] * rf[m - j]
            R = P * Hm.T - Hm * P - E * P
            for j in range(d):
                for i in range(d):
                    A[j * d + i, m] = R[i, j]
        w, Q = mp.eighe(A.H * A)
        idx = min(range(d), key=lambda k: abs(w[k]))
        g = Q[:, idx]
        # global phase: g_0 real positive
        g = g * (abs(g[0]) / g[0])
        Psi = mp.matrix(d, d)
        for j in range(d):
            for k in range(d - j):
                Psi[j, k] = g[j + k] * sign**k * rf[j] * rf[k]
        resid = mp.sqrt(abs(w[idx]))
        return Psi, float(resid)


def _symmetric_polar(Psi, sign: int, dps: int) -> np.ndarray:
    """Unitary ``W`` with ``Psi = rho^{1/2} W`` for ``Psi S`` complex symmetric.

    On the exact kernel of ``rho`` the polar factor is undetermined; the
    Takagi-consistent completion ``N N^T S`` keeps ``W S`` symmetric.
    """
    import mpmath as mp

    d = Psi.rows
    with mp.workdps(dps):
        ev, V = mp.eighe(Psi * Psi.H)
        top = max(abs(e) for e in ev)
        floor = top * mp.mpf(10) ** (-(dps - 10))
        W = mp.matrix(d, d)
        S = mp.diag([sign**k for k in range(d)])
        for k in range(d):
            v = V[:, k]
            if ev[k] > floor:
                W += (v * (v.H * Psi)) / mp.sqrt(ev[k])
            else:
                # null directions are fixed up to a phase; make the largest entry real
                j = max(range(d), key=lambda i: abs(v[i]))
                v = v * (abs(v[j]) / v[j])
                W += v * v.T * S
        return np.array([[complex(W[i, j]) for j in range(d)] for i in range(d)])


def kerr_time_reversal(p: KerrParams, sign: int, E: float = 0.0, max_dps: int = 1600) -> AntiUnitary:
    """Hidden time reversal ``T_s`` of the single-loss Kerr cavity in extended precision.

    For weak drive the steady state has eigenvalues far below machine
    precision, so the polar factor of a double-precision TFD leaves ``T``
    meaningless on all but the lowest Fock levels. Here the TFD is rebuilt
    from its Hankel structure and the polar factor is taken with ``mpmath``,
    doubling the working precision until the double-precision ``V_z``
    settles. Requires ``n_th = 0`` and ``kappa2 = 0``.
    """
    if p.n_th != 0 or p.kappa2 != 0 or p.kappa1 <= 0:
        raise ValueError("the structured construction needs a single one-photon loss channel at zero temperature")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    H = effective_hamiltonian(kerr_cavity(p, warn=False))
    scale = max(np.linalg.norm(H), 1.0)
    prev = None
    dps = 50
    while dps <= max_dps:
        Psi, resid = _kerr_hankel_tfd(H, sign, E, dps)
        W = _symmetric_polar(Psi, sign, dps)
        if prev is not None and np.linalg.norm(W - prev) < 1e-12 * W.shape[0]:
            if resid > 1e-6 * scale:
                raise ValueError(f"no TFD with u = {sign:+d}, E = {E:g} (constraint residual {resid:.2e})")
            return AntiUnitary(W.T, None, f"T{'+' if sign > 0 else '-'}")
        prev = W
        dps *= 2
    raise ValueError(f"time-reversal construction did not settle by {max_dps} digits")
