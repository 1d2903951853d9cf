"""Acceptance checks, one test per criterion, each printing a single PASS/FAIL line."""

from __future__ import annotations

import time
import warnings

import numpy as np
import pytest

from trslab import absorber, asymmetry, hidden_trs, lindblad, models, tfd
from trslab.models import SM, SP, SX, SY, SZ, KerrParams, QubitParams
from trslab.quantum_core import annihilation_op, vectorize


@pytest.fixture
def report(capsys):
    def _report(num: int, title: str, ok: bool, detail: str, elapsed: float, budget: float):
        fast = elapsed < budget
        line = (
            f"[criterion {num:>2}] {'PASS' if ok and fast else 'FAIL'} {title}: {detail}; "
            f"runtime {elapsed:.2f} s (budget {budget:g} s)"
        )
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
        assert fast, line

    return _report


def qubit(b: float, n_th: float = 0.0, Delta: float = 0.0) -> lindblad.LindbladModel:
    return models.driven_qubit(QubitParams(Delta, b, 1.0, n_th))


# ---------------------------------------------------------------------------


def test_criterion_01_qubit_steady_state(report):
    t0 = time.perf_counter()
    worst = 0.0
    for Delta in (0.0, 0.5, 2.0):
        for Omega in (0.1, 1.0, 5.0):
            for n_th in (0.0, 1.0):
                p = QubitParams(Delta, Omega, 1.0, n_th)
                rho = lindblad.steady_state(models.driven_qubit(p)).rho.matrix
                ref = models.qubit_analytic_steady_state(p).matrix
                worst = max(worst, np.linalg.norm(rho - ref))
    dt = time.perf_counter() - t0
    report(1, "qubit steady state vs closed form", worst <= 1e-10, f"max Frobenius error {worst:.2e} over 18 points", dt, 1.0)


def test_criterion_02_qubit_spectrum_and_exceptional_point(report):
    t0 = time.perf_counter()
    spec = lindblad.spectrum(qubit(1.0))
    ref = np.array([0.0, -0.5, -(3 + 1j * np.sqrt(15)) / 4, -(3 - 1j * np.sqrt(15)) / 4])
    got = spec.eigenvalues
    err = max(np.min(np.abs(got - r)) for r in ref)
    err = max(err, max(np.min(np.abs(ref - g)) for g in got))
    ep = lindblad.spectrum(qubit(0.25)).exceptional_pairs
    none_at_one = spec.exceptional_pairs == ()
    dt = time.perf_counter() - t0
    ok = err <= 1e-9 and len(ep) > 0 and none_at_one
    report(2, "qubit Liouvillian spectrum, exceptional point at b=1/4", ok, f"eigenvalue error {err:.2e}, pairs at b=1/4 {ep}, none at b=1: {none_at_one}", dt, 1.0)


def test_criterion_03_qubit_tfd_correlator(report):
    t0 = time.perf_counter()
    m = qubit(1.0)
    rho = lindblad.steady_state(m).rho.matrix
    prop = lindblad.Propagator(m)
    t = np.linspace(-6.0, 6.0, 241)
    state = tfd.build_tfd(rho, models.qubit_hidden_trs(1.0))
    C = tfd.tfd_correlator(m, state, SY, SZ, t, propagator=prop)
    tt, tot, cl, _ = C.asymmetry()
    sym = np.abs(tot).max() / np.abs(C.total).max()
    ref_cl, _ = models.qubit_asymmetry_analytic(1.0, 0.0, np.pi, tt)
    err_cl = np.abs(cl - ref_cl).max()
    err_en = 0.0
    for psi in (0.0, np.pi / 2, np.pi):
        s = tfd.build_tfd(rho, models.qubit_trs_family(1.0, psi))
        _, _, _, en = tfd.tfd_correlator(m, s, SY, SZ, t, propagator=prop).asymmetry()
        _, ref_en = models.qubit_asymmetry_analytic(1.0, 0.0, psi, tt)
        err_en = max(err_en, np.abs(en - ref_en).max())
    dt = time.perf_counter() - t0
    ok = sym <= 1e-9 and err_cl <= 1e-8 and err_en <= 1e-8
    report(3, "TFD correlator time symmetry and branch closed forms", ok, f"relative asymmetry {sym:.2e}, classical error {err_cl:.2e}, entanglement error {err_en:.2e}", dt, 5.0)


def test_criterion_04_qubit_detection(report):
    t0 = time.perf_counter()
    rep = hidden_trs.detect(qubit(1.0))
    n = len(rep.solutions)
    fid = 0.0
    if n:
        s = rep.solutions[0]
        ref = tfd.build_tfd(s.tfd.rho_ss, models.qubit_hidden_trs(1.0))
        fid = ref.fidelity(tfd.build_tfd(s.tfd.rho_ss, s.T_extracted))
    dt = time.perf_counter() - t0
    report(4, "qubit detection finds exactly one hidden time reversal", n == 1 and fid > 1 - 1e-8, f"{n} solution(s), TFD fidelity 1-{1 - fid:.1e}", dt, 1.0)


def test_criterion_05_thermal_qubit_asymmetry(report):
    t0 = time.perf_counter()
    t = np.linspace(-6.0, 6.0, 121)
    err = 0.0
    zero_trace = None
    found = []
    for n_th in (0.0, 0.01, 0.03, 0.1, 0.3, 1.0):
        b = 1 + 2 * n_th
        m = qubit(b, n_th)
        rho = lindblad.steady_state(m).rho.matrix
        T = models.qubit_trs_family(b / (1 + 2 * n_th), np.pi)
        C = tfd.tfd_correlator(m, tfd.build_tfd(rho, T), SY, SZ, t)
        tt, tot, cl, en = C.asymmetry()
        ref_cl, ref_en = models.qubit_asymmetry_analytic(b, n_th, np.pi, tt)
        err = max(err, np.abs(cl - ref_cl).max(), np.abs(en - ref_en).max(), np.abs(tot - ref_cl - ref_en).max())
        if n_th == 0:
            zero_trace = np.abs(tot).max()
        else:
            found.append(len(hidden_trs.detect(m).solutions))
    dt = time.perf_counter() - t0
    ok = err <= 1e-8 and zero_trace <= 1e-10 and not any(found)
    report(5, "thermal qubit asymmetry traces", ok, f"closed-form error {err:.2e}, zero-temperature trace {zero_trace:.1e}, solutions at n_th>0 {found}", dt, 10.0)


def test_criterion_06_cqa_qubit(report):
    t0 = time.perf_counter()
    n_th = 1.0
    m = qubit(0.0, n_th)
    ss = lindblad.steady_state(m).rho.matrix
    err_dark = 0.0
    err_rho = 0.0
    for psi in (0.0, np.pi / 3):
        U = np.array([[0, np.exp(1j * psi)], [np.exp(-1j * psi), 0]])
        res = absorber.cqa_steady_state(m, U)
        # basis order (e, g): |gg> is the last entry, |ee> the first
        ref = np.zeros(4, complex)
        ref[3] = np.sqrt(1 + n_th)
        ref[0] = np.exp(1j * psi) * np.sqrt(n_th)
        ref /= np.sqrt(1 + 2 * n_th)
        v = res.dark.amplitudes
        phase = np.vdot(v, ref) / abs(np.vdot(v, ref))
        err_dark = max(err_dark, np.abs(v * phase - ref).max())
        err_rho = max(err_rho, np.linalg.norm(res.rho.matrix - ss))
    md = qubit(1.0)
    err_drv = np.linalg.norm(absorber.cqa_steady_state(md, [[1.0]]).rho.matrix - lindblad.steady_state(md).rho.matrix)
    dt = time.perf_counter() - t0
    ok = err_dark <= 1e-12 and err_rho <= 1e-10 and err_drv <= 1e-10
    report(6, "absorber roundtrip on the qubit", ok, f"thermal dark-state error {err_dark:.1e}, thermal rho error {err_rho:.1e}, driven rho error {err_drv:.1e}", dt, 2.0)


def test_criterion_07_kerr_detection_and_cqa(report):
    t0 = time.perf_counter()
    p = KerrParams(K=1.0, Lambda2=1.0, kappa1=0.4, Lambda1=0.3, n_max=30)
    m = models.kerr_cavity(p)
    rep = hidden_trs.detect(m)
    us = [(complex(s.u), s.E) for s in rep.solutions]
    unique = len(us) == 1 and abs(us[0][0] - 1) < 1e-8 and abs(us[0][1]) < 1e-8
    err_cqa = np.linalg.norm(absorber.cqa_steady_state(m, [[1.0]]).rho.matrix - lindblad.steady_state(m).rho.matrix)
    conv = absorber.cqa_converged(lambda n: models.kerr_cavity(p.with_(n_max=n)), 30, [[1.0]], step=5)

    rep0 = hidden_trs.detect(models.kerr_cavity(p.with_(Lambda1=0.0)))
    signs = sorted(round(s.u.real) for s in rep0.solutions)
    two = signs == [-1, 1]

    worst_fid = 1.0
    for L2 in (1e-4, 0.05):
        pk = KerrParams(K=1e-4, Lambda2=L2, kappa1=1.0, n_max=30)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            sols = hidden_trs.detect(models.kerr_cavity(pk)).solutions
        if len(sols) != 2:
            worst_fid = 0.0
        for s in sols:
            worst_fid = min(worst_fid, s.tfd.fidelity(models.two_mode_squeezed_tfd(pk, round(s.u.real))))
    dt = time.perf_counter() - t0
    ok = unique and err_cqa <= 1e-8 and conv.change <= 1e-8 and two and worst_fid > 1 - 1e-6
    report(
        7,
        "Kerr detection and absorber",
        ok,
        f"solutions {us}, absorber error {err_cqa:.1e}, n_max 30->35 change {conv.change:.1e}, "
        f"signs at Lambda1=0 {signs}, weak-K squeezed fidelity 1-{1 - worst_fid:.1e}",
        dt,
        300.0,
    )


def test_criterion_08_kerr_special_correlator(report):
    t0 = time.perf_counter()
    p = KerrParams(K=1.0, Lambda2=1.0, kappa1=0.4, n_max=25)
    m = models.kerr_cavity(p)
    rep = hidden_trs.detect(m)
    t = np.linspace(0.0, 10.0 / p.kappa1, 201)
    prop = lindblad.Propagator(m)
    aliases = {"a": ("c0", 1 / np.sqrt(p.kappa1))}
    rel = max(
        hidden_trs.special_correlator_symmetry(m, s, ["a"] * 3, ["a"], t, aliases=aliases, propagator=prop).relative
        for s in rep.solutions
    )
    a = annihilation_op(p.n_max).matrix
    X = (a + a.conj().T) / np.sqrt(2)
    P = -1j * (a - a.conj().T) / np.sqrt(2)
    fwd, bwd = hidden_trs.single_system_asymmetry(m, X @ X, P @ P, t, propagator=prop)
    rel_xp = np.abs(fwd - bwd).max() / max(np.abs(fwd).max(), np.abs(bwd).max())
    dt = time.perf_counter() - t0
    ok = len(rep.solutions) > 0 and rel <= 1e-6 and rel_xp > 1e-2
    report(8, "special Kerr correlator symmetric, generic one not", ok, f"{len(rep.solutions)} solutions, a^3/a relative asymmetry {rel:.1e}, X^2/P^2 {rel_xp:.2e}", dt, 300.0)


OCCUPANCY_GRID = (0.0, 1e-6, 1e-4, 0.001, 0.003, 0.01, 0.03, 0.1, 0.3)


@pytest.mark.slow
def test_criterion_09_cat_asymmetry_scan(report):
    t0 = time.perf_counter()
    base = KerrParams(K=1.0, Lambda2=3.0, kappa1=0.01, n_max=35)
    a = annihilation_op(base.n_max).matrix
    X = (a + a.conj().T) / np.sqrt(2)
    P = -1j * (a - a.conj().T) / np.sqrt(2)

    def factory(n_th):
        return models.kerr_cavity(base.with_(n_th=n_th), warn=False)

    pairs = [
        asymmetry.PairSpec("a2_Heff", a @ a, lindblad.effective_hamiltonian),
        asymmetry.PairSpec("X2_P2", X @ X, P @ P),
    ]
    scan = asymmetry.temperature_scan(factory, OCCUPANCY_GRID, pairs)
    m_h = scan.values("a2_Heff")
    m_xp = scan.values("X2_P2")

    # scale of the correlator itself at zero temperature
    m0 = factory(0.0)
    Heff = lindblad.effective_hamiltonian(m0)
    rho = lindblad.steady_state(m0).rho.matrix
    tau = 1.0 / base.kappa1
    tt = np.linspace(0.0, 5 * tau, 501)
    C = lindblad.correlator(m0, a @ a, Heff, tt, rho_ss=rho).values
    bound = 1e-6 * np.abs(C).max() * tau
    small = [m_h[OCCUPANCY_GRID.index(n)] for n in (0.0, 1e-6)]

    ratio = m_h[OCCUPANCY_GRID.index(0.3)] / m_h[OCCUPANCY_GRID.index(0.001)]
    spread = m_xp.max() / m_xp.min()
    gap = models.dissipative_gap_estimate(base)
    T_heur = asymmetry.heuristic_onset_temperature(gap, base.kappa1)
    T_on = scan.onset_temperature("a2_Heff")
    onset_ratio = max(T_on / T_heur, T_heur / T_on)
    dt = time.perf_counter() - t0
    checks = {
        "below-gap m small": max(small) < bound,
        "m(0.3)/m(0.001) > 100": ratio > 100,
        "m_X2P2(0) > 0": m_xp[0] > 0,
        "m_X2P2 spread < 10x": spread < 10,
        "onset within 3x": onset_ratio < 3,
    }
    failed = [k for k, v in checks.items() if not v]
    report(
        9,
        "integrated asymmetry versus temperature in the cat regime",
        not failed,
        f"m(0)={small[0]:.2e}, m(1e-6)={small[1]:.2e} vs bound {bound:.2e}; ratio {ratio:.1f}; "
        f"m_X2P2 in [{m_xp.min():.3g}, {m_xp.max():.3g}] (spread {spread:.1f}x); "
        f"onset kT/hw {T_on:.3f} vs heuristic {T_heur:.3f}; failed: {failed or 'none'}",
        dt,
        1800.0,
    )


def test_criterion_10_no_family_member_satisfies_cqdb(report):
    t0 = time.perf_counter()
    m = qubit(1.0)
    grid = (0.0, np.pi / 2, 5 * np.pi / 8, 3 * np.pi / 4, 5 * np.pi / 6, np.pi)
    t = np.linspace(0.0, 6.0, 61)
    fam = lambda psi: models.qubit_trs_family(1.0, psi)  # noqa: E731
    yz = hidden_trs.cqdb_correlation_scan(m, fam, grid, SY, SZ, t)
    xz = hidden_trs.cqdb_correlation_scan(m, fam, grid, SX, SZ, t)
    worst = {psi: max(np.abs(yz[psi]).max(), np.abs(xz[psi]).max()) for psi in grid}
    dt = time.perf_counter() - t0
    ok = all(v > 1e-3 for v in worst.values())
    detail = ", ".join(f"psi={psi:.3f}: {v:.3f}" for psi, v in worst.items())
    report(10, "no permissible time reversal makes both correlators symmetric", ok, f"largest asymmetry per member {detail}", dt, 10.0)


def _random_model(rng, d: int, n_jumps: int) -> lindblad.LindbladModel:
    G = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    jumps = [(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(d) for _ in range(n_jumps)]
    return lindblad.LindbladModel.from_arrays(0.5 * (G + G.conj().T), jumps)


def _invariant_time_reversal(rng, rho):
    # conjugation in the eigenbasis of rho, dressed with random phases, leaves rho invariant
    _, B = tfd.rho_eigenbasis(rho, warn=False)
    V = B @ np.diag(np.exp(2j * np.pi * rng.random(B.shape[0]))) @ B.conj().T
    return tfd.AntiUnitary(V, B)


def test_criterion_11_property_suites(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240611)
    worst = dict(trace=0.0, duality=0.0, anti_hom=0.0, involution=0.0, defining=0.0, marginal=0.0, u_eig=0.0)
    n_thermal = 0
    for _ in range(20):
        d = int(rng.integers(2, 7))
        m = _random_model(rng, d, int(rng.integers(1, 4)))
        L = lindblad.build_liouvillian(m).matrix
        Ld = lindblad.build_adjoint(m).matrix
        worst["trace"] = max(worst["trace"], np.abs(vectorize(np.eye(d)).conj() @ L).max())
        X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        R = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        lhs = np.trace(X @ lindblad.devectorize(L @ vectorize(R)).matrix)
        rhs = np.trace(lindblad.devectorize(Ld @ vectorize(X)).matrix @ R)
        worst["duality"] = max(worst["duality"], abs(lhs - rhs) / (np.linalg.norm(X) * np.linalg.norm(R)))

        rho = lindblad.steady_state(m).rho.matrix
        T = _invariant_time_reversal(rng, rho)
        J = tfd.ExchangeMap(rho, T)
        Y = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        scale = np.linalg.norm(J(X)) * np.linalg.norm(J(Y)) + np.linalg.norm(J(X @ Y))
        worst["anti_hom"] = max(worst["anti_hom"], np.linalg.norm(J(X @ Y) - J(Y) @ J(X)) / scale)
        worst["involution"] = max(worst["involution"], np.linalg.norm(J(J(X)) - X) / np.linalg.norm(X))
        state = tfd.build_tfd(rho, T)
        v = state.vector
        eye = np.eye(d)
        gap = np.linalg.norm(np.kron(X, eye) @ v - np.kron(eye, J(X)) @ v) / np.linalg.norm(X)
        worst["defining"] = max(worst["defining"], gap)
        drift = tfd.marginal_drift(m, state, X, np.array([0.3, 1.0, 3.0]))
        worst["marginal"] = max(worst["marginal"], np.abs(drift).max() / np.linalg.norm(X))

        # thermal qubit with random rates: detailed balance guarantees solutions
        w, g_dn, g_up = rng.uniform(0.1, 2.0, 3)
        mq = lindblad.LindbladModel.from_arrays(w * SZ, [np.sqrt(g_dn) * SM, np.sqrt(g_up) * SP])
        for s in hidden_trs.detect(mq, n_psi=8).solutions:
            n_thermal += 1
            ev = np.linalg.eigvals(s.U)
            worst["u_eig"] = max(worst["u_eig"], np.abs(np.abs(ev.real) - 1).max() + np.abs(ev.imag).max())
    dt = time.perf_counter() - t0
    tol = dict(trace=1e-12, duality=1e-12, anti_hom=1e-8, involution=1e-8, defining=1e-8, marginal=1e-8, u_eig=1e-8)
    ok = all(worst[k] <= tol[k] for k in tol) and n_thermal >= 20
    detail = ", ".join(f"{k} {worst[k]:.1e}" for k in tol) + f", {n_thermal} detected U checked"
    report(11, "randomized property suites", ok, detail, dt, 30.0)
