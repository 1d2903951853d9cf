import numpy as np
import pytest
import scipy.integrate as si
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from trslab import asymmetry, lindblad, models
from trslab.asymmetry import DivergentAsymmetryError, PairSpec
from trslab.lindblad import CorrelatorTrace
from trslab.models import SX, SY, SZ, QubitParams
from trslab.quantum_core import vectorize
from trslab.tfd import build_tfd


def qubit(Delta=0.3, Omega=1.2, kappa=1.0, n_th=0.2):
    return models.driven_qubit(QubitParams(Delta, Omega, kappa, n_th))


def quad_oracle(m, X, Y, t_end=60.0):
    # int_0^t_end |<X(t)Y> - <Y(t)X>| dt by adaptive quadrature on dense exponentials
    L = lindblad.build_liouvillian(m).matrix
    rho = lindblad.steady_state(m).rho.matrix
    d = m.dim
    zy, zx = vectorize(Y @ rho), vectorize(X @ rho)

    def D(t):
        E = sla.expm(L * t)
        a = np.trace(X @ (E @ zy).reshape(d, d, order="F"))
        b = np.trace(Y @ (E @ zx).reshape(d, d, order="F"))
        return abs(a - b)

    return si.quad(D, 0, t_end, limit=400, epsabs=1e-13, epsrel=1e-11)[0]


@pytest.mark.parametrize("X, Y", [(SX, SZ), (SY, SZ), (SX, SY)])
def test_single_pair_matches_quadrature(X, Y):
    m = qubit()
    res = asymmetry.integrated_asymmetry(m, X, Y)
    ref = quad_oracle(m, X, Y)
    assert np.isclose(res.m, ref, rtol=1e-7)
    assert res.error < 1e-7 * max(ref, 1e-12)
    assert not res.divergent


@settings(max_examples=10, deadline=None)
@given(s=st.floats(0.2, 5.0))
def test_rate_rescaling_scales_asymmetry(s):
    # scaling every rate by s rescales the Liouvillian, so m -> m / s
    m1 = qubit(0.3, 1.2, 1.0, 0.2)
    m2 = qubit(0.3 * s, 1.2 * s, s, 0.2)
    a = asymmetry.integrated_asymmetry(m1, SX, SZ).m
    b = asymmetry.integrated_asymmetry(m2, SX, SZ).m
    assert np.isclose(b, a / s, rtol=1e-7)


def test_symmetric_pair_vanishes():
    m = qubit()
    res = asymmetry.integrated_asymmetry(m, SX, SX)
    assert res.m < 1e-12


def test_tfd_pair_vanishes_under_hidden_symmetry():
    m = qubit(0.0, 1.0, 1.0, 0.0)
    rho = lindblad.steady_state(m).rho.matrix
    s = build_tfd(rho, models.qubit_hidden_trs(1.0))
    res = asymmetry.integrated_asymmetry(m, SY, SZ, "tfd", tfd=s)
    assert res.m < 1e-10
    off = build_tfd(rho, models.qubit_trs_family(1.0, 0.0))
    assert asymmetry.integrated_asymmetry(m, SY, SZ, "tfd", tfd=off).m > 1e-3


def test_divergent_pair():
    m = qubit(n_th=0.0)
    # a ratio other than one leaves the product of means as a stationary offset
    res = asymmetry.integrated_asymmetry(m, SZ, SZ, "special", ratio=2.0)
    assert res.divergent and np.isinf(res.m)
    with pytest.raises(DivergentAsymmetryError):
        asymmetry.integrated_asymmetry(m, SZ, SZ, "special", ratio=2.0, raise_divergent=True)


def test_argument_validation():
    m = qubit()
    with pytest.raises(ValueError):
        asymmetry.integrated_asymmetry(m, SX, SZ, "nope")
    with pytest.raises(ValueError):
        asymmetry.integrated_asymmetry(m, SX, SZ, "special")
    with pytest.raises(ValueError):
        asymmetry.integrated_asymmetry(m, SX, SZ, "tfd")


def test_asymmetry_trace_grid():
    t = np.array([-1.0, 0.0, 1.0])
    tt, a = asymmetry.asymmetry_trace(CorrelatorTrace(t, np.array([1.0, 2.0, 4.0])))
    assert np.allclose(tt, [0.0, 1.0])
    assert np.allclose(a, [0.0, 3.0])
    with pytest.raises(ValueError):
        asymmetry.asymmetry_trace(CorrelatorTrace(np.array([-1.0, 0.0, 0.5]), np.zeros(3)))


def _factory(n):
    return qubit(0.0, 1.0, 1.0, n)


def test_temperature_scan_validation():
    pairs = [PairSpec("xz", SX, SZ)]
    with pytest.raises(ValueError):
        asymmetry.temperature_scan(_factory, [], pairs)
    with pytest.raises(ValueError):
        asymmetry.temperature_scan(_factory, [-0.1], pairs)
    with pytest.raises(ValueError):
        asymmetry.temperature_scan(_factory, [0.1], pairs * 2)


def test_temperature_scan_values_and_onset():
    grid = [0.0, 0.05, 0.2, 0.5]
    pairs = [PairSpec("xz", SX, SZ), PairSpec("tfd_yz", SY, SZ, "tfd", lambda m: models.qubit_hidden_trs(1.0))]
    scan = asymmetry.temperature_scan(_factory, grid, pairs)
    assert not scan.failed.any()
    for i, n in enumerate(grid):
        assert np.isclose(scan.values("xz")[i], asymmetry.integrated_asymmetry(_factory(n), SX, SZ).m, rtol=1e-12)
    # the hidden member only leaves the steady state invariant at zero temperature
    assert scan.values("tfd_yz")[0] < 1e-10
    assert np.all(scan.values("tfd_yz")[1:] > 0)
    assert np.all(scan.errors("xz") < 1e-8)
    T = scan.temperature
    on = scan.onset_temperature("xz")
    assert T[0] <= on <= T[-1]
    assert np.all(scan.gaps > 0)
