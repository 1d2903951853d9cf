import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trslab import _wigner_py
from trslab.quantum_core import (
    DensityMatrix,
    HilbertSpace,
    Operator,
    RankError,
    annihilation_op,
    coherent_state,
    devectorize,
    embed,
    fock_state,
    matrix_inv_sqrt,
    matrix_sqrt,
    number_op,
    partial_trace,
    pauli_ops,
    vectorize,
    wigner,
)


def rand_matrix(rng, d):
    return rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))


def rand_density(rng, d):
    G = rand_matrix(rng, d)
    r = G @ G.conj().T
    return r / np.trace(r).real


seeds = st.integers(0, 2**31 - 1)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, d=st.integers(2, 5))
def test_column_stacking_identity(seed, d):
    rng = np.random.default_rng(seed)
    A, X, B = (rand_matrix(rng, d) for _ in range(3))
    assert np.allclose(vectorize(A @ X @ B), np.kron(B.T, A) @ vectorize(X), atol=1e-10)
    assert np.allclose(devectorize(vectorize(X)).matrix, X)


def test_devectorize_rejects_bad_length():
    with pytest.raises(ValueError):
        devectorize(np.zeros(5))


def test_ladder_operators():
    a = annihilation_op(6).matrix
    comm = a @ a.conj().T - a.conj().T @ a
    # truncation spoils only the last diagonal entry
    assert np.allclose(np.diag(comm)[:-1], 1.0)
    assert np.allclose(a.conj().T @ a, number_op(6).matrix)
    with pytest.raises(ValueError):
        annihilation_op(1)


def test_pauli_basis_order():
    sx, sy, sz, sm, sp = (o.matrix for o in pauli_ops())
    e, g = np.array([1, 0]), np.array([0, 1])
    assert np.allclose(sm @ e, g)
    assert np.allclose(sz @ e, e)
    assert np.allclose(sx @ sy - sy @ sx, 2j * sz)
    assert np.allclose(sp, sm.conj().T)


def test_partial_trace_of_product_state():
    rng = np.random.default_rng(1)
    ra, rb = rand_density(rng, 2), rand_density(rng, 3)
    space = HilbertSpace((2, 3))
    joint = DensityMatrix(Operator(space, np.kron(ra, rb)))
    assert np.allclose(partial_trace(joint, 0).matrix, ra)
    assert np.allclose(partial_trace(joint, 1).matrix, rb)
    with pytest.raises(IndexError):
        partial_trace(joint, 2)


def test_embed_places_operator():
    space = HilbertSpace((2, 3))
    sz = pauli_ops()[2].matrix
    assert np.allclose(embed(sz, 0, space).matrix, np.kron(sz, np.eye(3)))
    with pytest.raises(ValueError):
        embed(sz, 1, space)


def test_density_matrix_validation():
    with pytest.raises(ValueError):
        DensityMatrix.from_matrix(np.array([[0.5, 1.0], [0.0, 0.5]]))
    with pytest.raises(ValueError):
        DensityMatrix.from_matrix(np.diag([0.7, 0.7]))
    with pytest.raises(ValueError):
        DensityMatrix.from_matrix(np.diag([1.5, -0.5]))


@settings(max_examples=20, deadline=None)
@given(seed=seeds, d=st.integers(2, 6))
def test_matrix_square_roots(seed, d):
    rho = rand_density(np.random.default_rng(seed), d)
    s = matrix_sqrt(rho).matrix
    si = matrix_inv_sqrt(rho).matrix
    assert np.allclose(s @ s, rho, atol=1e-10)
    assert np.allclose(s @ si, np.eye(d), atol=1e-6)


def test_rank_error():
    with pytest.raises(RankError):
        matrix_sqrt(np.diag([1.0, 0.0]))


def test_coherent_state_mean_field():
    alpha = 0.8 - 0.3j
    v = coherent_state(alpha, 30).amplitudes
    a = annihilation_op(30).matrix
    assert np.isclose(np.vdot(v, a @ v), alpha, atol=1e-12)
    assert np.isclose(np.linalg.norm(v), 1.0)


def _grid(n=121, L=5.0):
    x = np.linspace(-L, L, n)
    return x, x


def test_wigner_vacuum_and_fock_one():
    x, p = _grid()
    X, P = np.meshgrid(x, p)
    r2 = X**2 + P**2
    W0 = wigner(fock_state(0, 12), x, p, warn=False)
    W1 = wigner(fock_state(1, 12), x, p, warn=False)
    assert np.allclose(W0, np.exp(-r2) / np.pi, atol=1e-12)
    assert np.allclose(W1, (2 * r2 - 1) * np.exp(-r2) / np.pi, atol=1e-12)


def test_wigner_coherent_state_and_normalization():
    alpha = 1.0 + 0.5j
    x, p = _grid()
    X, P = np.meshgrid(x, p)
    W = wigner(coherent_state(alpha, 40), x, p, warn=False)
    ref = np.exp(-(X - np.sqrt(2) * alpha.real) ** 2 - (P - np.sqrt(2) * alpha.imag) ** 2) / np.pi
    assert np.allclose(W, ref, atol=1e-10)
    dx = x[1] - x[0]
    assert np.isclose(W.sum() * dx * dx, 1.0, atol=1e-6)


def test_wigner_kernels_agree():
    from trslab import _kernels

    rng = np.random.default_rng(3)
    rho = rand_density(rng, 15).astype(complex)
    x = np.linspace(-3, 3, 17)
    X, P = np.meshgrid(x, x)
    alpha = (X + 1j * P) / np.sqrt(2)
    ref = _wigner_py.wigner_grid(rho, alpha)
    assert np.allclose(_kernels.wigner_grid(rho, alpha), ref, atol=1e-12)
    assert _kernels.BACKEND in ("cython", "python")


def test_wigner_warns_beyond_truncation():
    with pytest.warns(RuntimeWarning):
        wigner(fock_state(0, 4), [-4.0, 4.0], [0.0])
