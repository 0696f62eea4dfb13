import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_hermitian, random_operator
from opcalc.errors import DimensionMismatch, FunctionDomain, NotHermitian
from opcalc.linalg import (
    BlockOperator,
    apply_function,
    counting_function,
    eigh,
    kernel_projection,
    spectral_projection,
    trace_norm,
    uniform_norm,
    weighted_trace,
)


def test_eigh_sorts_diagonal():
    d = eigh(BlockOperator.diag([3.0, 1.0]))
    np.testing.assert_array_equal(d.eigenvalues[0], [1.0, 3.0])
    U = d.eigenvectors[0]
    np.testing.assert_allclose(np.abs(U), [[0, 1], [1, 0]], atol=1e-15)


def test_eigh_pauli_x():
    d = eigh(BlockOperator.hermitian([[[0, 1], [1, 0]]]))
    np.testing.assert_allclose(d.eigenvalues[0], [-1, 1], atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_eigh_reconstruction(seed):
    rng = np.random.default_rng(seed)
    A = BlockOperator.hermitian([random_hermitian(rng, 6), random_hermitian(rng, 2)], [1.0, 0.25])
    d = eigh(A)
    for lam, U, blk in zip(d.eigenvalues, d.eigenvectors, A.blocks):
        assert np.all(np.diff(lam) >= 0)
        assert np.linalg.norm((U * lam) @ U.conj().T - blk, 2) <= 1e-10 * (1 + d.spectral_radius)
        assert np.linalg.norm(U.conj().T @ U - np.eye(len(lam))) <= 1e-10


def test_eigh_deterministic(rng):
    A = random_operator(rng)
    a, b = eigh(A), eigh(A)
    for x, y in zip(a.eigenvectors, b.eigenvectors):
        np.testing.assert_array_equal(x, y)


def test_eigh_rejects_unflagged_and_asymmetric():
    with pytest.raises(NotHermitian):
        eigh(BlockOperator(([[1, 2], [2, 1]],), (1.0,)))
    with pytest.raises(NotHermitian):
        BlockOperator.hermitian([[[1, 2], [0, 1]]])


@pytest.mark.parametrize("blocks, weights", [
    ([np.zeros((2, 3))], [1.0]),
    ([np.eye(2)], [1.0, 2.0]),
    ([np.eye(2)], [0.0]),
    ([np.eye(2)], [-1.0]),
])
def test_construction_errors(blocks, weights):
    with pytest.raises(DimensionMismatch):
        BlockOperator(tuple(blocks), tuple(weights))


def test_mismatched_arithmetic():
    a = BlockOperator.identity([2], [1.0])
    with pytest.raises(DimensionMismatch):
        a + BlockOperator.identity([3], [1.0])
    with pytest.raises(DimensionMismatch):
        a + BlockOperator.identity([2], [0.5])


def test_blocks_are_read_only():
    a = BlockOperator.identity([2], [1.0])
    with pytest.raises(ValueError):
        a.blocks[0][0, 0] = 5


@pytest.mark.parametrize("dims, weights, expected", [
    ([3], [1.0], 3.0),
    ([2, 2], [1.0, 0.5], 3.0),
    ([1, 4], [0.25, 2.0], 8.25),
])
def test_trace_of_identity(dims, weights, expected):
    assert weighted_trace(BlockOperator.identity(dims, weights)) == pytest.approx(expected)


def test_trace_unitary_invariance(rng):
    X = random_operator(rng, hermitian=False)
    Us = [np.linalg.qr(random_hermitian(rng, d) + 1j * np.eye(d))[0] for d in X.dims]
    Y = X.with_blocks([u @ b @ u.conj().T for u, b in zip(Us, X.blocks)])
    assert abs(weighted_trace(X) - weighted_trace(Y)) <= 1e-10


def test_trace_norm_examples(rng):
    assert trace_norm(BlockOperator.diag([1.0, -2.0])) == pytest.approx(3.0)
    assert trace_norm(BlockOperator.diag([0.0, 0.0])) == 0.0
    for _ in range(5):
        X = random_operator(rng, hermitian=False)
        assert trace_norm(X) >= abs(weighted_trace(X))


def test_trace_positivity(rng):
    X = random_operator(rng, hermitian=False)
    t = weighted_trace(X.adjoint() @ X)
    assert t.real >= 0 and abs(t.imag) < 1e-12


def test_apply_function_examples():
    d = eigh(BlockOperator.diag([1.0, 2.0]))
    np.testing.assert_allclose(apply_function(lambda x: x ** 2, d).blocks[0], np.diag([1, 4]), atol=1e-15)
    np.testing.assert_allclose(apply_function(lambda x: np.ones_like(x), d).blocks[0], np.eye(2), atol=1e-15)


def test_apply_identity_returns_source(rng):
    A = random_operator(rng)
    B = apply_function(lambda x: x, eigh(A))
    assert uniform_norm(A - B) <= 1e-10
    assert B.hermitian_flag


def test_apply_function_domain_error():
    d = eigh(BlockOperator.diag([0.0, 1.0]))
    with pytest.raises(FunctionDomain):
        apply_function(lambda x: 1.0 / x, d)


def test_spectral_mapping(rng):
    A = random_operator(rng)
    d = eigh(A)
    B = apply_function(np.cos, d)
    for lam, mu in zip(d.eigenvalues, eigh(B).eigenvalues):
        np.testing.assert_allclose(np.sort(np.cos(lam)), mu, atol=1e-10)


def test_exponential_matches_fourier_quadrature(rng):
    # exp(i lambda) is the transform of the single atom sqrt(2 pi) at s = 1
    from opcalc.functions import WienerFunction, fourier_measure

    H = BlockOperator.hermitian([random_hermitian(rng, 4)])
    d = eigh(H)
    m = fourier_measure(WienerFunction.complex_exponential(1.0))
    locs, masses = m.atomized()
    via_measure = sum(c / np.sqrt(2 * np.pi) * apply_function(lambda x, s=s: np.exp(1j * s * x), d).blocks[0]
                      for s, c in zip(locs, masses))
    direct = apply_function(lambda x: np.exp(1j * x), d).blocks[0]
    assert np.linalg.norm(via_measure - direct, 2) <= 1e-8


def test_spectral_projection_examples():
    d = eigh(BlockOperator.diag([0.0, 1.0]))
    p = spectral_projection(d, -np.inf, 0.5)
    np.testing.assert_allclose(p.projection.blocks[0], np.diag([1, 0]))
    assert p.weighted_rank == 1
    assert spectral_projection(d, 0.2, 0.2).weighted_rank == 0
    full = spectral_projection(d, -np.inf, np.inf)
    np.testing.assert_allclose(full.projection.blocks[0], np.eye(2))
    with pytest.raises(ValueError):
        spectral_projection(d, 1.0, 0.0)


def test_projection_is_idempotent_and_weighted(rng):
    A = random_operator(rng)
    p = spectral_projection(eigh(A), -0.5, 1.0)
    P = p.projection
    assert uniform_norm(P @ P - P) <= 1e-10
    assert uniform_norm(P - P.adjoint()) <= 1e-10
    assert p.weighted_rank == pytest.approx(weighted_trace(P).real, abs=1e-10)


def test_resolution_of_identity(rng):
    A = random_operator(rng)
    d = eigh(A)
    edges = [-np.inf, -1.0, 0.0, 0.7, np.inf]
    total = None
    for a, b in zip(edges[:-1], edges[1:]):
        P = spectral_projection(d, a, b).projection
        total = P if total is None else total + P
    assert uniform_norm(total - BlockOperator.identity(A.dims, A.weights)) <= 1e-10


def test_kernel_projection_examples():
    d = eigh(BlockOperator.diag([0.0, 1.0]))
    assert kernel_projection(d, 0.0).weighted_rank == 1
    assert kernel_projection(d, 0.5).weighted_rank == 0
    assert kernel_projection(eigh(BlockOperator.diag([0.0], weight=0.25)), 0.0).weighted_rank == 0.25
    with pytest.raises(ValueError):
        kernel_projection(d, 0.0, tol=0.0)


def test_counting_function():
    d = eigh(BlockOperator.hermitian([np.diag([0.0, 1.0]), np.diag([1.0])], [1.0, 0.5]))
    assert counting_function(d, 1.0) == (2, 1)
    assert counting_function(d, 1.0, strict=True) == (1, 0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), d=st.integers(1, 6), w=st.floats(0.05, 5.0))
def test_trace_linearity_property(seed, d, w):
    rng = np.random.default_rng(seed)
    X = BlockOperator.hermitian([random_hermitian(rng, d)], [w])
    Y = BlockOperator.hermitian([random_hermitian(rng, d)], [w])
    lhs = weighted_trace(X * 2.0 + Y)
    assert abs(lhs - (2 * weighted_trace(X) + weighted_trace(Y))) <= 1e-10 * (1 + abs(lhs))
