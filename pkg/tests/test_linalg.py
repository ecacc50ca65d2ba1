import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mcdlab.linalg import (
    HermiticityWarning,
    HermitianOperator,
    NotPSDError,
    bipartitions,
    eig_hermitian,
    identity,
    inv_sqrt_on_support,
    jacobi_eigh,
    ket,
    partial_trace,
    partial_transpose,
    pinv_on_support,
    projector,
    psd_sqrt,
    tensor,
    trace_norm,
)

from oracles import example_matrices, partial_transpose_second

SX = np.array([[0, 1], [1, 0]])
SZ = np.diag([1.0, -1.0])
XI = (ket((2, 3), (0, 0)) + ket((2, 3), (1, 2))) / np.sqrt(2)


def random_hermitian(rng, d, dims=None):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return HermitianOperator(a + a.conj().T, dims)


finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@st.composite
def hermitian_2x3(draw):
    re = draw(arrays(float, (6, 6), elements=finite))
    im = draw(arrays(float, (6, 6), elements=finite))
    m = re + 1j * im
    return HermitianOperator(m + m.conj().T, (2, 3))


def test_construction_symmetrizes_with_warning():
    with pytest.warns(HermiticityWarning):
        H = HermitianOperator([[1, 2], [0, 1]])
    assert np.allclose(H.matrix, [[1, 1], [1, 1]])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        HermitianOperator(SX)


def test_operator_is_immutable():
    H = HermitianOperator(SX)
    with pytest.raises(ValueError):
        H.matrix[0, 0] = 5


@pytest.mark.parametrize("bad", [np.zeros((2, 3)), np.zeros(4)])
def test_non_square_rejected(bad):
    with pytest.raises(ValueError):
        HermitianOperator(bad)


def test_dims_must_match_side():
    with pytest.raises(ValueError):
        HermitianOperator(np.eye(6), (2, 2))


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_eig_identity_and_sigma_x(method):
    assert np.allclose(eig_hermitian(identity((2, 2)), method).eigenvalues, 1)
    assert np.allclose(eig_hermitian(HermitianOperator(SX), method).eigenvalues, [-1, 1])


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_eig_example_average_state(example, method):
    # frozen from the block structure: (1/3)[[1, 1/2], [1/2, 1]] on span{|00>,|12>} plus 1/6 on |02>,|10>
    expected = [0, 0, 1 / 6, 1 / 6, 1 / 6, 1 / 2]
    _, _, _, r0 = example_matrices()
    assert np.allclose(np.linalg.eigvalsh(r0), expected, atol=1e-12)
    assert np.allclose(eig_hermitian(example.rho0, method).eigenvalues, expected, atol=1e-12)


@pytest.mark.parametrize("d", [1, 2, 5, 9])
def test_jacobi_matches_lapack(rng, d):
    H = random_hermitian(rng, d)
    wj, vj = eig_hermitian(H, "jacobi")
    wl = np.linalg.eigvalsh(H.matrix)
    assert np.allclose(wj, wl, atol=1e-10 * np.abs(wl).max())
    assert np.allclose(vj.conj().T @ vj, np.eye(d), atol=1e-10)
    recon = (vj * wj) @ vj.conj().T
    assert np.linalg.norm(recon - H.matrix) <= 1e-10 * H.norm()


def test_jacobi_degenerate_spectrum():
    # a triply degenerate eigenvalue exercises the cluster deduplication
    u = np.linalg.qr(np.random.default_rng(3).normal(size=(4, 4)) + 1j)[0]
    H = HermitianOperator(u @ np.diag([1, 1, 1, -2]) @ u.conj().T)
    w, v = eig_hermitian(H, "jacobi")
    assert np.allclose(w, [-2, 1, 1, 1], atol=1e-10)
    assert np.allclose((v * w) @ v.conj().T, H.matrix, atol=1e-10)


def test_jacobi_real_symmetric():
    a = np.array([[2.0, 1.0], [1.0, 2.0]])
    w, v = jacobi_eigh(a)
    assert np.allclose(w, [1, 3])
    assert np.allclose(v @ np.diag(w) @ v.T, a)


@given(hermitian_2x3())
def test_eig_reconstruction_property(H):
    w, v = eig_hermitian(H)
    assert np.all(np.diff(w) >= 0)
    assert np.linalg.norm((v * w) @ v.conj().T - H.matrix) <= 1e-10 * max(H.norm(), 1e-300)


def test_tensor_examples():
    assert tensor(identity(2), identity(3)) == identity((2, 3))
    p = tensor(projector(ket(2, (0,))), projector(ket(3, (2,))))
    assert p.dims == (2, 3)
    assert np.allclose(p.matrix, projector(ket((2, 3), (0, 2))).matrix)
    sx = HermitianOperator(SX)
    assert tensor(sx, sx).trace() == 0


@given(hermitian_2x3())
def test_tensor_trace_multiplicative(H):
    A = HermitianOperator(SZ + 2 * np.eye(2))
    assert np.isclose(tensor(A, H).trace(), A.trace() * H.trace(), atol=1e-9)


def test_partial_transpose_of_xi():
    P = projector(XI, (2, 3))
    expected = [-0.5, 0, 0, 0.5, 0.5, 0.5]
    oracle = partial_transpose_second(P.matrix, 2, 3)
    assert np.allclose(np.linalg.eigvalsh(oracle), expected, atol=1e-12)
    pt = partial_transpose(P, [1])
    assert np.allclose(pt.matrix, oracle)
    assert np.allclose(np.linalg.eigvalsh(pt.matrix), expected, atol=1e-12)


def test_partial_transpose_product_state_spectrum(rng):
    a = random_hermitian(rng, 2).matrix
    ra = HermitianOperator(a @ a.conj().T, 2)
    rb = HermitianOperator(np.diag([0.2, 0.3, 0.5]), 3)
    rho = tensor(ra, rb)
    assert np.allclose(np.linalg.eigvalsh(partial_transpose(rho, [1]).matrix), np.linalg.eigvalsh(rho.matrix))


@given(hermitian_2x3())
def test_partial_transpose_properties(H):
    pt1 = partial_transpose(H, [1])
    assert partial_transpose(pt1, [1]) == H
    assert np.isclose(pt1.trace(), H.trace())
    # transposing either factor gives the same spectrum
    pt0 = partial_transpose(H, [0])
    assert np.allclose(np.linalg.eigvalsh(pt0.matrix), np.linalg.eigvalsh(pt1.matrix), atol=1e-9)


def test_partial_transpose_linear(rng):
    A, B = random_hermitian(rng, 6, (2, 3)), random_hermitian(rng, 6, (2, 3))
    lhs = partial_transpose(2.0 * A - B, [1])
    rhs = 2.0 * partial_transpose(A, [1]) - partial_transpose(B, [1])
    assert np.allclose(lhs.matrix, rhs.matrix)


def test_partial_transpose_index_out_of_range():
    with pytest.raises(IndexError):
        partial_transpose(identity((2, 3)), [2])


def test_partial_trace_examples(rng):
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    ra = HermitianOperator(a @ a.conj().T / np.trace(a @ a.conj().T).real)
    rb = HermitianOperator(np.diag([0.2, 0.3, 0.5]))
    assert np.allclose(partial_trace(tensor(ra, rb), [1]).matrix, ra.matrix)
    red = partial_trace(projector(XI, (2, 3)), [1])
    assert np.allclose(red.matrix, np.diag([0.5, 0.5]))
    full = partial_trace(tensor(ra, rb), [0, 1])
    assert full.dims == (1,) and np.isclose(full.matrix[0, 0], 1)


@given(hermitian_2x3())
def test_partial_trace_preserves_trace(H):
    assert np.isclose(partial_trace(H, [0]).trace(), H.trace(), atol=1e-9)
    assert partial_trace(H, [0]).dims == (3,)


def test_psd_sqrt_examples(example):
    assert psd_sqrt(identity(3)) == identity(3)
    assert np.allclose(psd_sqrt(HermitianOperator(np.diag([4.0, 9.0]))).matrix, np.diag([2, 3]))
    s = psd_sqrt(example.rho0).matrix
    assert np.allclose(s @ s, example.rho0.matrix, atol=1e-12)


def test_psd_sqrt_rejects_negative():
    with pytest.raises(NotPSDError):
        psd_sqrt(HermitianOperator(SZ))
    # tiny negative eigenvalues are clamped
    s = psd_sqrt(HermitianOperator(np.diag([1.0, -1e-13])))
    assert np.allclose(s.matrix, np.diag([1, 0]))


@given(hermitian_2x3())
def test_psd_sqrt_squares_back(H):
    G = H.matrix @ H.matrix
    s = psd_sqrt(HermitianOperator(G, (2, 3))).matrix
    assert np.linalg.norm(s @ s - G) <= 1e-9 * max(np.linalg.norm(G), 1e-300)


def test_pinv_examples(example, rng):
    assert np.allclose(pinv_on_support(HermitianOperator(np.diag([2.0, 0.0]))).matrix, np.diag([0.5, 0]))
    H = random_hermitian(rng, 4)
    assert np.allclose(pinv_on_support(H).matrix, np.linalg.inv(H.matrix), atol=1e-10)
    assert np.linalg.matrix_rank(pinv_on_support(example.rho0).matrix, tol=1e-8) == 4
    z = HermitianOperator(np.zeros((2, 2)))
    assert pinv_on_support(z) == z


def test_pinv_projects_onto_support(example):
    r = example.rho0.matrix
    p = r @ pinv_on_support(example.rho0).matrix
    w, v = np.linalg.eigh(r)
    sup = v[:, w > 1e-9]
    assert np.allclose(p, sup @ sup.conj().T, atol=1e-9)
    assert np.allclose(r @ pinv_on_support(example.rho0).matrix @ r, r, atol=1e-12)


def test_inv_sqrt_ignores_roundoff_eigenvalues():
    # a 1e-17 eigenvalue must not survive the support cut after the square root
    u = np.linalg.qr(np.random.default_rng(0).normal(size=(3, 3)))[0]
    H = HermitianOperator(u @ np.diag([1e-17, 0.25, 0.75]) @ u.T)
    s = inv_sqrt_on_support(H).matrix
    assert np.allclose(np.linalg.eigvalsh(s), [0, 1 / np.sqrt(0.75), 2], atol=1e-9)


def test_trace_norm_examples(example):
    assert np.isclose(trace_norm(example.rho0), 1)
    assert np.isclose(trace_norm(HermitianOperator(SZ)), 2)
    # frozen oracle value: eigenvalues {-1/10, 1/10, 1/10, 1/10, 0, 0}
    r1, _, _, r0 = example_matrices()
    oracle = np.sum(np.abs(np.linalg.eigvalsh(0.6 * r0 - 0.4 * r1)))
    assert np.isclose(oracle, 0.4, atol=1e-12)
    assert np.isclose(trace_norm(0.6 * example.rho0 - 0.4 * example.states[0]), 0.4, atol=1e-12)


@pytest.mark.parametrize("m,expected", [(1, []), (2, [(1,)]), (3, [(1,), (2,), (1, 2)])])
def test_bipartitions(m, expected):
    assert bipartitions(m) == expected


def test_arithmetic_checks_dims():
    with pytest.raises(ValueError):
        identity(6) + identity((2, 3))
    with pytest.raises(TypeError):
        identity(2) * 1j
    assert (identity(2) * 2).trace() == 4
