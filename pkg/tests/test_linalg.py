import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.services.base import DimMismatchError, NotPsdError, NumericError, SingularMatrixError
from app.services.linalg import (
    floored_inverse,
    full_row_rank,
    generalized_eigh,
    generalized_top_eigvecs,
    inertia,
    sym_inv_sqrt,
    sym_sqrt,
    symmetrize,
    top_nonzero_eigvecs,
    whitened_row_basis,
)


def test_symmetrize_rejects_non_square():
    with pytest.raises(DimMismatchError):
        symmetrize(np.ones((2, 3)))


def test_sym_sqrt_squares_back(rng, psd):
    m = psd(rng, 5)
    root = sym_sqrt(m)
    assert_allclose(root @ root, m, atol=1e-10)
    assert_allclose(root, root.T)


def test_sym_sqrt_rejects_indefinite():
    with pytest.raises(NotPsdError):
        sym_sqrt(np.diag([1.0, -1.0]))


def test_sym_inv_sqrt_whitens(rng, psd):
    m = psd(rng, 4)
    w = sym_inv_sqrt(m)
    assert_allclose(w @ m @ w, np.eye(4), atol=1e-10)


def test_sym_inv_sqrt_rejects_singular():
    with pytest.raises(SingularMatrixError):
        sym_inv_sqrt(np.diag([1.0, 0.0]))


def test_floored_inverse_floors_tiny_eigenvalues():
    m = np.diag([1.0, 1e-16])
    inv = floored_inverse(m, 1e-12, name="test matrix")
    assert_allclose(np.diag(inv), [1.0, 1e12])


def test_floored_inverse_rejects_zero_matrix():
    with pytest.raises(SingularMatrixError):
        floored_inverse(np.zeros((2, 2)))


def test_top_nonzero_eigvecs_skips_zero_eigenvalues():
    m = np.diag([3.0, 0.0, -1.0])
    selection = top_nonzero_eigvecs(m, 3)
    assert selection.count == 2
    assert_allclose(selection.values, [3.0, -1.0])
    assert_allclose(np.abs(selection.vectors[:, 0]), [1.0, 0.0, 0.0])


def test_top_nonzero_eigvecs_is_descending_and_orthonormal(rng, psd):
    m = psd(rng, 6) - 0.5 * np.eye(6)
    selection = top_nonzero_eigvecs(m, 4)
    assert np.all(np.diff(selection.values) <= 0)
    assert_allclose(selection.vectors.T @ selection.vectors, np.eye(4), atol=1e-10)


def test_top_nonzero_eigvecs_is_deterministic(rng, psd):
    m = psd(rng, 5)
    first = top_nonzero_eigvecs(m, 3)
    second = top_nonzero_eigvecs(m.copy(), 3)
    assert np.array_equal(first.vectors, second.vectors)


def test_generalized_eigh_solves_pencil(rng, psd):
    a = symmetrize(rng.standard_normal((5, 5)))
    b = psd(rng, 5)
    values, vectors = generalized_eigh(a, b)
    assert np.all(np.diff(values) >= 0)
    assert_allclose(np.linalg.norm(vectors, axis=0), np.ones(5))
    for value, v in zip(values, vectors.T):
        assert np.linalg.norm(a @ v - value * b @ v) < 1e-8


def test_generalized_top_eigvecs_picks_largest(rng, psd):
    a = symmetrize(rng.standard_normal((4, 4)))
    b = psd(rng, 4)
    values, _ = generalized_eigh(a, b)
    top = generalized_top_eigvecs(a, b, 2)
    assert_allclose(top.values, values[::-1][:2])


def test_inertia_counts_signs():
    assert inertia(np.diag([2.0, 1.0, 0.0, -3.0])) == (2, 1, 1)


def test_whitened_row_basis_identity(rng, psd):
    T = psd(rng, 6)
    C = rng.standard_normal((3, 6))
    U = whitened_row_basis(C, T)
    W = sym_inv_sqrt(T)
    direct = C.T @ np.linalg.solve(C @ T @ C.T, C)
    assert U.shape == (6, 3)
    assert_allclose(W @ U @ U.T @ W, direct, atol=1e-8)


def test_full_row_rank():
    assert full_row_rank(np.eye(2, 3))
    assert not full_row_rank(np.array([[1.0, 2.0], [2.0, 4.0]]))
    assert not full_row_rank(np.ones((3, 2)))


@pytest.mark.parametrize("bad", [np.inf, -np.inf, np.nan])
def test_symmetrize_rejects_non_finite_entries(bad):
    m = np.eye(2)
    m[0, 1] = bad
    with pytest.raises(NumericError):
        symmetrize(m)


def test_inertia_of_psd_difference_is_bounded_by_ranks(rng):
    for _ in range(100):
        dim = int(rng.integers(4, 9))
        r_a, r_b = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        A_root = rng.standard_normal((dim, r_a))
        B_root = rng.standard_normal((dim, r_b))
        n_pos, n_neg, _ = inertia(A_root @ A_root.T - B_root @ B_root.T)
        assert n_pos <= r_a
        assert n_neg <= r_b


def test_congruence_keeps_the_product_of_eigenvalue_floors(rng, psd):
    for _ in range(100):
        rows, cols = int(rng.integers(1, 4)), int(rng.integers(4, 7))
        A = rng.standard_normal((rows, cols))
        B = psd(rng, cols)
        alpha = np.linalg.eigvalsh(A @ A.T)[0]
        beta = np.linalg.eigvalsh(B)[0]
        assert np.linalg.eigvalsh(A @ B @ A.T)[0] >= alpha * beta - 1e-9
