import numpy as np
import pytest

from willems.numerics import (
    RankTolerance,
    SubspaceBasis,
    as_matrix,
    as_vector,
    least_squares,
    numerical_rank,
    orthonormal_image,
    right_kernel,
    subspace_contains,
    subspace_equal,
    subspace_from_columns,
    subspace_gap,
    subspace_sum,
)


def test_as_matrix_promotes_vectors_and_rejects_junk():
    m = as_matrix([1.0, 2.0])
    assert m.shape == (2, 1)
    with pytest.raises(ValueError):
        as_matrix(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        as_matrix([[np.nan, 0.0]])
    with pytest.raises(ValueError):
        as_vector([np.inf])


def test_rank_on_exact_cases():
    assert numerical_rank([[1.0, 2.0], [2.0, 4.0]]) == 1
    assert numerical_rank(np.eye(3)) == 3
    assert numerical_rank(np.zeros((3, 2))) == 0
    assert numerical_rank(np.zeros((0, 4))) == 0


def test_rank_is_scale_invariant():
    # the default tolerance is relative to sigma_max, so a global rescale
    # never changes the answer
    rng = np.random.default_rng(11)
    for _ in range(25):
        a = rng.normal(size=(5, 3)) @ rng.normal(size=(3, 6))
        r = numerical_rank(a)
        assert numerical_rank(1e-12 * a) == r
        assert numerical_rank(1e12 * a) == r


def test_rank_tolerance_override():
    a = np.diag([1.0, 1e-5])
    assert numerical_rank(a) == 2
    assert numerical_rank(a, RankTolerance(1e-3)) == 1
    with pytest.raises(ValueError):
        RankTolerance(-1.0)


def test_least_squares_hand_case():
    # min over x of ||(x, x) - (1, 0)||: x = 1/2, residual sqrt(1/2)
    x, res = least_squares([[1.0], [1.0]], [1.0, 0.0])
    assert np.allclose(x, [0.5])
    assert res == pytest.approx(np.sqrt(0.5), rel=1e-12)


def test_least_squares_minimum_norm_pick():
    # a = [1, 1] row vector: solutions of x0 + x1 = 2 form a line; the
    # minimum-norm one is (1, 1)
    x, res = least_squares([[1.0, 1.0]], [2.0])
    assert np.allclose(x, [1.0, 1.0])
    assert res < 1e-12


def test_least_squares_matrix_rhs():
    a = np.array([[2.0, 0.0], [0.0, 4.0], [0.0, 0.0]])
    b = np.array([[2.0, 4.0], [8.0, 0.0], [1.0, 0.0]])
    x, res = least_squares(a, b)
    assert x.shape == (2, 2)
    assert np.allclose(x, [[1.0, 2.0], [2.0, 0.0]])
    assert res == pytest.approx(1.0)  # the (0,0,1) column is unreachable
    with pytest.raises(ValueError):
        least_squares(a, np.zeros(2))


def test_orthonormal_image_and_kernel_shapes():
    rng = np.random.default_rng(3)
    for _ in range(40):
        rows = int(rng.integers(1, 7))
        cols = int(rng.integers(1, 7))
        inner = int(rng.integers(0, min(rows, cols) + 1))
        a = rng.normal(size=(rows, inner)) @ rng.normal(size=(inner, cols))
        img = orthonormal_image(a)
        ker = right_kernel(a)
        assert img.shape[1] + ker.shape[1] == cols  # rank + nullity
        assert img.shape[1] == numerical_rank(a)
        if img.size:
            assert np.allclose(img.T @ img, np.eye(img.shape[1]))
        if ker.size:
            assert np.linalg.norm(a @ ker) < 1e-10 * max(1, np.linalg.norm(a))


def test_image_of_zero_matrix_is_empty():
    img = orthonormal_image(np.zeros((4, 2)))
    assert img.shape == (4, 0)
    assert right_kernel(np.zeros((2, 3))).shape == (3, 3)


def test_subspace_basis_validation():
    with pytest.raises(ValueError):
        SubspaceBasis(3, np.ones((3, 2)))  # not orthonormal
    with pytest.raises(ValueError):
        SubspaceBasis(2, np.eye(3))  # ambient mismatch
    s = SubspaceBasis(3, np.zeros((3, 0)))
    assert s.dim == 0


def test_subspace_gap_hand_value():
    # span{e1} vs span{(1,1)/sqrt 2}: the projection residual of either unit
    # basis vector onto the other line has norm sin(45 deg) = sqrt(1/2)
    a = subspace_from_columns([[1.0], [0.0]])
    b = subspace_from_columns([[1.0], [1.0]])
    assert subspace_gap(a, b) == pytest.approx(np.sqrt(0.5), rel=1e-12)
    assert subspace_gap(a, a) == 0.0


def test_subspace_gap_is_basis_independent():
    rng = np.random.default_rng(7)
    for _ in range(30):
        cols = rng.normal(size=(6, 3))
        s1 = subspace_from_columns(cols)
        # same span, different generating columns
        mix = cols @ (rng.normal(size=(3, 3)) + 3 * np.eye(3))
        s2 = subspace_from_columns(mix)
        assert subspace_gap(s1, s2) < 1e-9
        assert subspace_equal(s1, s2)


def test_subspace_sum_and_membership():
    e1 = subspace_from_columns([[1.0], [0.0], [0.0]])
    e2 = subspace_from_columns([[0.0], [1.0], [0.0]])
    plane = subspace_sum(e1, e2)
    assert plane.dim == 2
    assert subspace_contains(plane, [1.0, -2.0, 0.0])
    assert not subspace_contains(plane, [0.0, 0.0, 1.0])
    assert subspace_contains(plane, [0.0, 0.0, 0.0])  # zero is everywhere
    with pytest.raises(ValueError):
        subspace_sum(e1, subspace_from_columns(np.eye(2)))


def test_subspace_equal_needs_matching_dims():
    line = subspace_from_columns([[1.0], [0.0]])
    plane = subspace_from_columns(np.eye(2))
    assert not subspace_equal(line, plane)
    assert subspace_contains(plane, [0.3, -0.7])
