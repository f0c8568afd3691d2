import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boss.errors import CoverTooLargeError, DegenerateProjectionError, DimensionMismatchError, InvalidBasisError
from boss.subspace_geom import (
    build_eps_cover,
    check_basis,
    complement,
    cover_grid_step,
    cover_size_bound,
    principal_angle_dist,
    random_basis,
    random_bases,
    residual_norm,
    residual_norms,
    stiefel_project,
)

dims = st.integers(2, 12).flatmap(lambda d: st.tuples(st.just(d), st.integers(1, d - 1)))
seeds = st.integers(0, 2**32 - 1)


def explicit_complement(B):
    # independent oracle: null space of B^T from a full SVD
    U = np.linalg.svd(B, full_matrices=True)[0]
    return U[:, B.shape[1]:]


# complement ---------------------------------------------------------------


def test_complement_of_canonical_split():
    d, m = 5, 2
    B = np.eye(d)[:, :m]
    C = complement(B)
    assert np.array_equal(C.T @ B, np.zeros((d - m, m)))
    # C spans the remaining canonical directions
    np.testing.assert_allclose(np.abs(C[:m]), 0.0, atol=1e-15)
    np.testing.assert_allclose(C.T @ C, np.eye(d - m), atol=1e-12)


@given(dims, seeds)
def test_complement_is_orthonormal_and_orthogonal(dm, seed):
    d, m = dm
    B = random_basis(d, m, np.random.default_rng(seed))
    C = complement(B)
    assert C.shape == (d, d - m)
    assert np.linalg.norm(C.T @ B) <= 1e-10
    assert np.linalg.norm(C.T @ C - np.eye(d - m)) <= 1e-10


def test_complement_usage_on_diagonal_direction():
    B = np.ones((3, 1)) / math.sqrt(3)
    phi = np.ones(3)
    assert np.linalg.norm(complement(B).T @ phi) <= 1e-12
    assert residual_norm(B, phi) <= 1e-12


def test_complement_rejects_non_orthonormal():
    with pytest.raises(InvalidBasisError):
        complement(np.array([[1.0], [1.0], [0.0]]))
    with pytest.raises(InvalidBasisError):
        check_basis(np.eye(3))


@given(dims, seeds)
def test_complement_independence(dm, seed):
    d, m = dm
    rng = np.random.default_rng(seed)
    B = random_basis(d, m, rng)
    C1 = complement(B)
    C2 = explicit_complement(B)
    phi = rng.standard_normal(d)
    assert abs(np.linalg.norm(C1.T @ phi) - np.linalg.norm(C2.T @ phi)) <= 1e-9


# residual_norm -----------------------------------------------------------


def test_residual_hand_example():
    assert residual_norm(np.array([[1.0], [0.0]]), np.array([3.0, 4.0])) == pytest.approx(4.0, abs=1e-15)


def test_residual_contained_and_orthogonal():
    rng = np.random.default_rng(3)
    B = random_basis(7, 3, rng)
    assert residual_norm(B, B @ rng.standard_normal(3)) <= 1e-9
    phi = complement(B) @ rng.standard_normal(4)
    assert residual_norm(B, phi) == pytest.approx(np.linalg.norm(phi), abs=1e-12)


@given(dims, seeds)
def test_residual_identity(dm, seed):
    d, m = dm
    rng = np.random.default_rng(seed)
    B = random_basis(d, m, rng)
    phi = rng.standard_normal(d)
    assert abs(residual_norm(B, phi) - np.linalg.norm(explicit_complement(B).T @ phi)) <= 1e-8


def test_residual_norms_matches_scalar_form():
    rng = np.random.default_rng(5)
    stack = random_bases(50, 6, 2, rng)
    phi = rng.standard_normal(6)
    expected = [residual_norm(B, phi) for B in stack]
    np.testing.assert_allclose(residual_norms(stack, phi), expected, atol=1e-12)


def test_residual_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        residual_norm(np.eye(4)[:, :2], np.ones(3))
    with pytest.raises(DimensionMismatchError):
        residual_norms(np.zeros((2, 4, 1)), np.ones(3))


# principal_angle_dist ----------------------------------------------------


def test_principal_angle_identical_and_orthogonal():
    rng = np.random.default_rng(0)
    A = random_basis(8, 3, rng)
    assert principal_angle_dist(A, A) <= 1e-7
    I = np.eye(6)
    assert principal_angle_dist(I[:, :2], I[:, 2:4]) == pytest.approx(math.sqrt(2), abs=1e-15)


@settings(max_examples=200)
@given(seeds)
def test_principal_angle_matches_explicit_complement(seed):
    rng = np.random.default_rng(seed)
    A = random_basis(6, 2, rng)
    B = random_basis(6, 2, rng)
    assert abs(principal_angle_dist(A, B) - np.linalg.norm(explicit_complement(A).T @ B)) <= 1e-8


def test_principal_angle_symmetric_for_equal_ranks():
    rng = np.random.default_rng(9)
    A, B = random_basis(9, 4, rng), random_basis(9, 4, rng)
    assert principal_angle_dist(A, B) == pytest.approx(principal_angle_dist(B, A), abs=1e-12)


def test_principal_angle_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        principal_angle_dist(np.eye(4)[:, :2], np.eye(5)[:, :2])


@given(dims, seeds)
def test_contraction(dm, seed):
    d, m = dm
    rng = np.random.default_rng(seed)
    A = random_basis(d, m, rng)
    B = random_basis(d, m, rng)
    assert principal_angle_dist(A, B) ** 2 <= np.linalg.norm(A - B) ** 2 + 1e-8


@given(dims, seeds, st.floats(0.01, 1.0))
def test_alpha_cover_transfer(dm, seed, alpha):
    d, m = dm
    rng = np.random.default_rng(seed)
    B = random_basis(d, m, rng)
    theta = B @ rng.standard_normal(m)
    delta = rng.standard_normal(d)
    theta_hat = theta + alpha * rng.uniform() * delta / np.linalg.norm(delta)
    # contained theta: estimate inherits the threshold
    assert residual_norm(B, theta_hat) <= alpha + 1e-12
    # estimate within alpha of the subspace: truth within 2 alpha
    phi = rng.standard_normal(d)
    phi_hat = phi - B @ (B.T @ phi)
    phi_hat = B @ rng.standard_normal(m) + alpha * rng.uniform() * phi_hat / np.linalg.norm(phi_hat)
    phi_true = phi_hat + alpha * rng.uniform() * delta / np.linalg.norm(delta)
    assert residual_norm(B, phi_hat) <= alpha + 1e-12
    assert residual_norm(B, phi_true) <= 2 * alpha + 1e-12


# stiefel_project ---------------------------------------------------------


def test_stiefel_fixed_point_and_scaling():
    rng = np.random.default_rng(2)
    Q = random_basis(7, 3, rng)
    np.testing.assert_allclose(stiefel_project(Q), Q, atol=1e-10)
    np.testing.assert_allclose(stiefel_project(2.0 * Q), Q, atol=1e-10)


def test_stiefel_procrustes_optimality_sampling():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((4, 2))
    P = stiefel_project(X)
    best = np.linalg.norm(P - X)
    others = [np.linalg.norm(random_basis(4, 2, rng) - X) for _ in range(1000)]
    assert best <= min(others)


@given(dims, seeds)
def test_stiefel_output_is_basis(dm, seed):
    d, m = dm
    X = np.random.default_rng(seed).standard_normal((d, m))
    P = stiefel_project(X)
    assert np.linalg.norm(P.T @ P - np.eye(m)) <= 1e-10


def test_stiefel_rank_deficient():
    X = np.zeros((5, 2))
    X[0, 0] = 1.0
    with pytest.raises(DegenerateProjectionError):
        stiefel_project(X)


# random_basis ------------------------------------------------------------


def test_random_basis_invariants_and_determinism():
    B1 = random_basis(10, 3, np.random.default_rng(42))
    B2 = random_basis(10, 3, np.random.default_rng(42))
    assert np.array_equal(B1, B2)
    check_basis(B1)


def test_random_basis_statistical_sanity():
    stack = random_bases(10_000, 10, 3, np.random.default_rng(0))
    gram = np.einsum("kdi,kdj->kij", stack, stack) - np.eye(3)
    assert np.linalg.norm(gram, axis=(1, 2)).mean() <= 1e-10
    # Haar: E[B B^T] = (m / d) I
    proj = np.einsum("kim,kjm->ij", stack, stack) / len(stack)
    np.testing.assert_allclose(proj, 0.3 * np.eye(10), atol=0.02)


def test_random_basis_dimension_checks():
    with pytest.raises(InvalidBasisError):
        random_basis(3, 3, np.random.default_rng(0))
    with pytest.raises(InvalidBasisError):
        random_bases(2, 3, 0, np.random.default_rng(0))


# epsilon cover -----------------------------------------------------------


def sampled_cover_radius(cover, d, m, n, rng):
    stack = np.stack(cover)
    worst = 0.0
    for _ in range(n):
        B = random_basis(d, m, rng)
        cross = np.einsum("kdm,dn->kmn", stack, B)
        dist = np.sqrt(np.clip(m - np.sum(cross**2, axis=(1, 2)), 0, None))
        worst = max(worst, dist.min())
    return worst


@pytest.mark.parametrize("eps", [0.5, 1.0])
def test_eps_cover_plane(eps):
    cover = build_eps_cover(2, 1, eps)
    for C in cover:
        check_basis(C)
    assert sampled_cover_radius(cover, 2, 1, 1000, np.random.default_rng(0)) <= eps


def test_eps_cover_three_dims():
    cover = build_eps_cover(3, 1, 0.8)
    assert sampled_cover_radius(cover, 3, 1, 500, np.random.default_rng(1)) <= 0.8


def test_cover_cap_error_names_bound():
    bound = cover_size_bound(10, 3, 0.5)
    assert bound == pytest.approx((4 * 3 * math.sqrt(10) / 0.5) ** 30)
    with pytest.raises(CoverTooLargeError, match="4m"):
        build_eps_cover(10, 3, 0.5)


def test_cover_grid_step():
    assert cover_grid_step(10, 3, 0.6) == pytest.approx(0.6 / (6 * math.sqrt(10)))


def test_cover_rejects_bad_eps():
    with pytest.raises(ValueError):
        build_eps_cover(2, 1, 0.0)
