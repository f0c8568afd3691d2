"""Subspace geometry on the Stiefel manifold.

A *basis* throughout the package is a plain ``(d, m)`` float array whose
columns are orthonormal.  Nothing here needs an explicit orthogonal
complement except :func:`complement` itself; residuals and principal-angle
distances are computed from projections so they do not depend on which
complement one would pick.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import (
    CoverTooLargeError,
    DegenerateProjectionError,
    DimensionMismatchError,
    InvalidBasisError,
)

ORTHO_TOL = 1e-10
DEFAULT_COVER_CAP = 10**7


def check_basis(B, tol: float = ORTHO_TOL) -> np.ndarray:
    """Return ``B`` as a float array after validating column-orthonormality."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2:
        raise InvalidBasisError(f"basis must be 2-D, got shape {B.shape}")
    d, m = B.shape
    if not 1 <= m < d:
        raise InvalidBasisError(f"basis needs 1 <= m < d, got d={d}, m={m}")
    err = np.linalg.norm(B.T @ B - np.eye(m))
    if not err <= tol:
        raise InvalidBasisError(f"columns are not orthonormal (||B^T B - I||_F = {err:.3e})")
    return B


def complement(B) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of span(B), shape (d, d-m).

    Completes ``B`` to a full orthonormal frame with a complete QR
    factorisation; the trailing ``d - m`` columns of Q span the complement.
    """
    B = check_basis(B)
    m = B.shape[1]
    Q, _ = np.linalg.qr(B, mode="complete")
    C = Q[:, m:]
    # Householder QR is accurate to machine precision, but snap the tiny
    # leakage into span(B) so C^T B is at round-off level.
    C = C - B @ (B.T @ C)
    C, _ = np.linalg.qr(C)
    return C


def residual_norm(B, phi) -> float:
    """``||phi - B B^T phi||_2``, the distance from ``phi`` to span(B)."""
    B = np.asarray(B, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (B.shape[0],):
        raise DimensionMismatchError(f"vector of shape {phi.shape} vs basis with d={B.shape[0]}")
    return float(np.linalg.norm(phi - B @ (B.T @ phi)))


def residual_norms(bases: np.ndarray, phi) -> np.ndarray:
    """Vectorised :func:`residual_norm` over a stack of bases of shape (K, d, m)."""
    phi = np.asarray(phi, dtype=float)
    if bases.ndim != 3 or bases.shape[1] != phi.shape[0]:
        raise DimensionMismatchError(f"stack {bases.shape} vs vector {phi.shape}")
    coef = np.einsum("kdm,d->km", bases, phi)
    # ||phi - B B^T phi||^2 = ||phi||^2 - ||B^T phi||^2 for orthonormal B
    sq = phi @ phi - np.einsum("km,km->k", coef, coef)
    return np.sqrt(np.clip(sq, 0.0, None))


def principal_angle_dist(A, B) -> float:
    """Frobenius norm of the sines of the principal angles, ``||A_perp^T B||_F``.

    ``A`` and ``B`` must share the ambient dimension.  ``B`` may have a
    different number of columns than ``A``; this is how the distance of an
    estimate to a partially revealed subspace is measured.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or B.ndim != 2 or A.shape[0] != B.shape[0]:
        raise DimensionMismatchError(f"bases of shape {A.shape} and {B.shape}")
    cross = A.T @ B
    return math.sqrt(max(B.shape[1] - float(np.sum(cross * cross)), 0.0))


def stiefel_project(X) -> np.ndarray:
    """Frobenius-nearest column-orthonormal matrix to ``X`` (its polar factor)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] > X.shape[0]:
        raise DimensionMismatchError(f"expected a tall d x m matrix, got {X.shape}")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if s[-1] <= 1e-12:
        raise DegenerateProjectionError(f"matrix is rank deficient (smallest singular value {s[-1]:.3e})")
    return U @ Vt


def random_basis(d: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed point on the Stiefel manifold V(d, m)."""
    if not 1 <= m < d:
        raise InvalidBasisError(f"need 1 <= m < d, got d={d}, m={m}")
    G = rng.standard_normal((d, m))
    Q, R = np.linalg.qr(G)
    # sign fix makes Q exactly Haar distributed
    return Q * np.sign(np.diag(R))


def random_bases(K: int, d: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """``K`` independent Haar bases stacked into shape (K, d, m)."""
    if not 1 <= m < d:
        raise InvalidBasisError(f"need 1 <= m < d, got d={d}, m={m}")
    G = rng.standard_normal((K, d, m))
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diagonal(R, axis1=1, axis2=2))
    return Q * signs[:, None, :]


def cover_size_bound(d: int, m: int, epsilon: float) -> float:
    """Cardinality bound ``(4 m sqrt(d) / epsilon) ** (d m)`` of the Frobenius grid cover."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return (4 * m * math.sqrt(d) / epsilon) ** (d * m)


def cover_grid_step(d: int, m: int, epsilon: float) -> float:
    return epsilon / (2 * m * math.sqrt(d))


def build_eps_cover(d: int, m: int, epsilon: float, cap: int = DEFAULT_COVER_CAP) -> list[np.ndarray]:
    """Exact epsilon-cover of the Stiefel manifold in the principal-angle sense.

    Discretises the cube ``[-sqrt(m), sqrt(m)]^(d m)`` containing the
    Frobenius ball of radius ``sqrt(m)``, then maps every grid point through
    :func:`stiefel_project`.  Only feasible for tiny ``d * m``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not 1 <= m < d:
        raise InvalidBasisError(f"need 1 <= m < d, got d={d}, m={m}")
    bound = cover_size_bound(d, m, epsilon)
    h = cover_grid_step(d, m, epsilon)
    radius = math.sqrt(m)
    per_axis = np.arange(-radius, radius + h, h)
    n_points = float(len(per_axis)) ** (d * m)
    if bound > cap or n_points > cap:
        raise CoverTooLargeError(
            f"cover needs up to (4m*sqrt(d)/eps)^(dm) = {bound:.3e} experts "
            f"(grid of {n_points:.3e} points); cap is {cap:.0e}"
        )
    # points within half a cell diagonal of the ball still matter for the cover
    reach = radius + 0.5 * h * math.sqrt(d * m)
    cover, seen = [], set()
    for point in itertools.product(per_axis, repeat=d * m):
        X = np.asarray(point).reshape(d, m)
        if np.linalg.norm(X) > reach:
            continue
        try:
            P = stiefel_project(X)
        except DegenerateProjectionError:
            continue
        # grid points on a common ray project to the same basis
        key = tuple(np.round(P, 9).ravel() + 0.0)
        if key not in seen:
            seen.add(key)
            cover.append(P)
    return cover
