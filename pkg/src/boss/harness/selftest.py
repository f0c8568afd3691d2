"""Fast invariant suite run by ``boss selftest``.

Every check runs at a fixed seed, reports a measured value next to its
threshold, and never raises; a check that crashes is reported as failed.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from ..algorithms import theorem1_params
from ..base_policies import meta_exploit, meta_explore
from ..environment import Ellipsoid, RewardStream
from ..subspace_geom import complement, principal_angle_dist, random_basis, residual_norm, stiefel_project
from ..subspace_select import CostParams, ExpertState, ewa_update, surrogate_cost

SEED = 20240613


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"[{tag}] {self.name}: measured={self.measured:.3e} threshold={self.threshold:.3e}{extra}"


@dataclass(frozen=True)
class Report:
    checks: list
    seconds: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def text(self) -> str:
        lines = [c.line() for c in self.checks]
        n_ok = sum(c.passed for c in self.checks)
        lines.append(f"{n_ok}/{len(self.checks)} checks passed in {self.seconds:.2f}s")
        return "\n".join(lines)


def _check_complement(rng, projection):
    worst = 0.0
    for _ in range(200):
        d = int(rng.integers(2, 12))
        m = int(rng.integers(1, d))
        B = random_basis(d, m, rng)
        C = complement(B)
        worst = max(worst, np.linalg.norm(C.T @ B), np.linalg.norm(C.T @ C - np.eye(d - m)))
    return worst, 1e-10, ""


def _check_complement_independence(rng, projection):
    worst = 0.0
    for _ in range(200):
        d, m = 8, 3
        B = random_basis(d, m, rng)
        C1 = complement(B)
        Q, _ = np.linalg.qr(rng.standard_normal((d - m, d - m)))
        C2 = C1 @ Q
        phi = rng.standard_normal(d)
        worst = max(worst, abs(np.linalg.norm(C1.T @ phi) - np.linalg.norm(C2.T @ phi)))
    return worst, 1e-9, ""


def _check_residual_identity(rng, projection):
    worst = 0.0
    for _ in range(500):
        B = random_basis(10, 3, rng)
        phi = rng.standard_normal(10)
        worst = max(worst, abs(residual_norm(B, phi) - np.linalg.norm(complement(B).T @ phi)))
    return worst, 1e-8, ""


def _check_contraction(rng, projection):
    """Projected random matrices: orthonormal output and dist^2 <= ||A - B||_F^2."""
    worst_excess = -np.inf
    worst_ortho = 0.0
    for _ in range(1000):
        d = int(rng.integers(3, 10))
        m = int(rng.integers(1, d))
        A = projection(rng.standard_normal((d, m)))
        B = random_basis(d, m, rng)
        worst_ortho = max(worst_ortho, float(np.linalg.norm(A.T @ A - np.eye(m))))
        dist = float(np.linalg.norm(complement(B).T @ A))
        worst_excess = max(worst_excess, dist**2 - float(np.linalg.norm(A - B)) ** 2)
    # a valid projection gives orthonormal output and satisfies the inequality
    measured = max(worst_ortho, worst_excess)
    return measured, 1e-8, f"orthonormality error {worst_ortho:.2e}, max excess {worst_excess:.2e}"


def _check_procrustes(rng, projection):
    worst = -np.inf
    for _ in range(100):
        X = rng.standard_normal((4, 2))
        P = projection(X)
        base = np.linalg.norm(P - X)
        for _ in range(100):
            Q = random_basis(4, 2, rng)
            worst = max(worst, base - np.linalg.norm(Q - X))
    return worst, 1e-10, "max of ||P - X|| - ||Q - X|| over sampled Q"


def _check_angle_oracle(rng, projection):
    worst = 0.0
    for _ in range(500):
        A = random_basis(6, 2, rng)
        B = random_basis(6, 2, rng)
        worst = max(worst, abs(principal_angle_dist(A, B) - np.linalg.norm(complement(A).T @ B)))
    return worst, 1e-8, ""


def _check_ols_explore(rng, projection):
    E = Ellipsoid.diagonal([4.0, 2.0, 1.0, 3.0, 1.5])
    worst = 0.0
    for _ in range(50):
        theta = rng.standard_normal(5)
        theta *= rng.uniform(0.2, 1.0) / np.linalg.norm(theta)
        out = meta_explore(E, theta, 50, 20, RewardStream(0.0, rng))
        worst = max(worst, float(np.linalg.norm(out.theta_hat - theta)))
    return worst, 1e-10, "noiseless meta_explore recovers theta"


def _check_ols_exploit(rng, projection):
    E = Ellipsoid.sphere(10)
    worst = 0.0
    for _ in range(50):
        B = random_basis(10, 3, rng)
        theta = B @ rng.standard_normal(3)
        out = meta_exploit(E, theta, B, 100, 30, RewardStream(0.0, rng))
        worst = max(worst, float(np.linalg.norm(out.theta_hat - theta)))
    return worst, 1e-10, "noiseless meta_exploit recovers theta in span"


def _check_ols_lstsq(rng, projection):
    E = Ellipsoid.diagonal([2.0, 1.0, 3.0, 1.0])
    theta = np.array([0.3, -0.2, 0.5, 0.1])
    s1, s2 = np.random.default_rng(1), np.random.default_rng(1)
    out = meta_explore(E, theta, 40, 12, RewardStream(1.0, s1))
    A = E.lambda0 * np.repeat(np.eye(4), 3, axis=0)
    r = A @ theta + s2.standard_normal(12)
    ref = np.linalg.lstsq(A, r, rcond=None)[0]
    return float(np.linalg.norm(out.theta_hat - ref)), 1e-10, "closed form vs generic least squares"


def _check_ewa_example(rng, projection):
    state = ExpertState.uniform(np.zeros((2, 2, 1)))
    new = ewa_update(state, [0.0, 1.0])
    return float(np.abs(new.weights - [2 / 3, 1 / 3]).max()), 1e-12, "losses (0, 1) from uniform"


def _check_ewa_distribution(rng, projection):
    state = ExpertState.uniform(np.zeros((50, 2, 1)))
    worst_sum = 0.0
    monotone_violation = 0.0
    for _ in range(5000):
        losses = np.where(rng.random(50) < 0.5, 1.0, 0.0)
        losses[0] = 0.0
        prev = state.weights[0]
        state = ewa_update(state, losses)
        worst_sum = max(worst_sum, abs(state.weights.sum() - 1.0))
        monotone_violation = max(monotone_violation, prev - state.weights[0])
        if not np.all(np.isfinite(state.weights)):
            return math.inf, 1e-12, "non-finite weights"
    return max(worst_sum, monotone_violation), 1e-12, "sum-to-one and zero-loss monotonicity over 5000 updates"


def _check_importance_weighting(rng, projection):
    B = random_basis(6, 2, rng)
    params = CostParams.from_lengths(400, 40, 2, 0.5, 0.5)
    worst = 0.0
    for p in (0.1, 0.5, 1.0):
        n = 10_000
        theta_hat = (B @ np.array([0.6, 0.0]))[None] + 0.4 * rng.standard_normal((n, 6))
        cost = np.array([surrogate_cost(B, t, params) for t in theta_hat])
        Z = rng.random(n) < p
        weighted = cost * Z / p
        se = weighted.std(ddof=1) / math.sqrt(n)
        worst = max(worst, abs(weighted.mean() - cost.mean()) / max(se, 1e-300))
    return worst, 3.0, "|mean(C Z/p) - mean(C)| in standard errors, worst over p"


def _check_theorem1(rng, projection):
    bp = theorem1_params(4000, 500, 10, 3)
    err = max(abs(bp.p - (6 * math.sqrt(500) / 4000) ** (2 / 3)), abs(bp.tau2 - 66))
    return err, 1e-12, f"p={bp.p:.6f}, tau2={bp.tau2}"


CHECKS = (
    ("complement orthonormality", _check_complement),
    ("complement independence", _check_complement_independence),
    ("residual identity", _check_residual_identity),
    ("principal angle oracle", _check_angle_oracle),
    ("contraction", _check_contraction),
    ("procrustes optimality", _check_procrustes),
    ("ols explore exactness", _check_ols_explore),
    ("ols exploit exactness", _check_ols_exploit),
    ("ols closed form vs lstsq", _check_ols_lstsq),
    ("ewa two-expert example", _check_ewa_example),
    ("ewa distribution", _check_ewa_distribution),
    ("importance weighting unbiased", _check_importance_weighting),
    ("theorem1 parameters", _check_theorem1),
)


def selftest(projection=stiefel_project, seed: int = SEED) -> Report:
    """Run every check; ``projection`` substitutes the Stiefel projection (negative-control hook)."""
    t0 = time.perf_counter()
    results = []
    for i, (name, fn) in enumerate(CHECKS):
        rng = np.random.default_rng([seed, i])
        try:
            measured, threshold, detail = fn(rng, projection)
            passed = bool(measured <= threshold)
        except Exception as exc:  # a crashing check is a failing check
            measured, threshold, detail, passed = math.nan, math.nan, f"{type(exc).__name__}: {exc}", False
        results.append(CheckResult(name, passed, float(measured), float(threshold), detail))
    return Report(results, time.perf_counter() - t0)
