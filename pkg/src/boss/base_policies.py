"""Per-task procedures: full-dimensional meta-exploration and subspace meta-exploitation.

Both play a block of spanning actions, fit ordinary least squares in closed
form (the action Gram matrix is a multiple of the identity), then play the
greedy action for the rest of the task.  Pseudo-regret is measured against
the true parameter by the caller's simulator; the estimators never see it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .environment import Ellipsoid, RewardStream, greedy_action, optimal_value, pull_many
from .errors import ConfigError, DimensionMismatchError


@dataclass(frozen=True)
class ExploreOutcome:
    theta_hat: np.ndarray
    pseudo_regret: float
    actions_taken: int


@dataclass(frozen=True)
class ExploitOutcome:
    w_hat: np.ndarray
    theta_hat: np.ndarray
    pseudo_regret: float
    actions_taken: int


def _check_length(name, value, unit, unit_name, tau):
    if value < 1 or value % unit:
        raise ConfigError(f"{name}={value} must be a positive multiple of {unit_name}={unit}")
    if value > tau:
        raise ConfigError(f"{name}={value} exceeds the task length tau={tau}")


def _regret(E, theta, explore_actions, greedy, n_greedy):
    best = optimal_value(E, theta)
    explore_gap = len(explore_actions) * best - float(np.sum(explore_actions @ theta))
    greedy_gap = max(best - float(greedy @ theta), 0.0)
    return max(explore_gap, 0.0) + n_greedy * greedy_gap


def explore_actions(E: Ellipsoid, tau1: int) -> np.ndarray:
    """``lambda0 e_i`` repeated ``tau1 / d`` times each, in blocks."""
    d = E.d
    return E.lambda0 * np.repeat(np.eye(d), tau1 // d, axis=0)


def meta_explore(E: Ellipsoid, theta_true, tau: int, tau1: int, stream: RewardStream) -> ExploreOutcome:
    _check_length("tau1", tau1, E.d, "d", tau)
    u = tau1 // E.d
    A = explore_actions(E, tau1)
    r = pull_many(E, theta_true, A, stream)
    # (A^T A)^{-1} A^T r with A^T A = u lambda0^2 I
    theta_hat = (A.T @ r) / (u * E.lambda0**2)
    a = greedy_action(E, theta_hat)
    if not E.contains(a):
        raise AssertionError("greedy action left the action set")
    regret = _regret(E, theta_true, A, a, tau - tau1)
    return ExploreOutcome(theta_hat, regret, tau)


def meta_exploit(E: Ellipsoid, theta_true, B_hat, tau: int, tau2: int, stream: RewardStream) -> ExploitOutcome:
    B_hat = np.asarray(B_hat, dtype=float)
    if B_hat.ndim != 2 or B_hat.shape[0] != E.d:
        raise DimensionMismatchError(f"basis of shape {B_hat.shape} in dimension d={E.d}")
    m = B_hat.shape[1]
    _check_length("tau2", tau2, m, "m", tau)
    u = tau2 // m
    A = E.lambda0 * np.repeat(B_hat.T, u, axis=0)
    r = pull_many(E, theta_true, A, stream)
    # (sum B^T A A^T B)^{-1} = (m / (tau2 lambda0^2)) I
    w_hat = (m / (tau2 * E.lambda0**2)) * (B_hat.T @ (A.T @ r))
    theta_hat = B_hat @ w_hat
    a = greedy_action(E, theta_hat)
    if not E.contains(a):
        raise AssertionError("greedy action left the action set")
    regret = _regret(E, theta_true, A, a, tau - tau2)
    return ExploitOutcome(w_hat, theta_hat, regret, tau)
