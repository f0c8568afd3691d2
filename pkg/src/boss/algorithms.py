"""Sequential multi-task learners: BOSS, its doubling-trick variant and the baselines.

Every ``run_*`` function plays a whole :class:`TaskSchedule` and returns a
:class:`RunResult`.  A run's randomness comes from ``seed`` alone: stream 0
drives the learner's own coin flips (expert draws, exploration flags,
cold-start bases) and stream 1 drives reward noise.  Two learners given the
same seed therefore see identical noise whenever they play identical
actions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .base_policies import meta_exploit, meta_explore
from .environment import Ellipsoid, RewardStream, TaskSchedule, spawn_rng, triangular_indices
from .errors import ConfigError, DimensionMismatchError
from .subspace_geom import principal_angle_dist, random_basis
from .subspace_select import PAPER_ETA, CostParams, ExpertState, ewa_update, expert_losses, sample_expert

ALGORITHM_IDS = ("boss", "boss_no_oracle", "boss_doubling", "pege", "pege_oracle", "seqrepl")
TUNABLE = ("p", "tau1", "tau2", "alpha", "eta")


@dataclass(frozen=True)
class BossParams:
    p: float
    tau1: int
    tau2: int
    alpha: float
    epsilon: float
    delta: float
    c2: float = 1.0
    eta: float = PAPER_ETA
    overrides: dict = field(default_factory=dict)

    def validate(self, tau: int, d: int, m: int) -> None:
        problems = []
        if not 0 < self.p <= 1:
            problems.append(f"p={self.p} not in (0, 1]")
        if self.tau1 < d or self.tau1 % d or self.tau1 > tau:
            problems.append(f"tau1={self.tau1} must be a multiple of d={d} in [d, tau={tau}]")
        if self.tau2 < m or self.tau2 % m or self.tau2 > tau:
            problems.append(f"tau2={self.tau2} must be a multiple of m={m} in [m, tau={tau}]")
        if not self.alpha > 0:
            problems.append(f"alpha={self.alpha} must be positive")
        if not self.eta > 0:
            problems.append(f"eta={self.eta} must be positive")
        if problems:
            raise ConfigError("; ".join(problems))

    def cost_params(self, tau: int, m: int) -> CostParams:
        return CostParams.from_lengths(tau, self.tau2, m, self.alpha, self.p)


def theorem1_params(N: int, tau: int, d: int, m: int, c2: float = 1.0, **overrides) -> BossParams:
    """Closed-form hyperparameters of the BOSS regret guarantee.

    ``p = min((2 m sqrt(tau) / N)^(2/3), 1)``,
    ``tau1 = d * floor(min(d sqrt(tau / p), tau) / d)``,
    ``tau2 = m * floor(sqrt(tau))``, ``delta = 1 / N^2`` and
    ``alpha = epsilon = c2 * d * sqrt(ln(d / delta) / tau1)``.

    Any of ``p, tau1, tau2, alpha, eta`` may be pinned through ``overrides``;
    quantities derived from a pinned value are recomputed from it.
    """
    unknown = set(overrides) - set(TUNABLE)
    if unknown:
        raise ConfigError(f"unknown parameter override(s): {sorted(unknown)}")
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if min(N, tau, d, m) < 1:
        raise ConfigError("N, tau, d and m must all be positive")
    if m >= d:
        raise ConfigError(f"need m < d, got m={m}, d={d}")
    if tau < d:
        raise ConfigError(f"need tau >= d so that tau1 can be a multiple of d (tau={tau}, d={d})")
    p = overrides.get("p", min((2 * m * math.sqrt(tau) / N) ** (2 / 3), 1.0))
    tau1 = overrides.get("tau1", d * int(min(d * math.sqrt(tau / p), tau) // d))
    tau2 = overrides.get("tau2", min(m * math.isqrt(tau), m * (tau // m)))
    delta = 1.0 / N**2
    alpha = overrides.get("alpha", c2 * d * math.sqrt(math.log(d / delta) / tau1))
    eta = overrides.get("eta", PAPER_ETA)
    return BossParams(float(p), int(tau1), int(tau2), float(alpha), float(alpha), delta, c2, float(eta),
                      dict(overrides))


@dataclass(frozen=True)
class TaskTrace:
    task_index: int  # 1-based
    policy: str  # "explore" or "exploit"
    Z: int
    expert_index: int  # -1 when no expert was drawn
    theta_hat: np.ndarray
    per_task_regret: float
    subspace_error: float
    theta_error: float


@dataclass
class RunResult:
    algorithm: str
    traces: list
    seed: int
    config_digest: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def per_task_regret(self) -> np.ndarray:
        return np.array([t.per_task_regret for t in self.traces])

    @property
    def cumulative_regret(self) -> np.ndarray:
        return np.cumsum(self.per_task_regret)

    @property
    def subspace_error(self) -> np.ndarray:
        return np.array([t.subspace_error for t in self.traces])

    @property
    def theta_error(self) -> np.ndarray:
        return np.array([t.theta_error for t in self.traces])

    @property
    def Z(self) -> np.ndarray:
        return np.array([t.Z for t in self.traces])

    @property
    def final_regret(self) -> float:
        return float(self.per_task_regret.sum())


def _check_problem(schedule: TaskSchedule, E: Ellipsoid, tau: int):
    if schedule.d != E.d:
        raise DimensionMismatchError(f"schedule has d={schedule.d} but the action set has d={E.d}")
    if tau < 1:
        raise ConfigError(f"tau must be positive, got {tau}")


def _streams(seed, noise_std):
    return spawn_rng(seed, 0), RewardStream(noise_std, spawn_rng(seed, 1))


def _trace(n, policy, Z, idx, outcome, theta, subspace_error):
    return TaskTrace(n, policy, int(Z), idx, outcome.theta_hat, outcome.pseudo_regret, subspace_error,
                     float(np.linalg.norm(outcome.theta_hat - theta)))


def _boss_tasks(schedule, E, tau, params, state, tasks, learner, noise, traces, oracle_index, oracle_w):
    """Play ``tasks`` (1-based indices) with fixed hyperparameters; returns the final expert state."""
    m = state.experts.shape[2]
    costs = params.cost_params(tau, m)
    for n in tasks:
        theta = schedule.thetas[n - 1]
        if oracle_index is not None:
            oracle_w.append(float(state.weights[oracle_index]))
        idx, B_hat = sample_expert(state, learner)
        Z = int(learner.random() < params.p)
        err = principal_angle_dist(B_hat, schedule.true_bases[n - 1])
        if Z:
            out = meta_explore(E, theta, tau, params.tau1, noise)
            state = ewa_update(state, expert_losses(state.experts, out.theta_hat, 1, costs))
            traces.append(_trace(n, "explore", 1, idx, out, theta, err))
        else:
            out = meta_exploit(E, theta, B_hat, tau, params.tau2, noise)
            traces.append(_trace(n, "exploit", 0, idx, out, theta, err))
    return state


def _check_experts(experts, schedule):
    experts = np.asarray(experts, dtype=float)
    if experts.ndim != 3 or len(experts) == 0:
        raise ConfigError("expert set must be a nonempty (K, d, m) stack")
    if experts.shape[1:] != (schedule.d, schedule.m):
        raise DimensionMismatchError(f"experts of shape {experts.shape[1:]} vs schedule d={schedule.d}, m={schedule.m}")
    return experts


def run_boss(schedule: TaskSchedule, E: Ellipsoid, tau: int, params: BossParams, experts, seed: int,
             noise_std: float = 1.0, oracle_index: int | None = None, algorithm: str = "boss") -> RunResult:
    """Bandit online subspace selection over the whole schedule."""
    _check_problem(schedule, E, tau)
    experts = _check_experts(experts, schedule)
    params.validate(tau, schedule.d, schedule.m)
    params.cost_params(tau, schedule.m)
    learner, noise = _streams(seed, noise_std)
    state = ExpertState.uniform(experts, params.eta)
    traces, oracle_w = [], []
    state = _boss_tasks(schedule, E, tau, params, state, range(1, schedule.N + 1), learner, noise, traces,
                        oracle_index, oracle_w)
    diag = {"params": params, "final_weights": state.weights}
    if oracle_index is not None:
        diag["oracle_weight"] = np.array(oracle_w)
    return RunResult(algorithm, traces, seed, diagnostics=diag)


def doubling_phases(N: int) -> list[range]:
    """Phase ``i`` covers tasks ``2^i .. 2^(i+1) - 1`` (1-based), truncated at ``N``."""
    phases, start = [], 1
    while start <= N:
        phases.append(range(start, min(2 * start - 1, N) + 1))
        start *= 2
    return phases


def run_boss_doubling(schedule: TaskSchedule, E: Ellipsoid, tau: int, base_params: BossParams, experts,
                      seed: int, noise_std: float = 1.0, oracle_index: int | None = None) -> RunResult:
    """BOSS without knowledge of N: phase ``i`` is planned as if there were ``2^i`` tasks.

    Exploration rate, ``tau1``, ``alpha`` and ``delta`` are recomputed per phase
    from ``base_params.c2`` and its overrides; the expert weights carry over.
    """
    _check_problem(schedule, E, tau)
    experts = _check_experts(experts, schedule)
    d, m = schedule.d, schedule.m
    learner, noise = _streams(seed, noise_std)
    state = ExpertState.uniform(experts, base_params.eta)
    traces, oracle_w, phase_params = [], [], []
    for i, tasks in enumerate(doubling_phases(schedule.N)):
        params = theorem1_params(2**i, tau, d, m, base_params.c2, **base_params.overrides)
        params.validate(tau, d, m)
        phase_params.append(params)
        state = _boss_tasks(schedule, E, tau, params, state, tasks, learner, noise, traces, oracle_index, oracle_w)
    diag = {"phase_params": phase_params, "final_weights": state.weights}
    if oracle_index is not None:
        diag["oracle_weight"] = np.array(oracle_w)
    return RunResult("boss_doubling", traces, seed, diagnostics=diag)


def run_pege_independent(schedule: TaskSchedule, E: Ellipsoid, tau: int, tau1: int, seed: int,
                         noise_std: float = 1.0) -> RunResult:
    """PEGE on every task separately; no subspace estimate, so the error is reported as sqrt(m)."""
    _check_problem(schedule, E, tau)
    _, noise = _streams(seed, noise_std)
    trivial = math.sqrt(schedule.m)
    traces = []
    for n in range(1, schedule.N + 1):
        theta = schedule.thetas[n - 1]
        out = meta_explore(E, theta, tau, tau1, noise)
        traces.append(_trace(n, "explore", 1, -1, out, theta, trivial))
    return RunResult("pege", traces, seed)


def run_pege_oracle(schedule: TaskSchedule, E: Ellipsoid, tau: int, tau2: int, seed: int,
                    noise_std: float = 1.0) -> RunResult:
    """Subspace-restricted PEGE with the true hidden basis on every task."""
    _check_problem(schedule, E, tau)
    _, noise = _streams(seed, noise_std)
    B = schedule.hidden_basis
    traces = []
    for n in range(1, schedule.N + 1):
        theta = schedule.thetas[n - 1]
        out = meta_exploit(E, theta, B, tau, tau2, noise)
        err = principal_angle_dist(B, schedule.true_bases[n - 1])
        traces.append(_trace(n, "exploit", 0, -1, out, theta, err))
    return RunResult("pege_oracle", traces, seed)


def run_seqrepl(schedule: TaskSchedule, E: Ellipsoid, tau: int, tau1: int, tau2: int, seed: int,
                noise_std: float = 1.0) -> RunResult:
    """Explore at tasks i(i+1)/2, otherwise exploit the top-m left singular space of past estimates."""
    _check_problem(schedule, E, tau)
    learner, noise = _streams(seed, noise_std)
    d, m = schedule.d, schedule.m
    explore_at = set(triangular_indices(schedule.N))
    B_hat = random_basis(d, m, learner)
    estimates = []
    traces = []
    for n in range(1, schedule.N + 1):
        theta = schedule.thetas[n - 1]
        err = principal_angle_dist(B_hat, schedule.true_bases[n - 1])
        if n in explore_at:
            out = meta_explore(E, theta, tau, tau1, noise)
            traces.append(_trace(n, "explore", 1, -1, out, theta, err))
            estimates.append(out.theta_hat)
            U = np.linalg.svd(np.column_stack(estimates), full_matrices=True)[0]
            B_hat = U[:, :m]
        else:
            out = meta_exploit(E, theta, B_hat, tau, tau2, noise)
            traces.append(_trace(n, "exploit", 0, -1, out, theta, err))
    return RunResult("seqrepl", traces, seed)
