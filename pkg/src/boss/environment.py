"""Linear-bandit tasks over an ellipsoidal action set and task-sequence generators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, InfeasibleActionError, UndefinedMaximizerError
from .subspace_geom import random_basis

FEAS_TOL = 1e-9
ZERO_TOL = 1e-12


@dataclass(frozen=True)
class Ellipsoid:
    """Action set ``{x : x^T M^{-1} x <= 1}``."""

    M: np.ndarray
    M_inv: np.ndarray = field(init=False, repr=False)
    lambda0: float = field(init=False)
    J: float = field(init=False)

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ConfigError(f"M must be square, got shape {M.shape}")
        if not np.allclose(M, M.T, rtol=0.0, atol=1e-10):
            raise ConfigError("M must be symmetric")
        eig = np.linalg.eigvalsh(M)
        if eig[0] <= 0:
            raise ConfigError(f"M must be positive definite (lambda_min = {eig[0]:.3e})")
        lam0 = math.sqrt(eig[0])
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "M_inv", np.linalg.inv(M))
        object.__setattr__(self, "lambda0", lam0)
        object.__setattr__(self, "J", float(eig[-1]) / lam0)

    @classmethod
    def sphere(cls, d: int) -> "Ellipsoid":
        return cls(np.eye(d))

    @classmethod
    def diagonal(cls, diag: Sequence[float]) -> "Ellipsoid":
        return cls(np.diag(np.asarray(diag, dtype=float)))

    @property
    def d(self) -> int:
        return self.M.shape[0]

    def gauge(self, a) -> np.ndarray:
        """``a^T M^{-1} a`` for one action or a stack of actions (rows)."""
        a = np.asarray(a, dtype=float)
        return np.einsum("...i,ij,...j->...", a, self.M_inv, a)

    def contains(self, a, tol: float = FEAS_TOL) -> bool:
        return bool(np.all(self.gauge(a) <= 1.0 + tol))


def best_action(E: Ellipsoid, theta) -> np.ndarray:
    """Maximiser of ``<a, theta>`` over the ellipsoid: ``M theta / sqrt(theta^T M theta)``."""
    theta = np.asarray(theta, dtype=float)
    Mt = E.M @ theta
    q = float(theta @ Mt)
    if not q > 0.0:
        raise UndefinedMaximizerError("maximiser is undefined for theta = 0")
    return Mt / math.sqrt(q)


def optimal_value(E: Ellipsoid, theta) -> float:
    theta = np.asarray(theta, dtype=float)
    return math.sqrt(max(float(theta @ E.M @ theta), 0.0))


def greedy_action(E: Ellipsoid, theta_hat) -> np.ndarray:
    """:func:`best_action`, falling back to ``lambda0 * e_1`` when ``theta_hat`` is zero.

    Estimates below ``ZERO_TOL`` in norm count as zero: their direction is
    round-off, not information.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    if np.linalg.norm(theta_hat) > ZERO_TOL:
        try:
            return best_action(E, theta_hat)
        except UndefinedMaximizerError:
            pass
    a = np.zeros(E.d)
    a[0] = E.lambda0
    return a


@dataclass
class RewardStream:
    """Gaussian reward noise with its own generator; single owner."""

    noise_std: float
    rng: np.random.Generator

    def __post_init__(self):
        if not 0.0 <= self.noise_std <= 1.0:
            raise ConfigError(f"noise_std must lie in [0, 1], got {self.noise_std}")

    def draw(self, size=None):
        # always consume the generator so sigma = 0 and sigma > 0 stay in lockstep
        z = self.rng.standard_normal(size)
        return self.noise_std * z


def pull(E: Ellipsoid, theta, a, stream: RewardStream) -> float:
    """Play one action and observe ``<a, theta> + noise``."""
    a = np.asarray(a, dtype=float)
    if not E.contains(a):
        raise InfeasibleActionError(f"action outside the set (a^T M^-1 a = {E.gauge(a):.6f})")
    return float(a @ theta + stream.draw())


def pull_many(E: Ellipsoid, theta, actions, stream: RewardStream) -> np.ndarray:
    """Play the rows of ``actions`` in order; equivalent to repeated :func:`pull`."""
    actions = np.asarray(actions, dtype=float)
    g = E.gauge(actions)
    if np.any(g > 1.0 + FEAS_TOL):
        raise InfeasibleActionError(f"action outside the set (max a^T M^-1 a = {g.max():.6f})")
    return actions @ theta + stream.draw(actions.shape[0])


# --------------------------------------------------------------------------
# task sequences


GENERATOR_IDS = ("adversarial_reveal", "seqrepl_adversarial", "diverse")


@dataclass(frozen=True)
class TaskSchedule:
    thetas: np.ndarray  # (N, d)
    true_bases: list  # Bn per task, shape (d, m_n)
    generator_id: str
    theta_min: float
    theta_max: float
    hidden_basis: np.ndarray  # full (d, m) basis B

    @property
    def N(self) -> int:
        return self.thetas.shape[0]

    @property
    def d(self) -> int:
        return self.thetas.shape[1]

    @property
    def m(self) -> int:
        return self.hidden_basis.shape[1]


def triangular_indices(N: int) -> list[int]:
    """1-based task indices of the form i(i+1)/2 that are at most ``N``."""
    out, i = [], 1
    while i * (i + 1) // 2 <= N:
        out.append(i * (i + 1) // 2)
        i += 1
    return out


def _check_common(d, m, N, theta_min, theta_max):
    if not 1 <= m < d:
        raise ConfigError(f"need 1 <= m < d, got d={d}, m={m}")
    if N < 1:
        raise ConfigError(f"N must be positive, got {N}")
    if not 0 < theta_min <= theta_max <= 1:
        raise ConfigError(f"need 0 < theta_min <= theta_max <= 1, got [{theta_min}, {theta_max}]")


def _check_reveals(reveal_tasks, m, N):
    reveal_tasks = [int(r) for r in reveal_tasks]
    if len(reveal_tasks) != m:
        raise ConfigError(f"need exactly m={m} reveal tasks, got {len(reveal_tasks)}")
    if reveal_tasks[0] != 1 or any(b <= a for a, b in zip(reveal_tasks, reveal_tasks[1:])):
        raise ConfigError(f"reveal tasks must be strictly increasing and start at 1: {reveal_tasks}")
    if reveal_tasks[-1] > N:
        raise ConfigError(f"reveal task {reveal_tasks[-1]} is beyond N={N}")
    return reveal_tasks


def _unit_sphere(k: int, rng: np.random.Generator) -> np.ndarray:
    w = rng.standard_normal(k)
    return w / np.linalg.norm(w)


def _draw_theta(Bn, theta_min, theta_max, rng):
    w = _unit_sphere(Bn.shape[1], rng)
    scale = rng.uniform(theta_min, theta_max)
    return scale * (Bn @ w)


def _hidden(d, m, rng, basis):
    if basis is None:
        return random_basis(d, m, rng)
    basis = np.asarray(basis, dtype=float)
    if basis.shape != (d, m):
        raise ConfigError(f"fixed basis has shape {basis.shape}, expected {(d, m)}")
    return basis


def gen_adversarial_reveal(d, m, N, reveal_tasks, theta_min=0.8, theta_max=1.0, rng=None, basis=None):
    """Reveal one new hidden direction at each index in ``reveal_tasks`` (1-based)."""
    _check_common(d, m, N, theta_min, theta_max)
    reveal_tasks = _check_reveals(reveal_tasks, m, N)
    rng = np.random.default_rng() if rng is None else rng
    B = _hidden(d, m, rng, basis)
    thetas = np.empty((N, d))
    bases = []
    for n in range(1, N + 1):
        m_n = sum(r <= n for r in reveal_tasks)
        Bn = B[:, :m_n]
        thetas[n - 1] = _draw_theta(Bn, theta_min, theta_max, rng)
        bases.append(Bn)
    return TaskSchedule(thetas, bases, "adversarial_reveal", theta_min, theta_max, B)


def gen_seqrepl_adversarial(d, m, N, reveal_tasks, theta_min=0.8, theta_max=1.0, rng=None, basis=None):
    """Like :func:`gen_adversarial_reveal`, but tasks at i(i+1)/2 only show the first direction."""
    _check_common(d, m, N, theta_min, theta_max)
    reveal_tasks = _check_reveals(reveal_tasks, m, N)
    rng = np.random.default_rng() if rng is None else rng
    B = _hidden(d, m, rng, basis)
    pinned = set(triangular_indices(N))
    thetas = np.empty((N, d))
    bases = []
    for n in range(1, N + 1):
        m_n = 1 if n in pinned else sum(r <= n for r in reveal_tasks)
        Bn = B[:, :m_n]
        thetas[n - 1] = _draw_theta(Bn, theta_min, theta_max, rng)
        bases.append(Bn)
    return TaskSchedule(thetas, bases, "seqrepl_adversarial", theta_min, theta_max, B)


def gen_diverse(d, m, N, theta_min=0.8, theta_max=1.0, rng=None, basis=None, reveal_tasks=None):
    """Every task is a random combination of all hidden directions from task 1 on."""
    _check_common(d, m, N, theta_min, theta_max)
    rng = np.random.default_rng() if rng is None else rng
    B = _hidden(d, m, rng, basis)
    thetas = np.empty((N, d))
    for n in range(N):
        thetas[n] = _draw_theta(B, theta_min, theta_max, rng)
    return TaskSchedule(thetas, [B] * N, "diverse", theta_min, theta_max, B)


GENERATORS: dict[str, Callable[..., TaskSchedule]] = {
    "adversarial_reveal": gen_adversarial_reveal,
    "seqrepl_adversarial": gen_seqrepl_adversarial,
    "diverse": gen_diverse,
}


def make_schedule(generator_id: str, **kwargs) -> TaskSchedule:
    try:
        gen = GENERATORS[generator_id]
    except KeyError:
        raise ConfigError(f"unknown generator {generator_id!r}; choose from {GENERATOR_IDS}") from None
    return gen(**kwargs)


def default_reveal_tasks(N: int, m: int) -> list[int]:
    """Reveal schedule 1, ceil(0.625 N), ceil(0.875 N) scaled from the 4000-task setting.

    For ``m != 3`` the reveals are spread evenly over the horizon.
    """
    if m == 3:
        return [1, math.ceil(0.625 * N), math.ceil(0.875 * N)]
    return [1 + (i * N) // m for i in range(m)]


# --------------------------------------------------------------------------
# seeding


def spawn_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent PCG64 stream for ``(seed, *key)``.

    Streams come from numpy's ``SeedSequence(seed, spawn_key=key)``, so a given
    ``(seed, key)`` always maps to the same randomness and distinct keys give
    statistically independent streams.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
