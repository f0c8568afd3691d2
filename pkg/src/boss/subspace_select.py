"""Online subspace selection: expert sets, surrogate costs and exponential weights.

The expert distribution is kept as log-weights.  Exploration rounds turn the
estimate ``theta_hat`` into a 0/miss loss for every expert at once; rounds
without exploration carry zero loss and leave the distribution untouched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .subspace_geom import build_eps_cover, random_bases, residual_norm, residual_norms

PAPER_ETA = math.log(2.0)
EXPERT_MODES = ("random", "eps_cover")


@dataclass(frozen=True)
class CostParams:
    c_hit: float
    c_miss: float
    alpha: float
    p: float

    def __post_init__(self):
        if not 0 < self.c_hit <= self.c_miss:
            raise ConfigError(
                f"need 0 < c_hit <= c_miss, got c_hit={self.c_hit:.4g}, c_miss={self.c_miss:.4g}; "
                "lower alpha or move tau2 towards m*sqrt(tau)"
            )
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.p <= 1:
            raise ConfigError(f"p must lie in (0, 1], got {self.p}")

    @classmethod
    def from_lengths(cls, tau: int, tau2: int, m: int, alpha: float, p: float) -> "CostParams":
        """Hit cost ``tau2 + tau (m^2 / tau2 + alpha^2)``, miss cost ``tau``."""
        return cls(tau2 + tau * (m * m / tau2 + alpha * alpha), float(tau), alpha, p)

    @property
    def miss_loss(self) -> float:
        return (self.c_miss - self.c_hit) / self.c_miss


def surrogate_cost(B, theta_hat, params: CostParams) -> float:
    return params.c_hit if residual_norm(B, theta_hat) <= params.alpha else params.c_miss


def loss(B, theta_hat, Z: int, params: CostParams) -> float:
    """Shifted, scaled, importance-weighted cost of one expert; lies in [0, 1]."""
    if not Z:
        return 0.0
    weighted = surrogate_cost(B, theta_hat, params) * Z / params.p
    return params.p / params.c_miss * (weighted - params.c_hit * Z / params.p)


def expert_losses(experts: np.ndarray, theta_hat, Z: int, params: CostParams) -> np.ndarray:
    """:func:`loss` for every expert in a (K, d, m) stack."""
    if not Z:
        return np.zeros(len(experts))
    miss = residual_norms(experts, theta_hat) > params.alpha
    return np.where(miss, params.miss_loss, 0.0)


@dataclass(frozen=True)
class ExpertState:
    experts: np.ndarray  # (K, d, m)
    log_weights: np.ndarray  # normalised so that logsumexp == 0
    eta: float = PAPER_ETA
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.experts.ndim != 3 or len(self.experts) == 0:
            raise ConfigError(f"expert stack must be a nonempty (K, d, m) array, got {self.experts.shape}")
        if self.log_weights.shape != (len(self.experts),):
            raise ConfigError("one log-weight per expert is required")
        if not self.eta > 0:
            raise ConfigError(f"learning rate must be positive, got {self.eta}")
        object.__setattr__(self, "weights", _normalise(self.log_weights)[1])

    @classmethod
    def uniform(cls, experts, eta: float = PAPER_ETA) -> "ExpertState":
        experts = np.asarray(experts, dtype=float)
        K = len(experts)
        return cls(experts, np.full(K, -math.log(K)), eta)

    @property
    def gamma(self) -> float:
        return 1.0 - math.exp(-self.eta)

    def __len__(self):
        return len(self.experts)


def _normalise(log_w):
    shifted = log_w - log_w.max()
    w = np.exp(shifted)
    total = w.sum()
    return shifted - math.log(total), w / total


def ewa_update(state: ExpertState, losses) -> ExpertState:
    """Multiplicative-weights step ``D(B) exp(-eta * loss(B))``, renormalised."""
    losses = np.asarray(losses, dtype=float)
    if losses.shape != state.log_weights.shape:
        raise ConfigError(f"got {losses.shape[0] if losses.ndim else 0} losses for {len(state)} experts")
    if np.any(losses < 0) or np.any(losses > 1):
        raise ConfigError("losses must lie in [0, 1]")
    log_w, _ = _normalise(state.log_weights - state.eta * losses)
    return ExpertState(state.experts, log_w, state.eta)


def sample_expert(state: ExpertState, rng: np.random.Generator) -> tuple[int, np.ndarray]:
    cdf = np.cumsum(state.weights)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    idx = min(idx, len(state) - 1)
    return idx, state.experts[idx]


def build_expert_set(mode: str, d: int, m: int, rng: np.random.Generator, count: int = 100_000,
                     oracle=None, epsilon: float | None = None) -> tuple[np.ndarray, int | None]:
    """Expert stack of shape (K, d, m) and the index of the appended oracle (or None).

    ``mode="random"`` draws ``count`` Haar bases; ``mode="eps_cover"`` builds the
    exact grid cover of radius ``epsilon``.  Passing ``oracle`` appends it last.
    """
    if mode == "random":
        if count < 1:
            raise ConfigError(f"expert count must be positive, got {count}")
        experts = random_bases(count, d, m, rng)
    elif mode == "eps_cover":
        if epsilon is None:
            raise ConfigError("eps_cover mode needs epsilon")
        experts = np.stack(build_eps_cover(d, m, epsilon))
    else:
        raise ConfigError(f"unknown expert mode {mode!r}; choose from {EXPERT_MODES}")
    if oracle is None:
        return experts, None
    oracle = np.asarray(oracle, dtype=float)
    if oracle.shape != (d, m):
        raise ConfigError(f"oracle basis has shape {oracle.shape}, expected {(d, m)}")
    return np.concatenate([experts, oracle[None]]), len(experts)


def realizable_stream_loss(K: int, N: int, p: float, rng: np.random.Generator,
                           miss_loss: float = 0.8, miss_prob: float = 0.5,
                           eta: float = PAPER_ETA) -> float:
    """Cumulative expected loss of EWA on a synthetic realizable stream.

    Expert 0 never incurs loss; every other expert misses independently with
    probability ``miss_prob`` on each feedback round (``Z = 1`` with
    probability ``p``).  Returns ``sum_n <D_n, loss_n>``.
    """
    state = ExpertState.uniform(np.zeros((K, 2, 1)), eta)
    total = 0.0
    for _ in range(N):
        Z = rng.random() < p
        if not Z:
            continue
        losses = np.where(rng.random(K) < miss_prob, miss_loss, 0.0)
        losses[0] = 0.0
        total += float(state.weights @ losses)
        state = ewa_update(state, losses)
    return total
