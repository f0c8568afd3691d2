"""Sequential multi-task linear bandits with low-rank representation transfer.

Subspace geometry, ellipsoid bandit environments, per-task explore/exploit
procedures, exponential-weights subspace selection, the BOSS learner and its
baselines, plus an experiment harness.
"""
__version__ = "0.1.0"
