"""Experiment configuration, execution, persistence and the command line."""
from .config import ConfigValidationError, ExperimentConfig, load_config, parse_config
from .runner import mean_std, run_experiment, sweep
from .selftest import selftest

__all__ = ["ConfigValidationError", "ExperimentConfig", "load_config", "parse_config", "mean_std",
           "run_experiment", "sweep", "selftest"]
