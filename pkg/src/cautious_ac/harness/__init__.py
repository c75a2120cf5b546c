"""Configuration, orchestration, metrics and CLI for tabular experiments."""

from .config import ConfigError, RunConfig, load_config, parse_config
from .experiment import (
    BoundViolation,
    ExperimentResult,
    RunFailure,
    check_bounds,
    read_records,
    render,
    run_compare,
    run_experiment,
    run_sweep,
)
from .metrics import OscillationReport, oscillation_metrics

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "parse_config",
    "BoundViolation",
    "ExperimentResult",
    "RunFailure",
    "check_bounds",
    "read_records",
    "render",
    "run_compare",
    "run_experiment",
    "run_sweep",
    "OscillationReport",
    "oscillation_metrics",
]
