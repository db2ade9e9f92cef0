"""Experiment orchestration: configs, runners, CSV rows and plots."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .experiments import (
    RunResult,
    run_choquet,
    run_coarea,
    run_cube_scaling,
    run_experiment,
    run_exponent_sweep,
    run_yomdin_fit,
)
from .main import main
from .plots import emit_plot
from .records import HEADER, ExperimentRecord, read_csv, verify_predictions, write_csv

__all__ = [
    "HEADER",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentRecord",
    "RunResult",
    "emit_plot",
    "load_config",
    "main",
    "parse_config",
    "read_csv",
    "run_choquet",
    "run_coarea",
    "run_cube_scaling",
    "run_experiment",
    "run_exponent_sweep",
    "run_yomdin_fit",
    "verify_predictions",
    "write_csv",
]
