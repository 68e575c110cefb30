"""Experiment configuration, orchestration, persistence and reports."""

from .config import SCHEMA_VERSION, ConfigError, ExperimentConfig, gaussian_gamma0, gaussian_initial, load_config
from .reports import (
    convergence_table,
    expmoment_report,
    localization_report,
    moments_report,
    pressure_report,
    rates_report,
    read_csv,
    summary,
    write_csv,
)
from .runner import RunError, load_samples, run_experiment, run_sample
from .snapshot import read_arrays, read_trajectory, write_arrays, write_trajectory

__all__ = [
    "SCHEMA_VERSION", "ConfigError", "ExperimentConfig", "gaussian_gamma0", "gaussian_initial", "load_config",
    "convergence_table", "expmoment_report", "localization_report", "moments_report", "pressure_report",
    "rates_report", "read_csv", "summary", "write_csv",
    "RunError", "load_samples", "run_experiment", "run_sample",
    "read_arrays", "read_trajectory", "write_arrays", "write_trajectory",
]
