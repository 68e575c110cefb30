"""Rate calculators, Monte Carlo estimators and convergence fits."""

from .fitting import CSV_COLUMNS, ConvergenceRow, ConvergenceTable, FitResult, fit_log_rate, fit_rate
from .moments import (
    MIN_SAMPLES,
    ExpMomentReport,
    LocalizationReport,
    MomentReport,
    PressureReport,
    TooFewSamplesError,
    estimate_exp_moment,
    estimate_moments,
    exp_moment,
    localization_diagnostics,
    moment_quantities,
    pressure_sum,
    summarize_exp_moment,
    summarize_moments,
    summarize_pressure,
)
from .rates import RateForm, RatePrediction, log_rate_exponents, predicted_rates, rate_from_localization

__all__ = [
    "CSV_COLUMNS", "ConvergenceRow", "ConvergenceTable", "FitResult", "fit_log_rate", "fit_rate",
    "MIN_SAMPLES", "ExpMomentReport", "LocalizationReport", "MomentReport", "PressureReport",
    "TooFewSamplesError", "estimate_exp_moment", "estimate_moments", "exp_moment",
    "localization_diagnostics", "moment_quantities", "pressure_sum",
    "summarize_exp_moment", "summarize_moments", "summarize_pressure",
    "RateForm", "RatePrediction", "log_rate_exponents", "predicted_rates", "rate_from_localization",
]
