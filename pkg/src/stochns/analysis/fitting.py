"""Least-squares rate fits on convergence tables."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = ["FitResult", "fit_rate", "fit_log_rate", "ConvergenceRow", "ConvergenceTable", "CSV_COLUMNS"]

CSV_COLUMNS = ("level_index", "N", "k", "h", "eta", "max_l2_err_mean", "max_l2_err_se",
               "grad_sum_err_mean", "grad_sum_err_se", "samples")


@dataclass(frozen=True)
class FitResult:
    """log y = intercept + slope * log x, with the standard error of the slope."""

    slope: float
    intercept: float
    stderr: float
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def _ols(x: np.ndarray, y: np.ndarray) -> FitResult:
    n = len(x)
    X = np.stack([np.ones(n), x], axis=1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = n - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    sxx = float(np.sum((x - x.mean()) ** 2))
    se = math.sqrt(s2 / sxx) if sxx > 0 else math.inf
    return FitResult(float(coef[1]), float(coef[0]), se, n)


def _check(eta, err):
    eta = np.asarray(eta, dtype=float)
    err = np.asarray(err, dtype=float)
    if eta.shape != err.shape or eta.ndim != 1:
        raise ValueError("eta and errors must be 1-D arrays of equal length")
    if len(eta) < 3:
        raise ValueError("a rate fit needs at least 3 rows")
    if np.any(err <= 0) or np.any(eta <= 0) or not np.all(np.isfinite(err)):
        raise ValueError("errors and eta must be positive and finite")
    return eta, err


def fit_rate(eta, err) -> FitResult:
    """Slope of log(err) against log(eta)."""
    eta, err = _check(eta, err)
    return _ols(np.log(eta), np.log(err))


def fit_log_rate(eta, err) -> FitResult:
    """Exponent r of err ~ C |ln eta|^{-r}; returned as ``slope`` = r."""
    eta, err = _check(eta, err)
    if np.any(eta >= 1):
        raise ValueError("the logarithmic form needs eta < 1")
    res = _ols(np.log(np.abs(np.log(eta))), np.log(err))
    return FitResult(-res.slope, res.intercept, res.stderr, res.n)


@dataclass(frozen=True)
class ConvergenceRow:
    level_index: int
    N: int
    k: float
    h: float
    eta: float
    max_l2_err_mean: float
    max_l2_err_se: float
    grad_sum_err_mean: float
    grad_sum_err_se: float
    samples: int

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, c) for c in CSV_COLUMNS)


@dataclass
class ConvergenceTable:
    """Rows sorted by eta = k + h^2, with slopes once there are at least 3 rows."""

    rows: list = field(default_factory=list)

    def __post_init__(self):
        for r in self.rows:
            if r.samples <= 0:
                raise ValueError("every row needs a positive sample count")
        self.rows = sorted(self.rows, key=lambda r: r.eta)

    def add(self, row: ConvergenceRow) -> None:
        if row.samples <= 0:
            raise ValueError("every row needs a positive sample count")
        self.rows.append(row)
        self.rows.sort(key=lambda r: r.eta)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def slopes(self) -> dict | None:
        """Fitted slopes in eta, or None with fewer than 3 rows or nonpositive errors."""
        if len(self.rows) < 3:
            return None
        out = {}
        eta = self.column("eta")
        for name in ("max_l2_err_mean", "grad_sum_err_mean"):
            y = self.column(name)
            if np.all(y > 0):
                out[name] = fit_rate(eta, y).to_dict()
                if np.all(eta < 1):
                    out[name + "_log"] = fit_log_rate(eta, y).to_dict()
        return out or None
