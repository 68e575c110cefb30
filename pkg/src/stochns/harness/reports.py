"""Aggregation of per-sample records into CSV tables and JSON summaries.

CSV values are written with ``repr`` so that parsing them back recovers the
floats bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from ..analysis import (
    CSV_COLUMNS,
    MIN_SAMPLES,
    ConvergenceRow,
    ConvergenceTable,
    localization_diagnostics,
    log_rate_exponents,
    summarize_exp_moment,
    summarize_moments,
    summarize_pressure,
)
from .config import ExperimentConfig

__all__ = [
    "convergence_table",
    "write_csv",
    "read_csv",
    "summary",
    "moments_report",
    "expmoment_report",
    "localization_report",
    "pressure_report",
    "rates_report",
    "write_json",
]


def _ok(records: dict) -> list:
    return [records[i] for i in sorted(records) if records[i].get("status") == "ok"]


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if len(x) == 0:
        return math.nan, math.nan
    if len(x) < 2:
        return float(x[0]), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def convergence_table(cfg: ExperimentConfig, records: dict) -> ConvergenceTable:
    """One row per ladder level; empty when no sample finished."""
    ok = _ok(records)
    table = ConvergenceTable()
    if not ok:
        return table
    T = float(cfg["T"])
    for li, (N, res) in enumerate(cfg.levels):
        maxes = [r["levels"][li]["max_l2_err"] for r in ok]
        grads = [r["levels"][li]["grad_sum_err"] for r in ok]
        k = T / N
        h = cfg.mesh_width(res)
        m1, s1 = _mean_se(maxes)
        m2, s2 = _mean_se(grads)
        table.add(ConvergenceRow(li, N, k, h, k + h * h, m1, s1, m2, s2, len(ok)))
    return table


def write_csv(table: ConvergenceTable, path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for row in table.rows:
                w.writerow([repr(v) for v in row.as_tuple()])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_csv(path) -> list[dict]:
    """Rows with ints and floats restored exactly."""
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if tuple(rd.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {rd.fieldnames}")
        out = []
        for row in rd:
            out.append({c: (int(v) if c in ("level_index", "N", "samples") else float(v)) for c, v in row.items()})
        return out


def _clean(obj):
    """JSON-safe copy: tuples to lists, numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def rates_report(cfg: ExperimentConfig, M: float | None = None) -> dict:
    q0 = int(cfg.analysis["q0"])
    diff = cfg.diffusion()
    try:
        rates = cfg.rates(M).to_dict()
    except ValueError as exc:  # e.g. zero noise: the constants are undefined
        rates = None
        reason = str(exc)
    out = {
        "rates": rates,
        "log_rate_exponents": log_rate_exponents(q0),
        "diffusion": {"kind": diff.kind, "condition": diff.condition, "K0": diff.K0, "K1": diff.K1,
                      "L1": diff.L1, "trQ": diff.cov.trace},
        "ctilde": cfg.ctilde_report(),
    }
    if rates is None:
        out["rates_unavailable"] = reason
    return out


def summary(cfg: ExperimentConfig, records: dict, table: ConvergenceTable, manifest: dict | None = None) -> dict:
    ok = _ok(records)
    out = {
        "schema_version": 1,
        "scheme": cfg["scheme"],
        "samples_ok": len(ok),
        "samples_failed": sum(1 for r in records.values() if r.get("status") == "failed"),
        "levels": [dict(zip(CSV_COLUMNS, row.as_tuple())) for row in table.rows],
    }
    out.update(rates_report(cfg))
    slopes = table.slopes()
    if slopes is not None:
        out["slopes"] = slopes
        mx = table.column("max_l2_err_mean")
        out["monotone_max_l2"] = bool(np.all(np.diff(mx) > 0))  # rows sorted by increasing eta
    if manifest is not None:
        out["config_sha256"] = manifest["config_sha256"]
    return out


def _by_level_N(cfg, ok, get) -> dict:
    groups: dict = {}
    for li, (N, _) in enumerate(cfg.levels):
        groups.setdefault(N, [])
        groups[N].extend(get(r["levels"][li]) for r in ok)
    return groups


def moments_report(cfg: ExperimentConfig, records: dict, *, min_samples: int = MIN_SAMPLES) -> dict:
    """Moment-bound estimates for the ladder scheme and (if run) the time scheme at each N."""
    ok = _ok(records)
    out = {"scheme": cfg["scheme"], "samples_ok": len(ok), "by_q": {}}
    for q in cfg.analysis["moments_q"]:
        key = str(int(q))
        entry = {"scheme": summarize_moments(_by_level_N(cfg, ok, lambda lv: lv["scheme_moments"][key]),
                                             int(q), min_samples=min_samples).to_dict()}
        if cfg.analysis["time_at_levels"]:
            entry["time"] = summarize_moments(_by_level_N(cfg, ok, lambda lv: lv["time_moments"][key]),
                                              int(q), min_samples=min_samples).to_dict()
        out["by_q"][key] = entry
    return out


def expmoment_report(cfg: ExperimentConfig, records: dict, alpha: float | None = None) -> dict:
    """E exp(alpha max_l ||u^l||_V^2) of the time scheme at every ladder N."""
    diff = cfg.diffusion()
    if not diff.additive:
        raise ValueError("exponential moments are only estimated for additive noise")
    if not cfg.analysis["time_at_levels"]:
        raise ValueError("set analysis.time_at_levels to run the time scheme at every N")
    rp = cfg.rates()
    bound = rp.beta_tilde0 if rp.beta_tilde0 is not None else rp.alpha0
    if alpha is None:
        alpha = cfg.analysis["alpha"] if cfg.analysis["alpha"] is not None else 0.5 * bound
    ok = _ok(records)
    maxima = {}
    for li, (N, _) in enumerate(cfg.levels):
        maxima[N] = [r["levels"][li]["time_max_v_norm_sq"] for r in ok]
    rep = summarize_exp_moment(maxima, float(alpha), alpha0=bound)
    return {"report": rep.to_dict(), "alpha0": rp.alpha0, "beta_tilde0": rp.beta_tilde0,
            "threshold": bound, "samples_ok": len(ok)}


def _auto_thresholds(ok, variant) -> list[float]:
    power = 2 if variant == "quartic" else 1
    y = np.array([r["ref_max_v_norm_sq"] ** power for r in ok])
    return [float(np.quantile(y, p)) for p in (0.25, 0.5, 0.75)] + [math.inf]


def localization_report(cfg: ExperimentConfig, records: dict, thresholds=None, *,
                        safety: float = 2.0) -> dict:
    """Localization probabilities and localized errors for every level and threshold M.

    The absolute prefactor of the bound is calibrated once per M at the
    coarsest level as ``safety`` times the observed localized error over
    exp(C(M) T) (k + h^2); finer levels are then checked against the bound.
    """
    ok = _ok(records)
    if not ok:
        raise ValueError("no completed samples")
    variant = cfg.analysis["localization_variant"]
    Ms = list(thresholds if thresholds is not None else (cfg.analysis["M"] or _auto_thresholds(ok, variant)))
    T = float(cfg["T"])
    rates = cfg.rates()
    out = {"variant": variant, "C0": rates.C0, "samples_ok": len(ok), "by_M": []}
    order = sorted(range(len(cfg.levels)), key=lambda li: cfg.levels[li][0])  # coarsest first
    for M in Ms:
        rM = cfg.rates(M) if math.isfinite(M) else None
        prefactor = None
        levels = []
        for li in order:
            N, res = cfg.levels[li]
            V = np.array([r["levels"][li]["ref_v_norm_sq"] for r in ok])
            E = np.array([r["levels"][li]["err_l2_sq"] for r in ok])
            h = cfg.mesh_width(res)
            rep = localization_diagnostics(V, E, M, variant, T=T, C0=rates.C0)
            bound = None
            if rM is not None:
                C = rM.C1_tilde if variant == "quartic" else rM.C3_tilde
                shape = math.exp(min(C * T, 700.0)) * (T / N + h * h)
                if prefactor is None:
                    prefactor = safety * rep.localized_error / shape if shape > 0 else 0.0
                bound = prefactor * shape
            d = rep.to_dict()
            d.update(level_index=li, N=N, h=h, bound=bound,
                     within_bound=None if bound is None else rep.localized_error <= bound)
            levels.append(d)
        out["by_M"].append({"M": M, "prefactor": prefactor, "levels": sorted(levels, key=lambda x: x["level_index"])})
    return out


def pressure_report(cfg: ExperimentConfig, records: dict) -> dict:
    if cfg["scheme"] != "alg1":
        raise ValueError("pressure sums need the finite-element scheme (scheme = 'alg1')")
    ok = _ok(records)
    sums = _by_level_N(cfg, ok, lambda lv: lv["pressure_sum"])
    rep = summarize_pressure(sums)
    diff = cfg.diffusion()
    return {"report": rep.to_dict(), "condition": diff.condition, "diffusion": diff.kind,
            "samples_ok": len(ok)}
