"""Monte Carlo estimators for moment bounds, exponential moments, localization and pressure."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..schemes import ErrorSeries, Trajectory
from .fitting import fit_rate

__all__ = [
    "TooFewSamplesError",
    "MIN_SAMPLES",
    "moment_quantities",
    "MomentReport",
    "estimate_moments",
    "ExpMomentReport",
    "estimate_exp_moment",
    "LocalizationReport",
    "localization_diagnostics",
    "PressureReport",
    "pressure_sum",
    "summarize_moments",
    "summarize_exp_moment",
    "summarize_pressure",
]

MIN_SAMPLES = 30
DYADIC_Q = (1, 2, 4)


class TooFewSamplesError(ValueError):
    pass


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return float(x.mean()), math.nan
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def _by_N(trajectories) -> dict:
    if isinstance(trajectories, dict):
        return {int(N): list(v) for N, v in sorted(trajectories.items())}
    trajs = list(trajectories)
    out: dict = {}
    for t in trajs:
        out.setdefault(t.N, []).append(t)
    return dict(sorted(out.items()))


def moment_quantities(traj: Trajectory, q: int) -> dict:
    """Per-sample left-hand sides of the moment bounds.

    Spectral time scheme:
        ``main`` = max_l ||u^l||_V^{2q} + 2 nu k sum_l ||u^l||_V^{2q-2} |A u^l|^2
        ``increments`` = sum_l ||u^l - u^{l-1}||_V^2 ||u^l||_V^2
    Space-time schemes:
        ``main`` = max_l |U^l|^{2q} + nu k sum_l |U^l|^{2q-1} |grad U^l|^2
        ``increments`` = sum_l |U^l - U^{l-1}|^2
    """
    k, nu = traj.k, traj.params.nu
    if traj.kind == "time":
        vn = traj.v_norm_sq()
        au = traj.stokes_sq()
        main = np.max(vn ** q) + 2 * nu * k * np.sum(vn[1:] ** (q - 1) * au[1:])
        inc = sum(_vdiff(a, b) * v for a, b, v in zip(traj.states[:-1], traj.states[1:], vn[1:]))
        return {"main": float(main), "increments": float(inc)}
    l2 = traj.l2_sq()
    g2 = traj.grad_sq()
    l1 = np.sqrt(np.maximum(l2, 0.0))
    main = np.max(l1 ** (2 * q)) + nu * k * np.sum(l1[1:] ** (2 * q - 1) * g2[1:])
    if traj.spectral:
        inc = sum((b - a).l2_norm() ** 2 for a, b in zip(traj.states[:-1], traj.states[1:]))
    else:
        from ..fem import assemble_operators
        Mv = assemble_operators(traj.space).Mv
        inc = sum(float((b.U - a.U) @ (Mv @ (b.U - a.U))) for a, b in zip(traj.states[:-1], traj.states[1:]))
    return {"main": float(main), "increments": float(inc)}


def _vdiff(a, b) -> float:
    from ..spectral import v_norm_sq
    return v_norm_sq(b - a)


@dataclass(frozen=True)
class MomentReport:
    q: int
    N: tuple
    mean: tuple
    stderr: tuple
    increments_mean: tuple
    samples: tuple
    ratio: float
    stable: bool

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _ratio(means) -> float:
    means = np.asarray(means, dtype=float)
    if len(means) < 2 or np.all(means == 0):
        return 1.0
    if np.any(means <= 0):
        return math.inf
    return float(means.max() / means.min())


def estimate_moments(trajectories, q: int = 1, *, min_samples: int = MIN_SAMPLES) -> MomentReport:
    """Sample means of the moment-bound left-hand sides for each N.

    ``stable`` is the verdict that the estimates for different N stay within
    a factor 2 of each other.
    """
    if q not in DYADIC_Q:
        raise ValueError(f"q must be one of {DYADIC_Q}")
    groups = _by_N(trajectories)
    values = {N: [moment_quantities(t, q) for t in trajs] for N, trajs in groups.items()}
    return summarize_moments(values, q, min_samples=min_samples)


def summarize_moments(values: dict, q: int, *, min_samples: int = MIN_SAMPLES) -> MomentReport:
    """MomentReport from per-sample ``moment_quantities`` dicts grouped by N."""
    if q not in DYADIC_Q:
        raise ValueError(f"q must be one of {DYADIC_Q}")
    Ns, means, ses, incs, counts = [], [], [], [], []
    for N, vals in sorted(values.items()):
        if len(vals) < min_samples:
            raise TooFewSamplesError(f"N={N}: {len(vals)} samples, need at least {min_samples}")
        m, s = _mean_se([v["main"] for v in vals])
        Ns.append(int(N))
        means.append(m)
        ses.append(s)
        incs.append(float(np.mean([v["increments"] for v in vals])))
        counts.append(len(vals))
    r = _ratio(means)
    return MomentReport(q, tuple(Ns), tuple(means), tuple(ses), tuple(incs), tuple(counts), r, r < 2.0)


@dataclass(frozen=True)
class ExpMomentReport:
    alpha: float
    bound: float | None
    outside_guarantee: bool
    N: tuple
    estimate: tuple
    log_estimate: tuple
    stderr: tuple
    ratio: float
    stable: bool

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def exp_moment(values, alpha: float) -> tuple[float, float, float]:
    """(mean of exp(alpha x), its log, standard error) with log-sum-exp accumulation."""
    x = np.asarray(values, dtype=float)
    n = len(x)
    if alpha == 0:
        return 1.0, 0.0, 0.0
    logm = float(logsumexp(alpha * x) - math.log(n))
    # standard error from the second moment, also in log space
    log2 = float(logsumexp(2 * alpha * x) - math.log(n))
    var = math.exp(log2) - math.exp(2 * logm) if log2 < 700 else math.inf
    se = math.sqrt(max(var, 0.0) / max(n - 1, 1))
    return (math.exp(logm) if logm < 700 else math.inf), logm, se


def estimate_exp_moment(trajectories, alpha: float, *, alpha0: float | None = None,
                        diffusion=None) -> ExpMomentReport:
    """E exp(alpha max_l ||u^l||_V^2) per N.

    ``alpha0`` is the admissibility threshold (alpha0, or beta_tilde0 for
    Gaussian initial data); alpha >= alpha0 is flagged as outside the
    guarantee.  A diffusion with state dependence is rejected.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if diffusion is not None and not diffusion.additive:
        raise ValueError("exponential moments are only estimated for additive noise")
    groups = _by_N(trajectories)
    maxima = {N: [float(np.max(t.v_norm_sq())) for t in trajs] for N, trajs in groups.items()}
    return summarize_exp_moment(maxima, alpha, alpha0=alpha0)


def summarize_exp_moment(maxima: dict, alpha: float, *, alpha0: float | None = None) -> ExpMomentReport:
    """ExpMomentReport from per-sample values of max_l ||u^l||_V^2 grouped by N."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    Ns, est, logs, ses = [], [], [], []
    for N, x in sorted(maxima.items()):
        e, le, se = exp_moment(x, alpha)
        Ns.append(int(N))
        est.append(e)
        logs.append(le)
        ses.append(se)
    r = _ratio(est)
    outside = alpha0 is not None and alpha >= alpha0
    return ExpMomentReport(alpha, alpha0, outside, tuple(Ns), tuple(est), tuple(logs), tuple(ses), r, r < 2.0)


@dataclass(frozen=True)
class LocalizationReport:
    """Empirical localization probabilities and localized errors.

    probabilities[l] = P(Omega_l(M)); localized[m-1] = E(1_{Omega_{m-1}} max_{1<=n<=m} |E^n|^2).
    """

    M: float
    variant: str
    probabilities: np.ndarray
    localized: np.ndarray
    unlocalized: np.ndarray
    localized_error: float
    unlocalized_error: float
    bound: float | None
    admissible: bool | None

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        for key in ("probabilities", "localized", "unlocalized"):
            d[key] = d[key].tolist()
        return d


def localization_diagnostics(time_trajs, error_series, M: float, variant: str = "quartic", *,
                             rates=None, prefactor: float | None = None, h: float | None = None,
                             pressure_term: float = 0.0, C0: float | None = None,
                             T: float | None = None) -> LocalizationReport:
    """Indicator probabilities of Omega_l(M) and the localized error means.

    ``variant`` "quartic" uses max_j ||u^j||_V^4 <= M, "quadratic" uses the
    squared norm.  With ``rates`` (a RatePrediction evaluated at this M),
    ``prefactor`` and ``h``, the right-hand bound
    prefactor * exp(C(M) T) * [k + h^2 + h^2 * pressure_term] is returned,
    with C(M) the quartic or quadratic localization exponent.

    ``time_trajs`` may also be an array (S, N+1) of ||u^l||_V^2 series and
    ``error_series`` an array (S, N+1) of |E^l|^2; ``T`` is then required.
    """
    if variant not in ("quartic", "quadratic"):
        raise ValueError("variant must be 'quartic' or 'quadratic'")
    V = _series(time_trajs, lambda t: t.v_norm_sq())
    E = _series(error_series, lambda e: e.l2_sq)
    if V.shape != E.shape or V.shape[0] == 0:
        raise ValueError("trajectories and error series must be paired sample by sample with a shared N")
    N = V.shape[1] - 1
    if T is None:
        first = next(iter(time_trajs))
        if not isinstance(first, Trajectory):
            raise ValueError("T is required when norm series are passed as arrays")
        T = first.params.T
    k = T / N
    power = 2 if variant == "quartic" else 1
    Y = np.maximum.accumulate(V ** power, axis=1)  # (S, N+1)
    ind = Y <= M
    probs = ind.mean(axis=0)
    run = np.maximum.accumulate(E[:, 1:], axis=1)  # max_{1<=n<=m}, m = 1..N
    loc = (ind[:, :-1] * run).mean(axis=0)  # indicator of Omega_{m-1}
    unloc = run.mean(axis=0)
    bound = admissible = None
    if rates is not None and prefactor is not None and h is not None:
        C = rates.C1_tilde if variant == "quartic" else rates.C3_tilde
        if C is None:
            raise ValueError("rates must be evaluated with M to supply the localization exponent")
        if variant == "quartic":
            bound = prefactor * math.exp(C * T) * (k + h * h + h * h * pressure_term)
        else:
            bound = prefactor * math.exp(C * T) * (k + h * h)
    if C0 is not None:
        admissible = k * M <= C0
    return LocalizationReport(float(M), variant, probs, loc, unloc, float(loc[-1]), float(unloc[-1]),
                              bound, admissible)


def _series(items, get) -> np.ndarray:
    if isinstance(items, np.ndarray):
        return np.atleast_2d(np.asarray(items, dtype=float))
    rows = [np.asarray(get(x) if not isinstance(x, np.ndarray) else x, dtype=float) for x in items]
    if not rows:
        return np.zeros((0, 0))
    if any(len(r) != len(rows[0]) for r in rows):
        raise ValueError("all samples must share N")
    return np.stack(rows)


@dataclass(frozen=True)
class PressureReport:
    N: tuple
    mean: tuple
    stderr: tuple
    slope: float | None
    slope_stderr: float | None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def pressure_sum(fem_trajs) -> PressureReport:
    """k sum_l |grad Pi^l|^2 per N and its log-log slope in N."""
    groups = _by_N(fem_trajs)
    sums = {}
    for N, trajs in groups.items():
        for t in trajs:
            if t.kind != "alg1":
                raise ValueError("pressure sums need finite-element trajectories with pressures")
        sums[N] = [t.k * float(np.sum(t.pressure_grad_sq())) for t in trajs]
    return summarize_pressure(sums)


def summarize_pressure(sums: dict) -> PressureReport:
    """PressureReport from per-sample values of k sum_l |grad Pi^l|^2 grouped by N."""
    Ns, means, ses = [], [], []
    for N, vals in sorted(sums.items()):
        m, s = _mean_se(vals)
        Ns.append(int(N))
        means.append(m)
        ses.append(s)
    slope = se = None
    if len(Ns) >= 2 and all(m > 0 for m in means):
        if len(Ns) >= 3:
            f = fit_rate(np.array(Ns, float), np.array(means))
            slope, se = f.slope, f.stderr
        else:
            slope = math.log(means[1] / means[0]) / math.log(Ns[1] / Ns[0])
    return PressureReport(tuple(Ns), tuple(means), tuple(ses), slope, se)
