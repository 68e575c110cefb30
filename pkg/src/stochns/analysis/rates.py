"""Closed-form critical exponents and the generic localization-to-rate calculator."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from ..spectral import DEFAULT_GN_CONSTANT

__all__ = [
    "RatePrediction",
    "predicted_rates",
    "RateForm",
    "rate_from_localization",
    "log_rate_exponents",
]


@dataclass(frozen=True)
class RatePrediction:
    """Rate constants for one parameter set.

    alpha0
        Exponential-moment threshold nu / (2 Ct K0 TrQ).
    beta_tilde0
        alpha0 gamma0 / (gamma0 + alpha0) for Gaussian initial data with
        exponential moment gamma0 (None when gamma0 is not given).
    beta0
        Polynomial rate of the time scheme, (1/2) alpha0 / (alpha0 + C0).
    kappa0
        Polynomial rate for divergence-free elements,
        alpha0 (2^{q0-1} - 1) / (alpha0 (2^{q0-1} - 1) + C1 2^{q0-1}).
    kappa0_general
        Polynomial rate for general elements with additive noise,
        ((2^{q0-1} - 1) / 2^{q0-1}) alpha0 (4 / Cbar^2) sqrt(nu^3 / T).
    C0, C1
        Cbar^2 T / (2 nu) and [Cbar^2 / (4 nu) + 1] T.
    C1_tilde, C3_tilde
        Localization exponents (1 + delta) Cbar^4 M / (16 nu^3) and
        (1 + delta) [Cbar^2 / (4 nu) + 1] M, each plus ``additive_constant``
        (None when M is not given).
    """

    alpha0: float
    beta_tilde0: float | None
    beta0: float
    kappa0: float
    kappa0_general: float
    C0: float
    C1: float
    C1_tilde: float | None
    C3_tilde: float | None
    large_M: bool | None
    inputs: dict

    def to_dict(self) -> dict:
        return asdict(self)


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise ValueError(f"{name} must be positive and finite, got {value}")
    return value


def predicted_rates(nu: float, K0: float, trQ: float, T: float, *, q0: int = 3,
                    Cbar: float = DEFAULT_GN_CONSTANT, Ctilde: float = 1.0,
                    gamma0: float | None = None, M: float | None = None,
                    delta: float = 0.1, additive_constant: float = 0.0) -> RatePrediction:
    """Evaluate every closed-form rate constant.

    ``Ctilde`` is the constant of |grad u|^2 <= Ctilde |A u|^2, which equals
    (L / 2 pi)^2 on the torus of side L (1 for L = 2 pi).  ``additive_constant``
    is the unspecified M-independent part of the localization exponents; the
    "large M" form drops it, flagged by ``large_M`` once the M-term exceeds it
    tenfold.
    """
    nu = _positive("nu", nu)
    K0 = _positive("K0", K0)
    trQ = _positive("trQ", trQ)
    T = _positive("T", T)
    Cbar = _positive("Cbar", Cbar)
    Ctilde = _positive("Ctilde", Ctilde)
    if int(q0) != q0 or q0 < 3:
        raise ValueError(f"q0 must be an integer >= 3, got {q0}")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    alpha0 = nu / (2.0 * Ctilde * K0 * trQ)
    beta_tilde0 = None
    if gamma0 is not None:
        gamma0 = _positive("gamma0", gamma0)
        beta_tilde0 = alpha0 * gamma0 / (gamma0 + alpha0)
    C0 = Cbar ** 2 * T / (2.0 * nu)
    C1 = (Cbar ** 2 / (4.0 * nu) + 1.0) * T
    beta0 = 0.5 * alpha0 / (alpha0 + C0)
    P = 2.0 ** (q0 - 1)
    kappa0 = alpha0 * (P - 1.0) / (alpha0 * (P - 1.0) + C1 * P)
    kappa0_general = (P - 1.0) / P * alpha0 * (4.0 / Cbar ** 2) * math.sqrt(nu ** 3 / T)
    C1t = C3t = large = None
    if M is not None:
        M = _positive("M", M)
        m1 = (1 + delta) * Cbar ** 4 / (2 ** 4 * nu ** 3) * M
        m3 = (1 + delta) * (Cbar ** 2 / (4.0 * nu) + 1.0) * M
        C1t, C3t = m1 + additive_constant, m3 + additive_constant
        large = min(m1, m3) >= 10.0 * abs(additive_constant)
    inputs = dict(nu=nu, K0=K0, trQ=trQ, T=T, q0=int(q0), Cbar=Cbar, Ctilde=Ctilde,
                  gamma0=gamma0, M=M, delta=delta, additive_constant=additive_constant)
    return RatePrediction(alpha0, beta_tilde0, beta0, kappa0, kappa0_general, C0, C1, C1t, C3t, large, inputs)


@dataclass(frozen=True)
class RateForm:
    """Convergence rate implied by a localized bound.

    case : "i" (|ln phi|^-exponent), "ii" (exp(-exponent |ln phi|^{1/a}))
        or "iii" (phi^exponent).
    exponent : supremum of admissible exponents.
    rate : the rate evaluated at phi.
    flags : notes such as "a=1 with polynomial moments".
    """

    case: str
    exponent: float
    rate: float
    flags: tuple


def rate_from_localization(C1: float, a: float, p: float, *, q: float | None = None,
                           alpha0: float | None = None, phi: float) -> RateForm:
    """Turn a localized estimate E(X 1{Y^a <= M}) <= phi exp((1+delta) C1 M) into a rate.

    Supply ``q`` for polynomial moments E Y^q < inf (case i) or ``alpha0`` for
    exponential moments E exp(alpha Y) < inf, alpha < alpha0 (case ii when
    a > 1, case iii when a = 1).  ``p`` bounds the moments E X^p; use
    ``math.inf`` when every p is available.
    """
    if (q is None) == (alpha0 is None):
        raise ValueError("supply exactly one of q and alpha0")
    if a < 1:
        raise ValueError("a must be >= 1")
    if not p > 1:
        raise ValueError("p must exceed 1")
    C1 = _positive("C1", C1)
    if not 0 < phi < 1:
        raise ValueError(f"phi={phi} is outside the asymptotic regime (0, 1)")
    L = abs(math.log(phi))
    pf = 1.0 if math.isinf(p) else (p - 1.0) / p
    if q is not None:
        q = _positive("q", q)
        exponent = q * pf / a
        flags = ("a=1 with polynomial moments",) if a == 1 else ()
        return RateForm("i", exponent, L ** (-exponent), flags)
    alpha0 = _positive("alpha0", alpha0)
    if a > 1:
        g2 = pf * alpha0 * C1 ** (-1.0 / a)
        return RateForm("ii", g2, math.exp(-g2 * L ** (1.0 / a)), ())
    if math.isinf(p):
        g3 = alpha0 / (alpha0 + C1)
    else:
        g3 = alpha0 * (p - 1.0) / (alpha0 * (p - 1.0) + C1 * p)
    return RateForm("iii", g3, phi ** g3, ())


def log_rate_exponents(q0: int) -> dict:
    """Logarithmic exponents for multiplicative noise.

    ``general``: a = 2, p = q = 2^{q0-1} gives 2^{q0-2} - 1/2.
    ``divergence_free``: a = 1, p = q = 2^{q0-1} gives 2^{q0-1} - 1.
    """
    if int(q0) != q0 or q0 < 3:
        raise ValueError("q0 must be an integer >= 3")
    P = 2.0 ** (q0 - 1)
    return {
        "general": rate_from_localization(1.0, 2, P, q=P, phi=0.5).exponent,
        "divergence_free": rate_from_localization(1.0, 1, P, q=P, phi=0.5).exponent,
    }
