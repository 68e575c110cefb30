"""Rate calculators, fits and Monte Carlo summaries."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochns.analysis import (
    ConvergenceRow,
    ConvergenceTable,
    TooFewSamplesError,
    estimate_exp_moment,
    estimate_moments,
    exp_moment,
    fit_log_rate,
    fit_rate,
    localization_diagnostics,
    log_rate_exponents,
    predicted_rates,
    pressure_sum,
    rate_from_localization,
    summarize_exp_moment,
    summarize_moments,
    summarize_pressure,
)
from stochns.noise import Additive, DiagonalMultiplicative, fourier_covariance, sample_path
from stochns.schemes import SchemeParams, run_scheme
from stochns.spectral import SpectralVelocity, TorusGeometry

G = TorusGeometry()


class TestPredictedRates:
    def test_alpha0_substitution(self):
        assert predicted_rates(1.0, 0.5, 1.0, 1.0).alpha0 == pytest.approx(1.0)

    def test_beta0_substitution(self):
        r = predicted_rates(1.0, 0.5, 1.0, 1.0, Cbar=math.sqrt(2))
        assert r.C0 == pytest.approx(1.0)
        assert r.beta0 == pytest.approx(0.25)

    def test_hand_evaluated_set(self):
        # nu=1/2, K0 TrQ=3, T=2, Cbar=2: every constant is a simple fraction
        r = predicted_rates(0.5, 2.0, 1.5, 2.0, Cbar=2.0, M=1.0, delta=0.1)
        assert r.alpha0 == pytest.approx(1 / 12, rel=1e-14)
        assert r.C0 == pytest.approx(8.0, rel=1e-14)
        assert r.C1 == pytest.approx(6.0, rel=1e-14)
        assert r.beta0 == pytest.approx(1 / 194, rel=1e-14)
        assert r.kappa0 == pytest.approx(1 / 97, rel=1e-14)
        assert r.kappa0_general == pytest.approx(1 / 64, rel=1e-14)
        assert r.C1_tilde == pytest.approx(8.8, rel=1e-14)
        assert r.C3_tilde == pytest.approx(3.3, rel=1e-14)

    def test_small_noise_limits(self):
        r = predicted_rates(1.0, 1e-12, 1.0, 1.0)
        assert r.kappa0 == pytest.approx(1.0, abs=1e-9)
        assert r.beta0 == pytest.approx(0.5, abs=1e-9)

    @given(st.floats(0.05, 5.0), st.floats(0.05, 5.0), st.floats(0.1, 3.0))
    def test_bounds(self, nu, K0, T):
        r = predicted_rates(nu, K0, 1.0, T, gamma0=0.7)
        assert 0 < r.beta0 < 0.5
        assert 0 < r.kappa0 < 1
        assert r.beta_tilde0 <= r.alpha0

    @pytest.mark.parametrize("field", ["beta0", "kappa0"])
    def test_monotone_sweeps(self, field):
        nus = np.linspace(0.1, 5, 25)
        vals = [getattr(predicted_rates(nu, 1.0, 1.0, 1.0), field) for nu in nus]
        assert np.all(np.diff(vals) > 0)
        noise = np.linspace(0.1, 5, 25)
        vals = [getattr(predicted_rates(1.0, K, 1.0, 1.0), field) for K in noise]
        assert np.all(np.diff(vals) < 0)

    def test_beta_tilde_limit(self):
        a = predicted_rates(1.0, 1.0, 1.0, 1.0).alpha0
        gaps = [a - predicted_rates(1.0, 1.0, 1.0, 1.0, gamma0=g).beta_tilde0 for g in 10.0 ** np.arange(0, 9)]
        assert np.all(np.diff(gaps) < 0)
        assert gaps[-1] < 1e-8

    @pytest.mark.parametrize("kw", [dict(nu=0.0), dict(K0=-1.0), dict(trQ=0.0), dict(T=math.inf)])
    def test_rejects_nonpositive(self, kw):
        args = dict(nu=1.0, K0=1.0, trQ=1.0, T=1.0)
        args.update(kw)
        with pytest.raises(ValueError):
            predicted_rates(**args)

    def test_rejects_q0(self):
        with pytest.raises(ValueError):
            predicted_rates(1, 1, 1, 1, q0=2)
        with pytest.raises(ValueError):
            predicted_rates(1, 1, 1, 1, q0=3.5)

    def test_large_m_flag(self):
        assert predicted_rates(1, 1, 1, 1, M=1e4, additive_constant=1.0).large_M
        assert not predicted_rates(1, 1, 1, 1, M=1e-3, additive_constant=1.0).large_M


class TestRateFromLocalization:
    def test_log_exponent_general(self):
        for q0 in (3, 4, 5):
            P = 2 ** (q0 - 1)
            r = rate_from_localization(1.0, 2, P, q=P, phi=0.1)
            assert r.case == "i"
            assert r.exponent == pytest.approx(2 ** (q0 - 2) - 0.5)

    def test_log_rate_exponents(self):
        assert log_rate_exponents(3) == {"general": pytest.approx(1.5), "divergence_free": pytest.approx(3.0)}

    def test_case_iii_infinite_p(self):
        r = rate_from_localization(1.0, 1, math.inf, alpha0=1.0, phi=0.01)
        assert r.case == "iii"
        assert r.exponent == pytest.approx(0.5)
        assert r.rate == pytest.approx(0.1)

    def test_case_iii_finite_p_approaches_sup(self):
        vals = [rate_from_localization(1.0, 1, p, alpha0=1.0, phi=0.5).exponent for p in (2, 4, 16, 256, 1e6)]
        assert all(v < 0.5 for v in vals)
        assert np.all(np.diff(vals) > 0)
        assert vals[-1] == pytest.approx(0.5, abs=1e-6)

    def test_case_ii(self):
        r = rate_from_localization(4.0, 2, math.inf, alpha0=1.0, phi=math.exp(-16))
        assert r.case == "ii"
        assert r.exponent == pytest.approx(0.5)
        assert r.rate == pytest.approx(math.exp(-2.0))

    def test_a_equal_one_polynomial_flagged(self):
        assert rate_from_localization(1.0, 1, 4, q=4, phi=0.5).flags

    @pytest.mark.parametrize("phi", [1.0, 0.0, 2.0])
    def test_phi_outside_regime(self, phi):
        with pytest.raises(ValueError):
            rate_from_localization(1.0, 2, 4, q=4, phi=phi)

    def test_argument_checks(self):
        with pytest.raises(ValueError):
            rate_from_localization(1.0, 2, 4, phi=0.5)
        with pytest.raises(ValueError):
            rate_from_localization(1.0, 2, 4, q=4, alpha0=1.0, phi=0.5)
        with pytest.raises(ValueError):
            rate_from_localization(1.0, 0.5, 4, q=4, phi=0.5)
        with pytest.raises(ValueError):
            rate_from_localization(1.0, 2, 1.0, q=4, phi=0.5)


class TestFits:
    ETA = np.geomspace(1e-4, 1e-1, 8)

    def test_linear(self):
        f = fit_rate(self.ETA, 3.0 * self.ETA)
        assert f.slope == pytest.approx(1.0, abs=1e-3)
        assert f.stderr < 1e-3

    def test_square_root(self):
        assert fit_rate(self.ETA, self.ETA ** 0.5).slope == pytest.approx(0.5, abs=1e-12)

    def test_log_form(self):
        f = fit_log_rate(self.ETA, np.abs(np.log(self.ETA)) ** -2.0)
        assert f.slope == pytest.approx(2.0, abs=0.1)

    def test_log_form_with_noise(self, rng):
        err = np.abs(np.log(self.ETA)) ** -2.0 * np.exp(rng.normal(0, 0.01, len(self.ETA)))
        assert fit_log_rate(self.ETA, err).slope == pytest.approx(2.0, abs=0.1)

    @pytest.mark.parametrize("err", [[1.0, 0.0, 1.0], [1.0, -1.0, 2.0], [1.0, math.nan, 1.0]])
    def test_degenerate(self, err):
        with pytest.raises(ValueError):
            fit_rate([0.1, 0.01, 0.001], err)

    def test_needs_three_rows(self):
        with pytest.raises(ValueError):
            fit_rate([0.1, 0.01], [1.0, 0.1])

    def test_log_form_needs_small_eta(self):
        with pytest.raises(ValueError):
            fit_log_rate([0.5, 1.5, 2.0], [1.0, 2.0, 3.0])


def row(i, eta, err, samples=4):
    return ConvergenceRow(i, 2 ** i, eta / 2, eta / 2, eta, err, 0.0, err, 0.0, samples)


class TestConvergenceTable:
    def test_sorted_by_eta(self):
        t = ConvergenceTable([row(0, 0.3, 1.0), row(1, 0.1, 0.5), row(2, 0.2, 0.7)])
        assert list(t.column("eta")) == [0.1, 0.2, 0.3]
        t.add(row(3, 0.05, 0.2))
        assert t.rows[0].level_index == 3

    def test_slope_only_with_three_rows(self):
        assert ConvergenceTable([row(0, 0.1, 0.1), row(1, 0.01, 0.01)]).slopes() is None
        s = ConvergenceTable([row(i, 10.0 ** -i, 10.0 ** -i) for i in (1, 2, 3)]).slopes()
        assert s["max_l2_err_mean"]["slope"] == pytest.approx(1.0)
        assert "max_l2_err_mean_log" in s

    def test_zero_errors_give_no_slope(self):
        assert ConvergenceTable([row(i, 10.0 ** -i, 0.0) for i in (1, 2, 3)]).slopes() is None

    def test_positive_sample_counts(self):
        with pytest.raises(ValueError):
            ConvergenceTable([row(0, 0.1, 1.0, samples=0)])
        with pytest.raises(ValueError):
            ConvergenceTable().add(row(0, 0.1, 1.0, samples=0))


COV = fourier_covariance(G, 4)


def zero_runs(n, N=4, kind="time"):
    cov0 = COV.with_q(np.zeros(COV.J))
    p = SchemeParams(T=0.25, N=N, K_ref=2, K_h=2, m=2)
    return [run_scheme(SpectralVelocity.zeros(G, 2), sample_path(cov0, i, N, 0.25), p, kind, Additive(cov0))
            for i in range(n)]


class TestMoments:
    def test_zero_noise_zero_data(self):
        rep = estimate_moments(zero_runs(30) + zero_runs(30, N=8), q=2)
        assert rep.N == (4, 8)
        assert rep.mean == (0.0, 0.0)
        assert rep.increments_mean == (0.0, 0.0)
        assert rep.stable

    def test_fem_zero(self):
        rep = estimate_moments(zero_runs(3, kind="alg1"), q=1, min_samples=3)
        assert rep.mean == (0.0,)

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamplesError):
            estimate_moments(zero_runs(5), q=1)

    def test_dyadic_only(self):
        with pytest.raises(ValueError):
            summarize_moments({4: []}, q=3)

    def test_ratio_and_verdict(self):
        vals = {16: [{"main": 1.0, "increments": 0.1}] * 30, 32: [{"main": 2.5, "increments": 0.1}] * 30}
        rep = summarize_moments(vals, q=1)
        assert rep.ratio == pytest.approx(2.5)
        assert not rep.stable


class TestExpMoment:
    def test_alpha_zero_exactly_one(self, rng):
        assert exp_moment(rng.uniform(0, 1e6, 50), 0.0)[0] == 1.0
        rep = summarize_exp_moment({16: [1.0, 2.0], 32: [3.0, 4.0]}, 0.0)
        assert rep.estimate == (1.0, 1.0)

    def test_matches_direct_mean(self, rng):
        x = rng.uniform(0, 3, 100)
        e, le, se = exp_moment(x, 0.7)
        assert e == pytest.approx(np.mean(np.exp(0.7 * x)), rel=1e-12)
        assert le == pytest.approx(math.log(e), rel=1e-12)
        assert se > 0

    def test_overflow_guarded(self):
        e, le, _ = exp_moment([1e4, 2e4], 1.0)
        assert e == math.inf
        assert le == pytest.approx(2e4 - math.log(2))

    def test_flags_outside_guarantee(self):
        assert summarize_exp_moment({16: [1.0]}, 1.0, alpha0=0.5).outside_guarantee
        assert not summarize_exp_moment({16: [1.0]}, 0.25, alpha0=0.5).outside_guarantee

    def test_rejects_multiplicative_and_negative_alpha(self):
        with pytest.raises(ValueError):
            estimate_exp_moment(zero_runs(2), 0.1, diffusion=DiagonalMultiplicative(COV))
        with pytest.raises(ValueError):
            summarize_exp_moment({16: [1.0]}, -0.1)

    def test_from_trajectories(self):
        rep = estimate_exp_moment(zero_runs(3), 0.3, diffusion=Additive(COV))
        assert rep.estimate == (1.0,)


def norm_series(rng, S=40, N=8):
    """Increasing synthetic ||u^l||_V^2 paths and error paths."""
    V = np.cumsum(rng.uniform(0, 1, (S, N + 1)), axis=1)
    E = rng.uniform(0, 1, (S, N + 1)) * 1e-3
    return V, E


class TestLocalization:
    def test_infinite_threshold(self, rng):
        V, E = norm_series(rng)
        rep = localization_diagnostics(V, E, math.inf, T=1.0)
        assert np.all(rep.probabilities == 1)
        np.testing.assert_array_equal(rep.localized, rep.unlocalized)
        assert rep.localized_error == rep.unlocalized_error

    @pytest.mark.parametrize("variant", ["quartic", "quadratic"])
    def test_threshold_below_initial(self, rng, variant):
        V, E = norm_series(rng)
        power = 2 if variant == "quartic" else 1
        rep = localization_diagnostics(V, E, 0.99 * np.min(V[:, 0] ** power), variant, T=1.0)
        assert np.all(rep.probabilities == 0)
        assert rep.localized_error == 0

    @given(st.integers(0, 10 ** 6), st.floats(0.1, 30.0), st.floats(1.0, 4.0))
    def test_probabilities_monotone(self, seed, M, factor):
        V, E = norm_series(np.random.default_rng(seed))
        a = localization_diagnostics(V, E, M, "quadratic", T=1.0)
        b = localization_diagnostics(V, E, M * factor, "quadratic", T=1.0)
        assert np.all((a.probabilities >= 0) & (a.probabilities <= 1))
        assert np.all(np.diff(a.probabilities) <= 0)
        assert np.all(b.probabilities >= a.probabilities)
        assert np.all(a.localized <= a.unlocalized + 1e-15)

    def test_bound_and_admissibility(self, rng):
        V, E = norm_series(rng)
        rates = predicted_rates(1.0, 1.0, 1.0, 1.0, M=2.0)
        rep = localization_diagnostics(V, E, 2.0, "quadratic", rates=rates, prefactor=3.0, h=0.1,
                                       C0=rates.C0, T=1.0)
        assert rep.bound == pytest.approx(3.0 * math.exp(rates.C3_tilde) * (1 / 8 + 0.01))
        assert rep.admissible == (2.0 / 8 <= rates.C0)

    def test_bound_needs_m(self, rng):
        V, E = norm_series(rng)
        with pytest.raises(ValueError):
            localization_diagnostics(V, E, 2.0, rates=predicted_rates(1, 1, 1, 1), prefactor=1.0, h=0.1, T=1.0)

    def test_mismatched_samples(self, rng):
        V, E = norm_series(rng)
        with pytest.raises(ValueError):
            localization_diagnostics(V, E[:-1], 1.0, T=1.0)
        with pytest.raises(ValueError):
            localization_diagnostics(V, E, 1.0, "cubic", T=1.0)
        with pytest.raises(ValueError):
            localization_diagnostics(V, E, 1.0)


class TestPressure:
    def test_zero(self):
        rep = pressure_sum(zero_runs(2, kind="alg1") + zero_runs(2, N=8, kind="alg1"))
        assert rep.mean == (0.0, 0.0)
        assert rep.slope is None

    def test_requires_pressures(self):
        with pytest.raises(ValueError):
            pressure_sum(zero_runs(2))

    def test_synthetic_slopes(self):
        rep = summarize_pressure({N: [3.0 * N, 3.0 * N] for N in (8, 16, 32)})
        assert rep.slope == pytest.approx(1.0)
        rep = summarize_pressure({8: [2.0], 16: [2.0]})
        assert rep.slope == pytest.approx(0.0)
