"""Spectral fields: projection, Stokes operator, norms and the convection term."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochns.spectral import (
    DivergenceError,
    ResolutionError,
    SpectralVelocity,
    TorusGeometry,
    compute_norms,
    ctilde_stokes,
    ctilde_v_norm,
    estimate_gn_constant,
    inner,
    leray_project,
    nonlinear_B,
    poincare_ctilde,
    random_field,
    sine_shear,
    stokes_apply,
    stokes_solve,
    trilinear_b,
    v_norm_sq,
)

G = TorusGeometry()


def single_mode(K, m, vec, geometry=G):
    """Real field 2 Re(vec e^{i k_m . x}) with one wavevector."""
    n = 2 * K + 1
    c = np.zeros((2, n, n), complex)
    c[:, K + m[0], K + m[1]] = vec
    c[:, K - m[0], K - m[1]] = np.conj(vec)
    return SpectralVelocity(geometry, c)


def grid(N, L=2 * math.pi):
    x = np.arange(N) * L / N
    return np.meshgrid(x, x, indexing="ij")


seeds = st.integers(min_value=0, max_value=2**32 - 1)


class TestGeometry:
    def test_rejects_nonpositive_side(self):
        with pytest.raises(ValueError):
            TorusGeometry(0.0)
        with pytest.raises(ValueError):
            TorusGeometry(-1.0)

    @pytest.mark.parametrize("L", [1.0, 2 * math.pi, 3.5])
    def test_wavevectors_are_integer_multiples(self, L):
        g = TorusGeometry(L)
        k1, k2 = SpectralVelocity.zeros(g, 3).wavevectors()
        np.testing.assert_allclose(k1 / g.k0, np.round(k1 / g.k0), atol=1e-12)
        assert g.k0 == pytest.approx(2 * math.pi / L)


class TestSpectralVelocity:
    def test_mean_mode_dropped(self):
        c = np.ones((2, 5, 5), complex)
        u = SpectralVelocity(G, c)
        assert np.all(u.coeffs[:, 2, 2] == 0)

    def test_bad_shape(self):
        with pytest.raises(ValueError):
            SpectralVelocity(G, np.zeros((2, 4, 4)))

    def test_coefficients_read_only(self):
        u = SpectralVelocity.zeros(G, 2)
        with pytest.raises(ValueError):
            u.coeffs[0, 0, 0] = 1.0

    def test_hermitian_random_field(self, rng):
        u = random_field(G, 6, rng)
        assert u.is_hermitian()

    def test_grid_round_trip(self, rng):
        u = random_field(G, 5, rng, divergence_free=False)
        v = SpectralVelocity.from_grid(G, u.to_grid(16), 5)
        np.testing.assert_allclose(v.coeffs, u.coeffs, atol=1e-14)

    def test_pointwise_evaluation_matches_grid(self, rng):
        u = random_field(G, 4, rng)
        X, Y = grid(12)
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        vals = u.evaluate(pts).T.reshape(2, 12, 12)
        np.testing.assert_allclose(vals, u.to_grid(12), atol=1e-13)

    def test_gradient_evaluation_matches_grid(self, rng):
        u = random_field(G, 4, rng)
        X, Y = grid(12)
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        grads = u.evaluate_gradient(pts).transpose(1, 2, 0).reshape(2, 2, 12, 12)
        np.testing.assert_allclose(grads, u.gradient_grid(12), atol=1e-12)

    def test_from_function_sine(self):
        u = SpectralVelocity.from_function(G, lambda x, y: (np.sin(y), 0 * x), 3)
        np.testing.assert_allclose(u.coeffs, sine_shear(G, 3).coeffs, atol=1e-15)

    def test_resize_pads_and_truncates(self, rng):
        u = random_field(G, 3, rng)
        assert u.resize(6).resize(3).coeffs.tolist() == u.coeffs.tolist()
        assert u.resize(1).K == 1

    def test_too_coarse_grid(self):
        with pytest.raises(ResolutionError):
            SpectralVelocity.zeros(G, 4).to_grid(8)


class TestLerayProject:
    def test_parallel_component_removed(self):
        u = leray_project(single_mode(2, (1, 0), np.array([0.7 - 0.2j, 0.0])))
        np.testing.assert_allclose(u.coeffs, 0.0, atol=1e-15)

    def test_orthogonal_component_kept(self):
        v = single_mode(2, (1, 0), np.array([0.0, 1.0]))
        np.testing.assert_array_equal(leray_project(v).coeffs, v.coeffs)

    def test_idempotent_on_eight_mode_field(self, rng):
        v = random_field(G, 8, rng, divergence_free=False)
        once = leray_project(v)
        np.testing.assert_allclose(leray_project(once).coeffs, once.coeffs, atol=1e-12, rtol=0)
        assert once.divergence_free
        assert once.divergence_residual() < 1e-15

    @given(seeds)
    def test_self_adjoint(self, seed):
        rng = np.random.default_rng(seed)
        u = random_field(G, 5, rng, divergence_free=False)
        v = random_field(G, 5, rng, divergence_free=False)
        assert inner(leray_project(u), v) == pytest.approx(inner(u, leray_project(v)), abs=1e-12)

    @given(seeds)
    def test_idempotent_property(self, seed):
        v = random_field(G, 4, np.random.default_rng(seed), divergence_free=False)
        p = leray_project(v)
        assert np.max(np.abs(leray_project(p).coeffs - p.coeffs)) <= 1e-12


class TestStokes:
    def test_zero_field(self):
        assert not np.any(stokes_apply(SpectralVelocity.zeros(G, 3)).coeffs)

    def test_unit_mode_multiplier(self):
        u = single_mode(2, (1, 0), np.array([0.0, 0.5j]))
        np.testing.assert_allclose(stokes_apply(u).coeffs, u.coeffs, atol=0)

    @pytest.mark.parametrize("L", [1.0, 2 * math.pi, 10.0])
    def test_multiplier_scales_with_side(self, L):
        g = TorusGeometry(L)
        u = single_mode(3, (2, 1), np.array([1.0, -2.0]), g)
        ratio = stokes_apply(u).coeffs[0, 5, 4] / u.coeffs[0, 5, 4]
        assert ratio.real == pytest.approx((2 * math.pi / L) ** 2 * 5)

    def test_solve_inverts_shifted_operator(self, rng):
        u = random_field(G, 5, rng)
        w = stokes_solve(u, 1.0, 0.3)
        back = w + 0.3 * stokes_apply(w)
        np.testing.assert_allclose(back.coeffs, u.coeffs, atol=1e-15)

    @pytest.mark.parametrize("L", [1.0, 2 * math.pi, 7.0])
    def test_gradient_bounded_by_stokes_with_sharp_constant(self, L, rng):
        g = TorusGeometry(L)
        C = poincare_ctilde(g)
        assert C == pytest.approx((L / (2 * math.pi)) ** 2)
        for _ in range(20):
            nb = compute_norms(random_field(g, 6, rng, divergence_free=bool(rng.integers(2))))
            assert nb.grad_l2 ** 2 <= C * nb.stokes_l2 ** 2 * (1 + 1e-12)
            assert nb.l2 <= (L / (2 * math.pi)) * nb.grad_l2 * (1 + 1e-12)

    @pytest.mark.parametrize("L", [1.0, 2 * math.pi, 4 * math.pi])
    def test_both_ctilde_definitions_coincide(self, L):
        # (1 + lam) / (lam + lam^2) = 1 / lam, the same per-mode quotient
        g = TorusGeometry(L)
        assert ctilde_stokes(g, 8) == pytest.approx(poincare_ctilde(g), rel=1e-14)
        assert ctilde_v_norm(g, 8) == pytest.approx(poincare_ctilde(g), rel=1e-14)


class TestNorms:
    def test_zero(self):
        nb = compute_norms(SpectralVelocity.zeros(G, 3))
        assert (nb.l2, nb.grad_l2, nb.v_norm_sq, nb.l4, nb.stokes_l2) == (0, 0, 0, 0, 0)

    def test_sine_shear_closed_form(self):
        nb = compute_norms(sine_shear(G, 4))
        assert nb.l2 ** 2 == pytest.approx(2 * math.pi ** 2, rel=1e-14)
        assert nb.grad_l2 ** 2 == pytest.approx(2 * math.pi ** 2, rel=1e-14)
        # int sin^4 = 3/8 of the area
        assert nb.l4 ** 4 == pytest.approx(3 / 8 * 4 * math.pi ** 2, rel=1e-13)

    def test_v_norm_definitional(self, rng):
        u = random_field(G, 7, rng)
        nb = compute_norms(u)
        assert nb.v_norm_sq == v_norm_sq(u)
        assert nb.v_norm_sq == pytest.approx(nb.l2 ** 2 + nb.grad_l2 ** 2, rel=1e-15)

    def test_l4_against_fine_grid(self, rng):
        u = random_field(G, 5, rng, divergence_free=False)
        g = u.to_grid(96)
        ref = (np.mean((g[0] ** 2 + g[1] ** 2) ** 2) * G.area) ** 0.25
        assert compute_norms(u, 11).l4 == pytest.approx(ref, rel=1e-13)

    def test_resolution_too_low(self, rng):
        with pytest.raises(ResolutionError):
            compute_norms(random_field(G, 5, rng), 10)

    def test_gagliardo_nirenberg_on_1000_fields(self):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(1000):
            K = int(rng.integers(1, 7))
            u = random_field(G, K, rng, decay=float(rng.uniform(0.3, 1.5)),
                             divergence_free=bool(rng.integers(2)))
            nb = compute_norms(u)
            worst = max(worst, nb.l4 ** 2 / (nb.l2 * nb.grad_l2))
        assert worst <= 2.0

    def test_gn_estimator_below_default(self, rng):
        est = estimate_gn_constant(G, 5, 50, rng)
        assert 0 < est < 2.0


def brute_trilinear(u1, g2, u3, L=2 * math.pi):
    """int (u1 . grad u2) . u3 by the rectangle rule on analytic point values."""
    conv = [u1[0] * g2[c][0] + u1[1] * g2[c][1] for c in range(2)]
    return float(np.mean(conv[0] * u3[0] + conv[1] * u3[1]) * L * L)


class TestTrilinear:
    def test_shear_triple_matches_brute_force(self):
        X, Y = grid(64)
        zero = 0 * X
        ref = brute_trilinear((np.sin(Y), zero), ((zero, zero), (np.cos(X), zero)),
                              (np.cos(X) * np.cos(Y), zero))
        u1 = SpectralVelocity.from_function(G, lambda x, y: (np.sin(y), 0 * x), 2)
        u2 = SpectralVelocity.from_function(G, lambda x, y: (0 * x, np.sin(x)), 2)
        u3 = SpectralVelocity.from_function(G, lambda x, y: (np.cos(x) * np.cos(y), 0 * x), 2)
        assert trilinear_b(u1, u2, u3) == pytest.approx(ref, abs=1e-10)

    def test_nontrivial_triple_frozen_value(self):
        # brute-force value on a 64 x 64 grid equals pi^2
        X, Y = grid(64)
        zero = 0 * X
        ref = brute_trilinear((np.sin(Y), np.cos(X)),
                              ((np.cos(X + Y), np.cos(X + Y)), (-2 * np.sin(2 * X), zero)),
                              (np.cos(Y), np.sin(X + Y)))
        assert ref == pytest.approx(math.pi ** 2, abs=1e-10)
        u1 = SpectralVelocity.from_function(G, lambda x, y: (np.sin(y), np.cos(x)), 2)
        u2 = SpectralVelocity.from_function(G, lambda x, y: (np.sin(x + y), np.cos(2 * x)), 2)
        u3 = SpectralVelocity.from_function(G, lambda x, y: (np.cos(y), np.sin(x + y)), 2)
        assert trilinear_b(u1, u2, u3, 64) == pytest.approx(math.pi ** 2, abs=1e-10)

    def test_resolution_too_low(self, rng):
        u = random_field(G, 4, rng)
        with pytest.raises(ResolutionError):
            trilinear_b(u, u, u, 12)

    def test_resolution_independent_above_threshold(self, rng):
        u, v, w = (random_field(G, 4, rng) for _ in range(3))
        assert trilinear_b(u, v, w, 13) == pytest.approx(trilinear_b(u, v, w, 40), abs=1e-12)

    @given(seeds)
    def test_antisymmetry_last_two_slots(self, seed):
        rng = np.random.default_rng(seed)
        u = random_field(G, 4, rng)
        v = random_field(G, 4, rng, divergence_free=False)
        w = random_field(G, 4, rng, divergence_free=False)
        scale = math.sqrt(v_norm_sq(u) * v_norm_sq(v) * v_norm_sq(w))
        assert abs(trilinear_b(u, v, w) + trilinear_b(u, w, v)) <= 1e-10 * scale
        assert abs(trilinear_b(u, v, v)) <= 1e-10 * math.sqrt(v_norm_sq(u)) * v_norm_sq(v)


class TestNonlinearB:
    def test_shear_gives_zero(self):
        np.testing.assert_allclose(nonlinear_B(sine_shear(G, 4, 2.0)).coeffs, 0, atol=1e-15)

    def test_requires_divergence_free(self, rng):
        with pytest.raises(DivergenceError):
            nonlinear_B(random_field(G, 3, rng, divergence_free=False))

    def test_matches_trilinear_on_eight_mode_field(self, rng):
        u = random_field(G, 8, rng)
        Bu = nonlinear_B(u)
        for _ in range(5):
            w = random_field(G, 8, rng)
            assert inner(Bu, w) == pytest.approx(trilinear_b(u, u, w), abs=1e-9)

    @given(seeds, st.integers(min_value=1, max_value=8))
    def test_orthogonality_identities(self, seed, K):
        u = random_field(G, K, np.random.default_rng(seed), amplitude=3.0)
        Bu = nonlinear_B(u)
        vn = math.sqrt(v_norm_sq(u))
        assert abs(inner(Bu, u)) <= 1e-10 * vn ** 3
        assert abs(inner(Bu, stokes_apply(u))) <= 1e-9 * max(vn, compute_norms(u).stokes_l2) ** 3
        assert Bu.divergence_residual() < 1e-13
