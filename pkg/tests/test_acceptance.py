"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are repeated in the
terminal summary under "acceptance criteria".
"""

import math
import time

import numpy as np
import pytest

from stochns.analysis import (
    estimate_exp_moment,
    estimate_moments,
    localization_diagnostics,
    log_rate_exponents,
    predicted_rates,
    pressure_sum,
    rate_from_localization,
)
from stochns.fem import (
    FemSpacePair,
    FemState,
    assemble_convection_btilde,
    assemble_operators,
    build_periodic_mesh,
    check_inf_sup,
    cross_norms,
    modal_loads,
    project_Qh0,
)
from stochns.harness import ExperimentConfig, convergence_table, load_samples, run_experiment
from stochns.harness.reports import localization_report
from stochns.noise import Additive, DiagonalMultiplicative, apply_G, fourier_covariance, sample_path
from stochns.schemes import SchemeParams, make_space, run_scheme, step_algorithm1, step_time_euler
from stochns.spectral import (
    SpectralVelocity,
    TorusGeometry,
    inner,
    nonlinear_B,
    random_field,
    stokes_apply,
    trilinear_b,
    v_norm_sq,
)

G = TorusGeometry()


def smooth_field():
    return SpectralVelocity.from_function(
        G, lambda x, y: (np.sin(y) + 0.5 * np.cos(x + y), np.cos(x) - 0.5 * np.cos(x + y)), 2,
        divergence_free=True)


def slopes(h, err):
    return np.diff(np.log(err)) / np.diff(np.log(h))


def test_criterion_01_trilinear_identities(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_b = worst_B = 0.0
    for _ in range(1000):
        K = int(rng.integers(2, 7))
        u, v = (random_field(G, K, rng, amplitude=float(np.exp(rng.normal(0, 1)))) for _ in range(2))
        nu_, nv = math.sqrt(v_norm_sq(u)), math.sqrt(v_norm_sq(v))
        worst_b = max(worst_b, abs(trilinear_b(u, v, v)) / (nu_ * nv ** 2))
        worst_B = max(worst_B, abs(inner(nonlinear_B(u), stokes_apply(u))) / nu_ ** 3)
    space = FemSpacePair(build_periodic_mesh(G, 8))
    ops = assemble_operators(space)
    Vn = ops.Mv + ops.Sv
    worst_fe = 0.0
    for _ in range(100):
        w, phi = rng.standard_normal((2, space.velocity_size))
        C = assemble_convection_btilde(space, w)
        scale = math.sqrt(w @ Vn @ w) * (phi @ Vn @ phi)
        worst_fe = max(worst_fe, abs(phi @ C @ phi) / scale)
    secs = time.perf_counter() - t0
    ok = worst_b <= 1e-10 and worst_B <= 1e-9 and worst_fe <= 1e-10 and secs < 60
    verdict(1, ok, f"max|b(u,v,v)|/(|u|_V|v|_V^2)={worst_b:.2e} max|<B(u,u),Au>|/|u|_V^3={worst_B:.2e} "
                   f"max|b~(w,Phi,Phi)|/scale={worst_fe:.2e} ({secs:.1f}s)")
    assert ok


def test_criterion_02_projection_orders(verdict):
    t0 = time.perf_counter()
    z = smooth_field()
    ms = (8, 16, 32)
    out = {}
    for element in ("mini", "taylor-hood"):
        h, l2, grad = [], [], []
        for m in ms:
            space = FemSpacePair(build_periodic_mesh(G, m), element)
            e = cross_norms(z, project_Qh0(z, space).U, space)
            h.append(space.h)
            l2.append(math.sqrt(e[0]))
            grad.append(math.sqrt(e[1]))
        out[element] = (slopes(h, l2), slopes(h, grad))
    secs = time.perf_counter() - t0
    s_l2, s_grad = out["mini"]
    ok = bool(np.all((s_l2 >= 1.7) & (s_l2 <= 2.3)) and np.all((s_grad >= 0.7) & (s_grad <= 1.3))) and secs < 120
    th_l2, th_grad = out["taylor-hood"]
    verdict(2, ok, f"MINI slopes L2={np.round(s_l2, 3).tolist()} grad={np.round(s_grad, 3).tolist()} "
                   f"(Taylor-Hood L2={np.round(th_l2, 3).tolist()} grad={np.round(th_grad, 3).tolist()}) ({secs:.1f}s)")
    assert ok


def test_criterion_03_inf_sup(verdict):
    t0 = time.perf_counter()
    vals = [check_inf_sup(FemSpacePair(build_periodic_mesh(G, m), "taylor-hood")) for m in (4, 8, 16)]
    secs = time.perf_counter() - t0
    spread = (max(vals) - min(vals)) / max(vals)
    ok = min(vals) > 0 and spread < 0.25 and secs < 120
    verdict(3, ok, f"Taylor-Hood inf-sup {np.round(vals, 4).tolist()} spread={spread:.3f} ({secs:.1f}s)")
    assert ok


def test_criterion_04_energy_identities(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    cov = fourier_covariance(G, 16)
    diffs = [Additive(cov), DiagonalMultiplicative(cov)]
    p = SchemeParams(T=1.0, N=16, nu=0.5, K_ref=8, m=6)
    worst_time = 0.0
    for i in range(100):
        d = diffs[i % 2]
        u0 = random_field(G, 8, rng, n_modes=4, amplitude=float(np.exp(rng.normal(0, 0.7))))
        inc = rng.standard_normal(cov.J) * np.sqrt(cov.q * p.k)
        u1 = step_time_euler(u0, inc, p, d)
        f = apply_G(d, u0, inc).to_spectral(8)
        lhs = u1.l2_norm() ** 2 - u0.l2_norm() ** 2 + (u1 - u0).l2_norm() ** 2 + 2 * p.nu * p.k * u1.norms().grad_l2 ** 2
        worst_time = max(worst_time, abs(lhs - 2 * inner(f, u1)) / max(1.0, u0.l2_norm() ** 2))
    space = make_space(p)
    ops = assemble_operators(space)
    worst_fe = 0.0
    for i in range(100):
        d = diffs[i % 2]
        prev = FemState(space, project_Qh0(random_field(G, 3, rng, amplitude=float(np.exp(rng.normal(0, 0.7)))), space).U)
        inc = rng.standard_normal(cov.J) * np.sqrt(cov.q * p.k)
        new = step_algorithm1(prev, inc, p, d)
        amps = apply_G(d, prev, inc).amplitudes
        dU = new.U - prev.U
        lhs = new.U @ ops.Mv @ new.U - prev.U @ ops.Mv @ prev.U + dU @ ops.Mv @ dU + 2 * p.nu * p.k * new.U @ ops.Sv @ new.U
        rhs = 2 * amps @ (modal_loads(cov, space) @ new.U)
        worst_fe = max(worst_fe, abs(lhs - rhs) / max(1.0, prev.U @ ops.Mv @ prev.U))
    secs = time.perf_counter() - t0
    ok = worst_time <= 10 * p.picard_tol and worst_fe <= 10 * p.solver_tol and secs < 60
    verdict(4, ok, f"time scheme residual {worst_time:.2e} (limit {10 * p.picard_tol:.0e}), "
                   f"finite elements {worst_fe:.2e} (limit {10 * p.solver_tol:.0e}) ({secs:.1f}s)")
    assert ok


def test_criterion_05_moment_stability(verdict):
    t0 = time.perf_counter()
    cfg = ExperimentConfig({})
    diff = Additive(fourier_covariance(G, 16))
    u0 = cfg.initial_condition(0)
    space = make_space(SchemeParams(m=8))
    time_runs, fe_runs = [], []
    for i in range(64):
        path = sample_path(diff.cov, 5, 64, 1.0, i)
        for N in (16, 64):
            time_runs.append(run_scheme(u0, path, SchemeParams(N=N, nu=1.0, K_ref=8), "time", diff))
            fe_runs.append(run_scheme(u0, path, SchemeParams(N=N, nu=1.0, m=8), "alg1", diff, space=space))
    rt = estimate_moments(time_runs, q=1)
    rf = estimate_moments(fe_runs, q=1)
    secs = time.perf_counter() - t0
    ok = rt.ratio < 2 and rf.ratio < 2 and secs < 600
    verdict(5, ok, f"q=1 time scheme means {np.round(rt.mean, 4).tolist()} ratio={rt.ratio:.3f}; "
                   f"finite elements (m=8) means {np.round(rf.mean, 4).tolist()} ratio={rf.ratio:.3f} ({secs:.1f}s)")
    assert ok


def test_criterion_06_pressure_scaling(verdict):
    t0 = time.perf_counter()
    u0 = ExperimentConfig({}).initial_condition(0)
    space = make_space(SchemeParams(m=8))
    cases = {
        "multiplicative G1": DiagonalMultiplicative(fourier_covariance(G, 16, polarization="mixed")),
        "additive divergence-free": Additive(fourier_covariance(G, 16)),
    }
    reps = {}
    for name, diff in cases.items():
        trajs = []
        for i in range(32):
            path = sample_path(diff.cov, 6, 32, 1.0, i)
            for N in (8, 16, 32):
                trajs.append(run_scheme(u0, path, SchemeParams(N=N, m=8), "alg1", diff, space=space))
        reps[name] = pressure_sum(trajs)
    secs = time.perf_counter() - t0
    s_mult = reps["multiplicative G1"].slope
    s_add = reps["additive divergence-free"].slope
    ok = 0.5 <= s_mult <= 1.5 and -0.5 <= s_add <= 0.5 and secs < 900
    verdict(6, ok, f"slope in N: multiplicative G1 {s_mult:.3f} (need [0.5,1.5]), "
                   f"additive divergence-free {s_add:.3f} (need [-0.5,0.5]) ({secs:.1f}s)")
    assert ok


def test_criterion_07_exponential_moments(verdict):
    t0 = time.perf_counter()
    cfg = ExperimentConfig({"initial": {"kind": "zero"}, "K_ref": 8,
                            "levels": [{"N": 16, "res": 4}, {"N": 32, "res": 4}, {"N": 64, "res": 4}]})
    diff = cfg.diffusion()
    alpha0 = cfg.rates().alpha0
    u0 = cfg.initial_condition(0)
    trajs = []
    for i in range(256):
        path = sample_path(diff.cov, 7, 64, 1.0, i)
        for N in (16, 32, 64):
            trajs.append(run_scheme(u0, path, cfg.params(N), "time", diff))
    rep = estimate_exp_moment(trajs, alpha0 / 2, alpha0=alpha0, diffusion=diff)
    zero = estimate_exp_moment(trajs, 0.0, diffusion=diff)
    secs = time.perf_counter() - t0
    ok = rep.ratio < 2 and all(e == 1.0 for e in zero.estimate) and not rep.outside_guarantee and secs < 900
    verdict(7, ok, f"alpha=alpha0/2={alpha0 / 2:.4g}: estimates {np.round(rep.estimate, 4).tolist()} "
                   f"ratio={rep.ratio:.3f}; alpha=0 gives {list(zero.estimate)} ({secs:.1f}s)")
    assert ok


@pytest.fixture(scope="module")
def convergence_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("criterion8")
    cfg = ExperimentConfig({
        "scheme": "alg2",
        "levels": [{"N": 16, "res": 4}, {"N": 32, "res": 6}, {"N": 64, "res": 8}],
        "K_ref": 16,
        "samples": 64,
        "seed": 8,
    })
    t0 = time.perf_counter()
    manifest, records = run_experiment(cfg, out)
    return cfg, out, manifest, records, time.perf_counter() - t0


def test_criterion_08_strong_convergence(verdict, convergence_run):
    cfg, _, manifest, records, secs = convergence_run
    table = convergence_table(cfg, records)
    err = table.column("max_l2_err_mean")  # rows sorted by increasing eta
    eta = table.column("eta")
    fit = table.slopes()["max_l2_err_mean"]
    monotone = bool(np.all(np.diff(err) > 0))
    ok = manifest["completed"] == 64 and len(table.rows) == 3 and monotone and fit["slope"] >= 0.3 and secs < 2700
    log_fit = table.slopes().get("max_l2_err_mean_log", {}).get("slope")
    verdict(8, ok, f"eta={np.round(eta, 4).tolist()} E max|E|^2={[f'{e:.3e}' for e in err]} "
                   f"slope={fit['slope']:.3f} (need >= 0.3; log-form exponent {log_fit:.3f} reported only) ({secs:.1f}s)")
    assert ok


def test_criterion_09_rate_calculator(verdict):
    t0 = time.perf_counter()
    r = predicted_rates(1.0, 0.5, 1.0, 1.0, Cbar=math.sqrt(2))
    checks = {
        "alpha0=1": abs(r.alpha0 - 1.0),
        "beta0=1/4": abs(r.beta0 - 0.25),
    }
    for q0 in (3, 4, 5, 6):
        P = 2 ** (q0 - 1)
        e = rate_from_localization(1.0, 2, P, q=P, phi=0.5).exponent
        checks[f"exponent q0={q0}"] = abs(e - (2 ** (q0 - 2) - 0.5))
    checks["log exponent q0=3"] = abs(log_rate_exponents(3)["general"] - 1.5)
    lim = predicted_rates(1.0, 1e-14, 1.0, 1.0)
    checks["kappa0->1"] = abs(lim.kappa0 - 1.0)
    checks["beta0->1/2"] = abs(lim.beta0 - 0.5)
    secs = time.perf_counter() - t0
    worst = max(checks.values())
    ok = worst <= 1e-12 and secs < 1
    verdict(9, ok, f"max deviation {worst:.1e} over {len(checks)} checks ({secs * 1e3:.1f}ms)")
    assert ok


def test_criterion_10_localization_shape(verdict, convergence_run):
    cfg, out, _, _, _ = convergence_run
    t0 = time.perf_counter()
    stored = load_samples(out, cfg)  # reread from disk
    ok = True
    worst_gap = 0.0
    for li, (N, _) in enumerate(cfg.levels):
        V = np.array([stored[i]["levels"][li]["ref_v_norm_sq"] for i in sorted(stored)])
        E = np.array([stored[i]["levels"][li]["err_l2_sq"] for i in sorted(stored)])
        for variant in ("quartic", "quadratic"):
            power = 2 if variant == "quartic" else 1
            Ms = np.quantile(np.max(V, axis=1) ** power, [0.1, 0.25, 0.5, 0.75, 0.9])
            for M in Ms:
                rep = localization_diagnostics(V, E, float(M), variant, T=float(cfg["T"]))
                ok &= bool(np.all(np.diff(rep.probabilities) <= 0))
                ok &= bool(np.all(rep.localized <= rep.unlocalized))
                worst_gap = max(worst_gap, float(np.max(rep.localized - rep.unlocalized)))
            inf = localization_diagnostics(V, E, math.inf, variant, T=float(cfg["T"]))
            ok &= bool(np.array_equal(inf.localized, inf.unlocalized)) and bool(np.all(inf.probabilities == 1))
    report = localization_report(cfg, stored)
    secs = time.perf_counter() - t0
    ok = ok and secs < 300
    verdict(10, ok, f"monotone probabilities, localized <= unlocalized (max gap {worst_gap:.1e}), "
                    f"M=inf exact; {len(report['by_M'])} thresholds reported ({secs:.1f}s)")
    assert ok
