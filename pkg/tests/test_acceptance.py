"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line."""

import time
import warnings

import numpy as np
import pytest

from otfilter.estimator import LossConfig, OptimizerOptions, coupled_path, filter_at, optimize, population_loss
from otfilter.inference import dmu_closed_form, wchi2_quantile
from otfilter.montecarlo import MCDesign, replication_seeds, run_mc
from otfilter.otf import kalman_filter, run_otf, transport_map
from otfilter.particle import GaussianPredictive, LinearGaussianSampler, run_particle_otf
from otfilter.ssm import ModelMatrices, eval_model, get_builtin, simulate, solve_steady_kf
from otfilter.varsieve import DataVMA, fit_trend_ar, fit_var

from .conftest import random_psd

pytestmark = pytest.mark.acceptance


def report(capsys, number, ok, detail, elapsed, limit):
    ok = ok and elapsed < limit
    with capsys.disabled():
        print(f"\nACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}: {detail} [{elapsed:.1f}s < {limit:g}s]")
    return ok


def _psd_sqrt(S):
    w, Q = np.linalg.eigh(S)
    return (Q * np.sqrt(np.clip(w, 0, None))) @ Q.T


def test_01_identity_map(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(1, 6))
        S = random_psd(rng, d) + 0.1 * np.eye(d)
        worst = max(worst, np.linalg.norm(transport_map(S, S).P - np.eye(d)))
    ok = worst < 1e-10
    assert report(capsys, 1, ok, f"max ||P - I|| = {worst:.2e} (tol 1e-10)", time.perf_counter() - t0, 1.0)


def test_02_map_correctness(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for i in range(200):
        d = int(rng.integers(1, 6))
        rank = int(rng.integers(1, d + 1)) if i % 2 else d
        S = random_psd(rng, d, rank)
        St = random_psd(rng, d) + 0.05 * np.eye(d)
        P = transport_map(S, St).P
        worst = max(worst, np.linalg.norm(P @ St @ P - S) / (1 + np.linalg.norm(S)))
    # 2x2 trace optimality: every feasible cross-covariance is S^{1/2} R St^{1/2}
    # with ||R|| <= 1; the linear objective peaks on the orthogonal group.
    angles = np.linspace(0.0, 2 * np.pi, 200_001)
    c, s = np.cos(angles), np.sin(angles)
    gap = 0.0
    for _ in range(20):
        S, St = random_psd(rng, 2) + 0.05 * np.eye(2), random_psd(rng, 2) + 0.05 * np.eye(2)
        P = transport_map(S, St).P
        ot_value = np.trace(St @ P)
        M = _psd_sqrt(St) @ _psd_sqrt(S)
        best = -np.inf
        for sign in (1.0, -1.0):
            # tr(M R) for R = [[c, -sign s], [s, sign c]]
            vals = M[0, 0] * c + M[0, 1] * s + sign * (-M[1, 0] * s + M[1, 1] * c)
            best = max(best, vals.max())
        gap = max(gap, abs(ot_value - best))
    ok = worst <= 1e-8 and gap <= 1e-4
    assert report(capsys, 2, ok, f"max rel ||P St P - S|| = {worst:.2e}; 2x2 trace gap to brute force = {gap:.2e}",
                  time.perf_counter() - t0, 10.0)


def _fixed_point_residuals(m, kf):
    A, B, C, D = m.A, m.B, m.C, m.D
    Sig = A @ kf.Vbar @ A.T + B @ B.T + A @ D @ B.T + B @ D.T @ A.T
    K = (kf.Vbar @ A.T + D @ B.T) @ np.linalg.pinv(kf.Sigma, rcond=1e-12, hermitian=True)
    V = kf.Vbar - kf.K @ kf.Sigma @ kf.K.T
    Vbar = C @ kf.V @ C.T + D @ D.T

    def rel(x, y):
        return np.linalg.norm(x - y) / (1 + np.linalg.norm(x))

    return max(rel(kf.Sigma, Sig), rel(kf.K, K), rel(kf.V, V), rel(kf.Vbar, Vbar))


def test_03_riccati(capsys):
    t0 = time.perf_counter()
    m = eval_model(get_builtin("local_level"), (1.0, 1.0), require_stationary=False)
    kf = solve_steady_kf(m)
    Vbar = 1.0
    for _ in range(200):
        S = Vbar + 1.0
        K = Vbar / S
        V = Vbar - K * S * K
        Vbar = V + 1.0
    S = Vbar + 1.0
    K = Vbar / S
    V = Vbar - K * S * K
    scalar_err = max(abs(kf.V[0, 0] - V), abs(kf.K[0, 0] - K), abs(kf.Sigma[0, 0] - S))
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        dz, dy = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        dv = dz + dy
        C = rng.standard_normal((dz, dz))
        C *= rng.uniform(0.1, 0.95) / max(abs(np.linalg.eigvals(C)))
        mm = ModelMatrices(np.zeros(dy), rng.standard_normal((dy, dz)), rng.standard_normal((dy, dv)), C,
                           rng.standard_normal((dz, dv)))
        worst = max(worst, _fixed_point_residuals(mm, solve_steady_kf(mm)))
    ok = scalar_err < 1e-8 and worst < 1e-9
    assert report(capsys, 3, ok, f"local level max |steady - iterated| = {scalar_err:.2e}; "
                                 f"max fixed-point residual over 100 models = {worst:.2e}",
                  time.perf_counter() - t0, 10.0)


def test_04_population_loss_oracle(capsys):
    t0 = time.perf_counter()
    spec = get_builtin("ma1")
    J = 80
    vma = DataVMA(0.6 ** np.arange(1, J + 1)[:, None, None], np.zeros(1), np.eye(1))
    lams = np.linspace(-0.95, 0.95, 200)
    sigs = np.linspace(0.5, 1.5, 200)
    grid = np.array([[population_loss(spec, (0.0, lam, sig), vma, horizon=J) for sig in sigs] for lam in lams])
    i, j = np.unravel_index(np.argmin(grid), grid.shape)
    dl, ds = lams[1] - lams[0], sigs[1] - sigs[0]
    ok = abs(lams[i] - 0.6) <= dl and abs(sigs[j] - 1.0) <= ds
    assert report(capsys, 4, ok, f"grid argmin (lambda, sigma) = ({lams[i]:.4f}, {sigs[j]:.4f}), "
                                 f"cell ({dl:.4f}, {ds:.4f})", time.perf_counter() - t0, 30.0)


@pytest.mark.slow
def test_05_consistency(capsys):
    t0 = time.perf_counter()
    spec = get_builtin("ma1")
    m = eval_model(spec, (0.0, 0.5, 1.0))
    est, conv = [], []
    for seed in replication_seeds(5, 50):
        fit = fit_var(simulate(m, 2000, seed=seed).values, 10)
        res = optimize(spec, fit, LossConfig(k=10), OptimizerOptions(seed=seed))
        est.append(res.theta_hat)
        conv.append(res.converged)
    mean = np.mean(est, axis=0)
    err = np.abs(mean - [0.0, 0.5, 1.0]).max()
    ok = err <= 0.05 and all(conv)
    assert report(capsys, 5, ok, f"mean theta_hat = {np.round(mean, 4).tolist()}, max error {err:.4f}, "
                                 f"converged {sum(conv)}/50", time.perf_counter() - t0, 300.0)


@pytest.mark.slow
def test_06_monte_carlo_size(capsys):
    t0 = time.perf_counter()
    spec = get_builtin("arma(1,0)")
    design = MCDesign(spec, (0.0, 0.5, 1.0), spec, n=500, k=4, cfg=LossConfig(k=4))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = run_mc(design, 200, seed=1)
    rc, rr, sr = res.rej_c, res.rej_r, res.spec_rej_05
    band = [(0.01 <= x <= 0.12) for x in (*rc, *rr, sr)]
    ok = all(band) and not res.errors
    assert report(capsys, 6, ok, f"rej_c {np.round(rc, 3).tolist()}, rej_r {np.round(rr, 3).tolist()}, "
                                 f"spec test {sr:.3f}, failures {len(res.errors)}", time.perf_counter() - t0, 1200.0)


@pytest.mark.slow
def test_07_test_power(capsys):
    t0 = time.perf_counter()
    design = MCDesign(get_builtin("arma(1,0)"), (0.0, 0.9, 1.0), get_builtin("ma1"), n=2000, k=4,
                      target=(0.0, 0.9, 1.0), cfg=LossConfig(k=4))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = run_mc(design, 100, seed=2)
    ok = res.spec_rej_05 >= 0.9
    assert report(capsys, 7, ok, f"spec test rejection at 5% = {res.spec_rej_05:.2f} over {res.ok.sum()} reps",
                  time.perf_counter() - t0, 600.0)


def test_08_weighted_chi2(capsys):
    t0 = time.perf_counter()
    q1 = wchi2_quantile([1.0])
    q3 = wchi2_quantile([1.0, 1.0, 1.0])
    rng = np.random.default_rng(8)
    props = True
    for _ in range(25):
        w = rng.uniform(0.05, 5.0, size=int(rng.integers(1, 7)))
        c = rng.uniform(0.1, 10.0)
        q = wchi2_quantile(w, n_draws=50_000)
        props &= np.isclose(wchi2_quantile(c * w, n_draws=50_000), c * q, rtol=1e-9)
        w2 = w.copy()
        w2[rng.integers(w.size)] += rng.uniform(0.0, 3.0)
        props &= wchi2_quantile(w2, n_draws=50_000) >= q - 1e-12
    ok = abs(q1 - 3.841) <= 0.02 and abs(q3 - 7.815) <= 0.03 and props
    assert report(capsys, 8, ok, f"q95{{1}} = {q1:.4f}, q95{{1,1,1}} = {q3:.4f}, properties {'hold' if props else 'fail'}",
                  time.perf_counter() - t0, 10.0)


@pytest.mark.slow
def test_09_particle_vs_closed_form(capsys):
    t0 = time.perf_counter()
    spec = get_builtin("local_level")
    m = eval_model(spec, (1.0, 1.0), require_stationary=False)
    y = simulate(m, 100, seed=3, z0=np.zeros(1)).values
    fit = fit_var(y, 4)
    kf = solve_steady_kf(m)
    nu0 = spec.initial_state(m, y)
    closed = run_otf(kf, m, fit, nu0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        out = run_particle_otf(LinearGaussianSampler(m, nu0, kf.V), GaussianPredictive.from_fit(fit), B=2000, seed=1)
    corr = np.corrcoef(out.y[:, 0], closed.y[:, 0])[0, 1]
    err, flag = out.extras["sinkhorn_err"], out.extras["sinkhorn_flag"]
    marg_ok = bool(np.all((err <= 1e-6) | flag))
    ok = corr >= 0.95 and marg_ok
    assert report(capsys, 9, ok, f"corr = {corr:.4f}; max marginal error {err.max():.1e}, flagged {int(flag.sum())}",
                  time.perf_counter() - t0, 120.0)


def _atsm_theta(spec):
    p = {"delta0": 0.4, "delta1_1": 0.1, "delta1_2": 0.1, "delta1_3": 0.1,
         "rhoQ_11": 0.995, "rhoQ_21": 0.0, "rhoQ_22": 0.95, "rhoQ_31": 0.0, "rhoQ_32": 0.0, "rhoQ_33": 0.85,
         "cQ_1": 0.0, "cQ_2": 0.0, "cQ_3": 0.0}
    rho = np.diag([0.98, 0.9, 0.8])
    p.update({f"rho_{i + 1}{j + 1}": rho[i, j] for i in range(3) for j in range(3)})
    return spec.theta_from_dict(p)


def test_10_singular_model(capsys):
    t0 = time.perf_counter()
    spec = get_builtin("atsm(3,[1,12,24,36,48,60])")
    theta = _atsm_theta(spec)
    m = eval_model(spec, theta)
    y = simulate(m, 600, seed=0).values
    y = y + 1e-3 * y.std(axis=0) * np.random.default_rng(1).standard_normal(y.shape)
    fit = fit_var(y, 2)
    rank = np.linalg.matrix_rank(solve_steady_kf(m).Sigma, tol=1e-10)
    res = optimize(spec, fit, LossConfig(k=2), OptimizerOptions(n_starts=1, max_evals=6000, start=tuple(theta)))
    out = filter_at(spec, res.theta_hat, fit)
    r2 = out.r2
    ok = rank == 3 and np.all(np.isfinite(out.y)) and r2.min() >= 0.95
    assert report(capsys, 10, ok, f"rank Sigma = {rank} of 6; R^2 per yield {np.round(r2, 4).tolist()}",
                  time.perf_counter() - t0, 60.0)


def test_11_trend_cycle(capsys):
    t0 = time.perf_counter()
    n = 300
    rng = np.random.default_rng(0)
    g = np.linspace(1.0, 0.3, n)
    tau = 100 + np.cumsum(g + 0.57 * rng.standard_normal(n))
    e = 0.62 * rng.standard_normal(n)
    c = np.zeros(n)
    for t in range(n):
        c[t] = (1.53 * c[t - 1] if t >= 1 else 0.0) - (0.61 * c[t - 2] if t >= 2 else 0.0) + e[t]
    y = (tau + c)[:, None]
    spec = get_builtin("watson_trend_cycle")
    theta = np.asarray(spec.defaults)
    m = eval_model(spec, theta, require_stationary=False)
    otf_cycle = filter_at(spec, theta, fit_trend_ar(y, 4, 4), require_stationary=False).nu_filtered[:, 1]
    kf_cycle = kalman_filter(m, y, spec.initial_state(m, y), steady=solve_steady_kf(m)).nu_filtered[:, 1]
    a, b = abs(otf_cycle.mean()), abs(kf_cycle.mean())
    ok = a <= 0.5 * b
    assert report(capsys, 11, ok, f"|mean cycle| OTF = {a:.4f}, KF = {b:.4f}, ratio {a / b:.3f} (<= 0.5)",
                  time.perf_counter() - t0, 30.0)


def test_12_sensitivity_validation(capsys):
    t0 = time.perf_counter()
    # white noise: MA(1) at lambda = 0
    spec = get_builtin("ma1")
    th = np.array([0.2, 0.0, 1.3])
    fit = fit_var(simulate(eval_model(spec, th), 300, seed=12).values, 2)
    psi = fit.psi_vector()
    h = 1e-6
    up, dn = psi.copy(), psi.copy()
    up[0] += h
    dn[0] -= h
    fd = (coupled_path(spec, th, fit.with_psi(up)) - coupled_path(spec, th, fit.with_psi(dn))) / (2 * h)
    dmu_err = np.abs(fd - dmu_closed_form(spec, th, fit)[:, :, 0]).max()
    # second-order accuracy: Richardson ratio on nonlinear coordinates
    arma = get_builtin("arma(1,1)")
    ta = np.array([0.0, 0.6, 0.3, 1.0])
    afit = fit_var(simulate(eval_model(arma, ta), 400, seed=13).values, 3)
    apsi = afit.psi_vector()

    def deriv(kind, t, step):
        if kind == "rho":
            a, b = ta.copy(), ta.copy()
            a[1] += step
            b[1] -= step
            return (coupled_path(arma, a, afit)[t, 0] - coupled_path(arma, b, afit)[t, 0]) / (2 * step)
        a, b = apsi.copy(), apsi.copy()
        a[1] += step
        b[1] -= step
        return (coupled_path(arma, ta, afit.with_psi(a))[t, 0]
                - coupled_path(arma, ta, afit.with_psi(b))[t, 0]) / (2 * step)

    rng = np.random.default_rng(12)
    ratios = []
    for _ in range(20):
        kind = ("rho", "sigma_tilde")[int(rng.integers(2))]
        t = int(rng.integers(5, 400))
        d1, d2, d4 = (deriv(kind, t, s) for s in (0.02, 0.01, 0.005))
        ratios.append((d1 - d2) / (d2 - d4))
    ratios = np.array(ratios)
    ok = dmu_err <= 1e-6 and np.all(np.abs(ratios - 4.0) < 0.1)
    assert report(capsys, 12, ok, f"max |FD - closed form| = {dmu_err:.1e}; Richardson ratios in "
                                  f"[{ratios.min():.3f}, {ratios.max():.3f}]", time.perf_counter() - t0, 60.0)
