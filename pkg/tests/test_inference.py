import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chi2

from otfilter.estimator import LossConfig, OptimizerOptions, coupled_path, optimize
from otfilter.exceptions import BoundaryTooClose, DegenerateDistribution, InsufficientData, ShapeError
from otfilter.inference import (
    auto_bandwidth,
    dmu_closed_form,
    duplication_matrix,
    hac_lrv,
    numeric_sensitivities,
    psi_blocks,
    se_correct,
    se_robust,
    spec_moments,
    spec_test,
    spec_test_all,
    var_hessian,
    var_influence,
    var_scores,
    wchi2_quantile,
)
from otfilter.modeldsl import ParamSpec
from otfilter.ssm import TemplateModel, eval_model, get_builtin, simulate
from otfilter.varsieve import fit_var, vech

from .conftest import random_psd


def _ar1(n, rho, seed):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n + 200)
    x = np.zeros_like(e)
    for t in range(1, e.size):
        x[t] = rho * x[t - 1] + e[t]
    return x[200:]


@pytest.fixture(scope="module")
def ma1_est():
    spec = get_builtin("ma1")
    data = simulate(eval_model(spec, (0.0, 0.5, 1.0)), 2000, seed=21).values
    fit = fit_var(data, 10)
    cfg = LossConfig(k=10)
    res = optimize(spec, fit, cfg, OptimizerOptions(n_starts=1))
    return spec, fit, cfg, res.theta_hat


def _bivariate():
    params = [ParamSpec("r1", -0.95, 0.95), ParamSpec("r2", -0.95, 0.95)]
    return TemplateModel(params, [0.0, 0.0], [["1", "0"], ["0", "1"]],
                         [["0", "0", "0.5", "0"], ["0", "0", "0", "0.5"]],
                         [["r1", "0"], ["0", "r2"]],
                         [["1", "0", "0", "0"], ["0", "1", "0", "0"]], name="biv", defaults=[0.6, 0.3])


# -- layout and VAR likelihood -------------------------------------------------

def test_duplication_matrix(rng):
    for d in (1, 2, 4):
        S = random_psd(rng, d)
        np.testing.assert_allclose(duplication_matrix(d) @ vech(S), S.reshape(-1, order="F"))


def test_psi_blocks():
    b = psi_blocks(2, 3)
    assert (b["mu"], b["sigma"], b["psi"]) == (slice(0, 2), slice(2, 5), slice(5, 17))


def test_var_scores_vanish_at_estimates():
    data = np.column_stack([_ar1(800, 0.5, 1), _ar1(800, -0.3, 2)])
    fit = fit_var(data, 2)
    np.testing.assert_allclose(var_scores(fit).mean(axis=0), 0.0, atol=1e-10)


def test_var_hessian_matches_numerical_jacobian():
    data = np.column_stack([_ar1(600, 0.5, 3), _ar1(600, 0.2, 4)])
    fit = fit_var(data, 2)
    psi = fit.psi_vector()
    H = var_hessian(fit)
    J = np.empty_like(H)
    for i in range(psi.size):
        h = 1e-6 * max(1.0, abs(psi[i]))
        up, dn = psi.copy(), psi.copy()
        up[i] += h
        dn[i] -= h
        J[:, i] = (var_scores(fit.with_psi(up)).mean(0) - var_scores(fit.with_psi(dn)).mean(0)) / (2 * h)
    np.testing.assert_allclose(H, J, atol=1e-7)
    assert np.all(np.linalg.eigvalsh(H) < 0)


def test_var_influence_shape():
    fit = fit_var(_ar1(300, 0.4, 5)[:, None], 3)
    Z = var_influence(fit)
    assert Z.shape == (fit.n, fit.d_psi)


# -- long-run variance ---------------------------------------------------------

def test_auto_bandwidth():
    assert auto_bandwidth(1000) == 13
    assert auto_bandwidth(600) == 10


def test_hac_iid():
    x = np.random.default_rng(7).standard_normal(5000)
    assert hac_lrv(x)[0, 0] == pytest.approx(1.0, rel=0.1)


def test_hac_ar1():
    x = _ar1(50_000, 0.5, 8)
    assert hac_lrv(x)[0, 0] == pytest.approx(1.0 / (1 - 0.5) ** 2, rel=0.1)


def test_hac_bandwidth_zero_is_sample_variance(rng):
    x = rng.standard_normal((200, 3))
    xc = x - x.mean(0)
    np.testing.assert_allclose(hac_lrv(x, bandwidth=0), xc.T @ xc / 200, atol=1e-14)


def test_hac_errors():
    with pytest.raises(InsufficientData):
        hac_lrv(np.ones(10), bandwidth=5)
    with pytest.raises(ValueError):
        hac_lrv(np.ones(10), bandwidth=-1)


# -- weighted chi-square -----------------------------------------------------

def test_wchi2_known_quantiles():
    assert wchi2_quantile([1.0]) == pytest.approx(3.841, abs=0.02)
    assert wchi2_quantile([2.0]) == pytest.approx(7.683, abs=0.04)
    assert wchi2_quantile([1.0, 1.0, 1.0]) == pytest.approx(chi2.ppf(0.95, 3), abs=0.03)
    assert wchi2_quantile([1.0], alpha=0.5) == pytest.approx(0.455, abs=0.01)


def test_wchi2_errors():
    with pytest.raises(DegenerateDistribution):
        wchi2_quantile([0.0, 0.0])
    with pytest.raises(ValueError):
        wchi2_quantile([1.0, -1.0])
    with pytest.raises(ValueError):
        wchi2_quantile([1.0], alpha=1.0)


weights = st.lists(st.floats(0.01, 10.0), min_size=1, max_size=6)


@given(weights, st.floats(0.1, 10.0))
def test_wchi2_homogeneous(w, c):
    q = wchi2_quantile(w, n_draws=20_000)
    assert wchi2_quantile(np.asarray(w) * c, n_draws=20_000) == pytest.approx(c * q, rel=1e-9)


@given(weights, st.integers(0, 5), st.floats(0.0, 5.0))
def test_wchi2_monotone(w, i, extra):
    w2 = list(w)
    w2[i % len(w)] += extra
    assert wchi2_quantile(w2, n_draws=20_000) >= wchi2_quantile(w, n_draws=20_000) - 1e-12


# -- sensitivities -------------------------------------------------------------

def test_dmu_closed_form_matches_fd():
    spec = get_builtin("ma1")
    data = simulate(eval_model(spec, (0.3, 0.4, 1.0)), 300, seed=9).values
    fit = fit_var(data, 2)
    th = (0.3, 0.4, 1.0)
    psi = fit.psi_vector()
    h = 1e-5
    up, dn = psi.copy(), psi.copy()
    up[0] += h
    dn[0] -= h
    fd = (coupled_path(spec, th, fit.with_psi(up)) - coupled_path(spec, th, fit.with_psi(dn))) / (2 * h)
    np.testing.assert_allclose(dmu_closed_form(spec, th, fit)[:, :, 0], fd, atol=1e-8)


def test_sensitivity_boundary():
    spec = get_builtin("ma1")
    fit = fit_var(np.random.default_rng(0).standard_normal((200, 1)), 2)
    with pytest.raises(BoundaryTooClose):
        numeric_sensitivities(spec, (0.0, 0.99 - 1e-9, 1.0), fit)


def test_standard_errors(ma1_est):
    spec, fit, cfg, th = ma1_est
    b = numeric_sensitivities(spec, th, fit, cfg, robust=True)
    c = se_correct(spec, th, fit, cfg, b)
    r = se_robust(spec, th, fit, cfg, b)
    assert np.all(c.se > 0) and np.all(r.se > 0)
    assert np.all(c.se < 0.1)
    np.testing.assert_array_less(0.8, r.se / c.se)
    np.testing.assert_array_less(r.se / c.se, 1.25)
    assert c.hac_bandwidth == auto_bandwidth(fit.n)
    assert set(c.as_dict()["se"]) == set(spec.param_names)


def test_spec_test_shapes(ma1_est):
    spec, fit, cfg, th = ma1_est
    res = spec_test(spec, th, fit, cfg, n_draws=20_000)
    assert res.stat >= 0 and 0 <= res.p_value <= 1
    assert res.crit_05 > res.crit_10 > 0
    assert np.all(res.weights >= 0) and res.weights.size == fit.d_psi
    assert spec_moments(fit).shape == (fit.n, fit.d_psi)
    with pytest.raises(ShapeError):
        spec_test(spec, th, fit, cfg, variable=1, n_draws=1000)


def test_per_variable_statistics_sum_to_full():
    spec = _bivariate()
    data = simulate(eval_model(spec, (0.6, 0.3)), 800, seed=2).values
    fit = fit_var(data, 2)
    for cfg in (LossConfig("identity", k=2), LossConfig(np.diag([2.0, 0.5]), k=2)):
        res = spec_test_all(spec, (0.6, 0.3), fit, cfg, n_draws=5000)
        assert len(res) == 3
        assert res[1].stat + res[2].stat == pytest.approx(res[0].stat, rel=1e-12)
        assert [r.variable for r in res] == [None, 0, 1]
