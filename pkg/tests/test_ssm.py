import numpy as np
import pytest

from otfilter.exceptions import ConfigError, NonStationary, OutOfBounds
from otfilter.modeldsl import ParamSpec
from otfilter.ssm import (
    ModelMatrices,
    TemplateModel,
    atsm_loadings,
    eval_model,
    get_builtin,
    model_vma,
    riccati_residuals,
    simulate,
    simulate_states,
    solve_steady_kf,
)


def iterate_kf_covariance(m, Vbar, n_iter=5000):
    """Time-varying Kalman covariance recursion with DB' = 0."""
    A, R, C, Q = m.A, m.B @ m.B.T, m.C, m.D @ m.D.T
    for _ in range(n_iter):
        S = A @ Vbar @ A.T + R
        K = Vbar @ A.T @ np.linalg.pinv(S)
        V = Vbar - K @ S @ K.T
        Vbar = C @ V @ C.T + Q
    S = A @ Vbar @ A.T + R
    K = Vbar @ A.T @ np.linalg.pinv(S)
    return Vbar, Vbar - K @ S @ K.T, K, S


def test_white_noise_observable():
    m = ModelMatrices([0.0, 0.0], np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)), np.eye(2))
    kf = solve_steady_kf(m)
    np.testing.assert_allclose(kf.Vbar, np.eye(2))
    np.testing.assert_allclose(kf.Sigma, np.eye(2))
    np.testing.assert_allclose(kf.K, np.eye(2))
    np.testing.assert_allclose(kf.V, np.zeros((2, 2)), atol=1e-14)
    assert np.all(model_vma(kf, 5) == 0)


def test_local_level_matches_recursion():
    spec = get_builtin("local_level")
    m = eval_model(spec, (1.0, 1.0), require_stationary=False)
    kf = solve_steady_kf(m)
    Vbar, V, K, S = iterate_kf_covariance(m, np.array([[10.0]]))
    np.testing.assert_allclose(kf.Vbar, Vbar, atol=1e-8)
    np.testing.assert_allclose(kf.V, V, atol=1e-8)
    np.testing.assert_allclose(kf.K, K, atol=1e-8)
    np.testing.assert_allclose(kf.Sigma, S, atol=1e-8)
    # scalar closed form: Vbar^2 - q Vbar - q r = 0
    np.testing.assert_allclose(kf.Vbar[0, 0], (1 + np.sqrt(5)) / 2, atol=1e-10)


def test_singular_model_residuals():
    m = ModelMatrices([0.0, 0.0], [[1.0], [0.5]], np.zeros((2, 1)), [[0.5]], [[1.0]])
    kf = solve_steady_kf(m)
    assert np.linalg.matrix_rank(kf.Sigma, tol=1e-10) == 1
    assert max(riccati_residuals(m, kf).values()) < 1e-9


def test_correlated_shocks_gain():
    # ARMA(1,1) in state form: y_t = z_t, measurement loads the same shock as the state
    m = ModelMatrices([0.0], [[1.0]], [[1.0]], [[0.6]], [[0.3]])
    kf = solve_steady_kf(m)
    assert max(riccati_residuals(m, kf).values()) < 1e-9


def test_ma1_builtin_structure():
    spec = get_builtin("ma1")
    m = eval_model(spec, (0.0, 0.5, 1.0))
    y, z, v = simulate_states(m, 10, seed=1)
    np.testing.assert_allclose(y[1:, 0], v[1:, 0] + 0.5 * v[:-1, 0], atol=1e-12)
    # invertible MA(1): innovation variance sigma^2, Lambda_1 = lam, Lambda_j = 0 beyond
    for theta in ((0.0, 0.5, 1.0), (1.0, -0.3, 2.0)):
        kf = solve_steady_kf(eval_model(spec, theta))
        np.testing.assert_allclose(kf.Sigma, [[theta[2] ** 2]], atol=1e-10)
        lam = model_vma(kf, 5)[:, 0, 0]
        np.testing.assert_allclose(lam, [theta[1], 0, 0, 0, 0], atol=1e-10)


def test_trend_cycle_builtin():
    spec = get_builtin("watson_trend_cycle")
    m = eval_model(spec, spec.defaults, require_stationary=False)
    assert m.C[0, 0] == 1.0
    np.testing.assert_allclose(m.C[1:3, 1:3], [[1.53, -0.61], [1.0, 0.0]])
    assert not m.stationary
    with pytest.raises(NonStationary):
        eval_model(spec, spec.defaults)


def test_bounds_and_names():
    with pytest.raises(OutOfBounds):
        eval_model(get_builtin("ma1"), (0.0, 1.5, 1.0))
    with pytest.raises(ConfigError):
        get_builtin("garch(1,1)")
    assert get_builtin("arma(2,1)").param_names == ("mu", "phi1", "phi2", "theta1", "sigma")
    assert get_builtin("arma(1,0)").param_names == ("mu", "rho", "sigma")
    assert get_builtin("atsm(3,[1,12,60])").d_y == 3


def test_template_errors():
    p = [ParamSpec("a")]
    with pytest.raises(ConfigError):
        TemplateModel(p, ["a"], [["b"]], [["1"]], [["0"]], [["1"]])
    with pytest.raises(ConfigError):
        TemplateModel(p, ["a"], [["1", "2"]], [["1"]], [["0"]], [["1"]])


def test_simulate():
    m = eval_model(get_builtin("ma1"), (0.0, 0.5, 1.0))
    y = simulate(m, 50_000, seed=3).values[:, 0]
    r1 = np.corrcoef(y[1:], y[:-1])[0, 1]
    assert abs(r1 - 0.4) < 0.01
    np.testing.assert_array_equal(simulate(m, 100, seed=9).values, simulate(m, 100, seed=9).values)
    flat = ModelMatrices([2.0], [[1.0]], [[0.0]], [[0.5]], [[0.0]])
    np.testing.assert_array_equal(simulate(flat, 20, seed=1).values, 2.0)


def test_atsm_loadings():
    a, b = atsm_loadings(0.4, [0.02], [[0.9]], [0.0], 2)
    assert b[0, 0] == pytest.approx(0.02) and a[0] == pytest.approx(0.4)
    assert b[1, 0] == pytest.approx(0.019)
    assert a[1] == pytest.approx(0.3999)
    _, b = atsm_loadings(0.0, [0.3, 0.1], np.zeros((2, 2)), [0.0, 0.0], 6)
    np.testing.assert_allclose(b, np.outer(1 / np.arange(1, 7), [0.3, 0.1]))


def test_riccati_random_models(rng):
    for _ in range(30):
        d_z, d_y = 3, 2
        C = rng.standard_normal((d_z, d_z))
        C *= 0.9 / np.max(np.abs(np.linalg.eigvals(C)))
        m = ModelMatrices(np.zeros(d_y), rng.standard_normal((d_y, d_z)), rng.standard_normal((d_y, 2)), C,
                          rng.standard_normal((d_z, 2)))
        assert max(riccati_residuals(m, solve_steady_kf(m)).values()) < 1e-9
