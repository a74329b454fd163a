"""scikit-learn style wrappers around the filter and the estimator."""

from __future__ import annotations

from typing import Optional, Union

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .estimator import LossConfig, OptimizerOptions, filter_at, optimize
from .exceptions import ConfigError, ShapeError
from .inference import (
    SEResult,
    SpecTestResult,
    numeric_sensitivities,
    se_correct,
    se_robust,
    spec_test,
)
from .otf import CoupledOutput
from .ssm import ModelSpec, get_builtin
from .varsieve import VarFit, fit_var, var_residuals


def resolve_model(model: Union[str, ModelSpec]) -> ModelSpec:
    if isinstance(model, ModelSpec):
        return model
    if isinstance(model, str):
        return get_builtin(model)
    raise ConfigError(f"model must be a builtin name or a ModelSpec, got {type(model).__name__}")


def _check_X(X, spec: ModelSpec, k: int) -> np.ndarray:
    X = check_array(X, dtype=np.float64, ensure_2d=False, ensure_min_samples=k + 2)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != spec.d_y:
        raise ShapeError(f"X has {X.shape[1]} columns, model {spec.name!r} has {spec.d_y} observables")
    return X


def _refit_residuals(fit: VarFit, X: np.ndarray) -> VarFit:
    """The fitted auxiliary VAR applied to new data ``X``."""
    if X is fit.data or (X.shape == fit.data.shape and np.array_equal(X, fit.data)):
        return fit
    resid = var_residuals(X, fit.presample, fit.mu_tilde, fit.psi)
    return VarFit(fit.k, fit.mu_tilde, fit.psi, resid, fit.sigma_tilde, X, fit.presample, fit.names)


class OTFilter(TransformerMixin, BaseEstimator):
    """Transport filter at fixed parameters.

    ``fit`` estimates the auxiliary VAR(k) on ``X``; ``transform`` returns
    the coupled series for ``X`` through that VAR. The last
    :class:`CoupledOutput` is kept in ``output_``.

    Parameters
    ----------
    model : builtin model name or ModelSpec
    theta : mapping or sequence of parameter values; model defaults if None
    lags : VAR order k
    """

    def __init__(self, model="ma1", theta=None, lags: int = 4):
        self.model = model
        self.theta = theta
        self.lags = lags

    def _theta(self, spec):
        if self.theta is None:
            if spec.defaults is None:
                raise ConfigError("theta is required for models without defaults")
            return np.asarray(spec.defaults, dtype=float)
        if isinstance(self.theta, dict):
            return spec.theta_from_dict(self.theta)
        return np.atleast_1d(np.asarray(self.theta, dtype=float))

    def fit(self, X, y=None):
        spec = resolve_model(self.model)
        X = _check_X(X, spec, self.lags)
        self.spec_ = spec
        self.theta_ = self._theta(spec)
        if not spec.in_bounds(self.theta_):
            raise ConfigError(f"theta {self.theta_.tolist()} violates parameter bounds")
        self.var_ = fit_var(X, self.lags)
        self.n_features_in_ = X.shape[1]
        return self

    def filter(self, X) -> CoupledOutput:
        check_is_fitted(self, "var_")
        X = _check_X(X, self.spec_, self.lags)
        fit = _refit_residuals(self.var_, X)
        self.output_ = filter_at(self.spec_, self.theta_, fit, require_stationary=self.spec_.estimable,
                                 state_names=getattr(self.spec_, "state_names", ()))
        return self.output_

    def transform(self, X):
        return self.filter(X).y

    def score(self, X, y=None) -> float:
        """Mean R^2 of the coupled series."""
        return float(np.mean(self.filter(X).r2))


class OTEstimator(TransformerMixin, BaseEstimator):
    """Minimum transport-loss estimator.

    After ``fit``: ``theta_``, ``qn_``, ``r2_``, ``result_`` and the
    auxiliary VAR ``var_``. ``transform`` gives the coupled series at
    ``theta_``.

    Parameters
    ----------
    model : builtin model name or ModelSpec
    lags : VAR order k
    weighting : "inverse_variance", "identity" or a matrix
    prior_penalty : add ``-(1/n) log prior`` to the loss
    n_starts, max_evals, xatol, random_state : optimizer settings
    start : optional starting values (mapping or sequence)
    """

    def __init__(self, model="ma1", lags: int = 4, weighting="inverse_variance", prior_penalty: bool = False,
                 n_starts: int = 8, max_evals: int = 4000, xatol: float = 1e-8, random_state: int = 0,
                 start=None):
        self.model = model
        self.lags = lags
        self.weighting = weighting
        self.prior_penalty = prior_penalty
        self.n_starts = n_starts
        self.max_evals = max_evals
        self.xatol = xatol
        self.random_state = random_state
        self.start = start

    def _loss(self) -> LossConfig:
        return LossConfig(self.weighting, self.prior_penalty, self.lags)

    def fit(self, X, y=None):
        spec = resolve_model(self.model)
        if not spec.estimable:
            raise ConfigError(f"model {spec.name!r} is not estimable")
        X = _check_X(X, spec, self.lags)
        start = self.start
        if isinstance(start, dict):
            start = spec.theta_from_dict(start)
        opts = OptimizerOptions(self.n_starts, self.max_evals, self.xatol, int(self.random_state), 0.25,
                                False, None if start is None else tuple(np.atleast_1d(start)))
        self.spec_ = spec
        self.var_ = fit_var(X, self.lags)
        self.result_ = optimize(spec, self.var_, self._loss(), opts)
        self.theta_ = self.result_.theta_hat
        self.qn_ = self.result_.qn
        self.r2_ = self.result_.r2
        self.n_features_in_ = X.shape[1]
        self._bundle = None
        return self

    def transform(self, X):
        check_is_fitted(self, "theta_")
        X = _check_X(X, self.spec_, self.lags)
        fit = _refit_residuals(self.var_, X)
        return filter_at(self.spec_, self.theta_, fit).y

    def _sensitivities(self, robust: bool):
        check_is_fitted(self, "theta_")
        b = self._bundle
        if b is None or (robust and b.d_theta_G is None):
            b = numeric_sensitivities(self.spec_, self.theta_, self.var_, self._loss(), robust=robust)
            self._bundle = b
        return b

    def standard_errors(self, robust: bool = False) -> SEResult:
        b = self._sensitivities(robust)
        fn = se_robust if robust else se_correct
        return fn(self.spec_, self.theta_, self.var_, self._loss(), b)

    def spec_test(self, variable: Optional[int] = None, **kw) -> SpecTestResult:
        b = self._sensitivities(False)
        return spec_test(self.spec_, self.theta_, self.var_, self._loss(), variable=variable, bundle=b, **kw)
