"""The transport loss ``Q_n``, its population counterpart and the estimator."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .exceptions import ConfigError, NumericalError, OTFError, ShapeError
from .linalg import as_sym, sqrt_psd
from .modeldsl import log_prior
from .optim import multistart, start_points
from .otf import CoupledOutput, coupled_series, r_squared, run_otf, transport_map
from .ssm import ModelSpec, eval_model, model_vma, solve_steady_kf
from .varsieve import DataVMA, VarFit

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossConfig:
    """Loss settings.

    ``weighting`` is ``"inverse_variance"`` (default), ``"identity"`` or an
    explicit symmetric positive definite matrix.
    """

    weighting: Union[str, np.ndarray] = "inverse_variance"
    prior_penalty: bool = False
    k: int = 4

    def weight_matrix(self, data) -> np.ndarray:
        data = np.asarray(data, dtype=float)
        d = data.shape[1]
        w = self.weighting
        if isinstance(w, str):
            if w == "inverse_variance":
                return np.diag(1.0 / data.var(axis=0))
            if w == "identity":
                return np.eye(d)
            raise ConfigError(f"unknown weighting {w!r}")
        W = as_sym(w)
        if W.shape != (d, d):
            raise ShapeError(f"weighting matrix has shape {W.shape}, expected {(d, d)}")
        if np.linalg.eigvalsh(W)[0] <= 0:
            raise ConfigError("weighting matrix must be positive definite")
        return W


def coupled_path(spec: ModelSpec, theta, fit, nu0=None) -> np.ndarray:
    """Coupled series ``y_t(theta; psi)`` as an ``(n, d_y)`` array."""
    m = eval_model(spec, theta)
    kf = solve_steady_kf(m)
    P = transport_map(kf.Sigma, fit.sigma_tilde, check=False).P
    if nu0 is None:
        nu0 = spec.initial_state(m, fit.data)
    return coupled_series(m, kf.K, P, fit.residuals, nu0)[0]


def weighted_msd(y, data, W) -> float:
    u = np.asarray(y) - np.asarray(data)
    return float(np.einsum("ti,ij,tj->", u, W, u) / u.shape[0])


def loss_qn(spec: ModelSpec, theta, fit: VarFit, cfg: LossConfig = LossConfig(), W=None) -> float:
    """``Q_n = (1/n) sum ||y_t - data_t||^2_W``; ``+inf`` at infeasible ``theta``."""
    if W is None:
        W = cfg.weight_matrix(fit.data)
    try:
        y = coupled_path(spec, theta, fit)
    except (NumericalError, OTFError) as exc:
        log.debug("infeasible theta %s: %s", np.asarray(theta).tolist(), exc)
        return math.inf
    q = weighted_msd(y, fit.data, W)
    return q if np.isfinite(q) else math.inf


def log_prior_sum(spec: ModelSpec, theta) -> float:
    return float(sum(log_prior(ps, float(x)) for ps, x in zip(spec.params, np.atleast_1d(theta))))


def penalized_loss(spec: ModelSpec, theta, fit: VarFit, cfg: LossConfig = LossConfig(), W=None) -> float:
    """``Q_n - (1/n) log pi(theta)``; ``+inf`` out of bounds."""
    lp = log_prior_sum(spec, theta)
    if not np.isfinite(lp):
        return math.inf
    q = loss_qn(spec, theta, fit, cfg, W)
    return q - lp / fit.n if np.isfinite(q) else math.inf


def population_loss(spec: ModelSpec, theta, dgp_vma: DataVMA, sigma_data=None, W=None,
                    horizon: Optional[int] = None) -> float:
    """Loss between the model's and the data's VMA representations.

    ``||mu_t - mu||^2_W + sum_{j>=0} tr(St^{1/2} (Lt_j - L_j P)' W (Lt_j - L_j P) St^{1/2})``
    with ``Lambda_0 = I``, truncated at ``horizon`` (default: the longer of
    the two supplied VMA lengths).
    """
    St = as_sym(dgp_vma.sigma_tilde if sigma_data is None else sigma_data)
    d = St.shape[0]
    W = np.eye(d) if W is None else as_sym(W)
    m = eval_model(spec, theta)
    kf = solve_steady_kf(m)
    P = transport_map(kf.Sigma, St).P
    lt = np.asarray(dgp_vma.lambda_tilde)
    J = max(lt.shape[0], 1) if horizon is None else int(horizon)
    lm = model_vma(kf, J)
    lt_full = np.zeros((J + 1, d, d))
    lt_full[0] = np.eye(d)
    lt_full[1:min(J, lt.shape[0]) + 1] = lt[:J]
    lm_full = np.concatenate([np.eye(d)[None], lm[:J]], axis=0)
    r = sqrt_psd(St)
    mu_gap = np.asarray(dgp_vma.mu_tilde, float) - m.mu
    diff = (lt_full - lm_full @ P) @ r
    return float(mu_gap @ W @ mu_gap) + float(np.einsum("jab,ac,jcb->", diff, W, diff))


@dataclass
class EstimationResult:
    """Outcome of :func:`optimize`."""

    theta_hat: np.ndarray
    qn: float
    r2: np.ndarray
    n_evals: int
    converged: bool
    names: tuple = ()
    objective: float = float("nan")
    penalized: bool = False
    trace: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "theta_hat": dict(zip(self.names, map(float, self.theta_hat))),
            "qn": float(self.qn),
            "r2": [float(x) for x in self.r2],
            "n_evals": int(self.n_evals),
            "converged": bool(self.converged),
            "objective": float(self.objective),
            "prior_penalty": bool(self.penalized),
        }

    def to_json(self, path=None) -> str:
        s = json.dumps(self.as_dict(), indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(s + "\n")
        return s


@dataclass(frozen=True)
class OptimizerOptions:
    n_starts: int = 8
    max_evals: int = 4000
    xatol: float = 1e-8
    seed: int = 0
    perturbation: float = 0.25
    keep_trace: bool = False
    start: Optional[Sequence[float]] = None


def default_start(spec: ModelSpec) -> np.ndarray:
    return np.array([ps.start() for ps in spec.params])


def optimize(spec: ModelSpec, fit: VarFit, cfg: LossConfig = LossConfig(),
             opts: OptimizerOptions = OptimizerOptions()) -> EstimationResult:
    """Minimize the (optionally penalized) loss by multistart Nelder-Mead."""
    if spec.d_theta < 1:
        raise ConfigError("model has no free parameters")
    W = cfg.weight_matrix(fit.data)
    obj = penalized_loss if cfg.prior_penalty else loss_qn

    def f(theta):
        return obj(spec, theta, fit, cfg, W)

    base = default_start(spec) if opts.start is None else np.asarray(opts.start, dtype=float)
    if not spec.in_bounds(base):
        raise ConfigError(f"starting value {base.tolist()} violates parameter bounds")
    starts = start_points(base, spec.lower, spec.upper, opts.n_starts, opts.perturbation, opts.seed)
    best, runs = multistart(f, starts, spec.lower, spec.upper, xatol=opts.xatol,
                            max_evals=opts.max_evals, keep_trace=opts.keep_trace)
    theta = best.x
    y = coupled_path(spec, theta, fit)
    qn = weighted_msd(y, fit.data, W)
    return EstimationResult(
        theta_hat=theta,
        qn=qn,
        r2=r_squared(y, fit.data),
        n_evals=sum(r.n_evals for r in runs),
        converged=bool(best.converged),
        names=spec.param_names,
        objective=best.fun,
        penalized=cfg.prior_penalty,
        trace=best.trace,
    )


def filter_at(spec: ModelSpec, theta, fit, nu0=None, require_stationary: bool = True,
              names=(), state_names=()) -> CoupledOutput:
    """Run the transport filter at a fixed ``theta``."""
    m = eval_model(spec, theta, require_stationary=require_stationary)
    kf = solve_steady_kf(m)
    if nu0 is None:
        nu0 = spec.initial_state(m, fit.data)
    return run_otf(kf, m, fit, nu0, names=names, state_names=state_names)
