"""Particle version of the transport filter for models without a closed form.

A bootstrap particle filter propagates the model; each period an entropic
transport plan couples the model's predictive draws with draws from the
auxiliary predictive, and the coupled observation is the barycentric
projection of the plan at the auxiliary draw nearest to the data.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np
from scipy.special import logsumexp

from .exceptions import ConfigError, ParticleDegeneracy, ShapeError
from .linalg import as_sym, sqrt_psd
from .otf import CoupledOutput, kalman_filter, r_squared
from .ssm import ModelMatrices, solve_steady_kf

ABSORB = 50.0


@dataclass(frozen=True)
class CouplingPlan:
    """Entropic transport plan ``p`` between a row and a column marginal."""

    p: np.ndarray
    eps: float
    iters: int
    marginal_err: float
    converged: bool = True


def sinkhorn(cost, row_marginal, col_marginal, eps: float, max_iters: int = 500,
             tol: float = 1e-6) -> CouplingPlan:
    """Entropy-regularized transport by stabilized Sinkhorn scaling.

    Dual potentials are kept in the log domain and absorbed into the kernel
    whenever the scalings exceed ``exp(50)``, so small ``eps`` does not
    underflow. Stops when the largest marginal violation is below ``tol``.
    Non-convergence is reported through ``converged`` and a warning.
    """
    C = np.asarray(cost, dtype=float)
    a = np.asarray(row_marginal, dtype=float)
    b = np.asarray(col_marginal, dtype=float)
    if C.shape != (a.size, b.size):
        raise ShapeError(f"cost has shape {C.shape}, marginals ({a.size}, {b.size})")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix must be finite")
    if eps <= 0:
        raise ValueError("eps must be positive")
    for v in (a, b):
        if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9:
            raise ValueError("marginals must lie on the simplex")
    with np.errstate(divide="ignore"):
        la, lb = np.log(a), np.log(b)
    # warm start from the exact log-domain half steps
    f = eps * (la - logsumexp(-C / eps + lb[None, :], axis=1))
    f[a == 0] = -np.inf
    g = np.zeros(b.size)
    K = _kernel(C, f, g, eps)
    u, v = np.ones(a.size), np.ones(b.size)
    err, it = np.inf, 0
    for it in range(1, max_iters + 1):
        Ku = K.T @ u
        v = np.divide(b, Ku, out=np.zeros_like(b), where=Ku > 0)
        Kv = K @ v
        err = float(np.max(np.abs(u * Kv - a)))
        if err < tol:
            break
        u = np.divide(a, Kv, out=np.zeros_like(a), where=Kv > 0)
        if np.max(np.abs(np.log(u[u > 0]))) > ABSORB or np.max(np.abs(np.log(v[v > 0]))) > ABSORB:
            f = f + eps * np.log(np.where(u > 0, u, 1.0))
            g = g + eps * np.log(np.where(v > 0, v, 1.0))
            K = _kernel(C, f, g, eps)
            u, v = np.ones(a.size), np.ones(b.size)
    p = u[:, None] * K * v[None, :]
    ok = err < tol
    if not ok:
        warnings.warn(f"Sinkhorn stopped after {it} iterations with marginal error {err:.2e}",
                      RuntimeWarning, stacklevel=2)
    return CouplingPlan(p, float(eps), it, err, ok)


def _kernel(C, f, g, eps):
    with np.errstate(invalid="ignore"):
        z = (f[:, None] + g[None, :] - C) / eps
    z[~np.isfinite(z)] = -np.inf
    return np.exp(z)


def systematic_resample(weights, B: Optional[int] = None, seed=None) -> np.ndarray:
    """Systematic resampling: one uniform shifted over ``B`` even strata."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.isclose(w.sum(), 1.0, atol=1e-10):
        raise ValueError("weights must lie on the simplex")
    B = w.size if B is None else int(B)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pos = (np.arange(B) + rng.uniform()) / B
    cum = np.cumsum(w)
    cum[-1] = 1.0
    return np.minimum(np.searchsorted(cum, pos, side="right"), w.size - 1)


def ess(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w * w))


@dataclass
class ParticleCloud:
    """Weighted particles: ``states`` is ``B x d_z``, ``obs_draws`` is ``B x d_y``."""

    states: np.ndarray
    obs_draws: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.states.shape[0] < 2 or self.weights.shape != (self.states.shape[0],):
            raise ShapeError("a cloud needs B >= 2 particles with one weight each")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must lie on the simplex")

    @property
    def B(self) -> int:
        return self.states.shape[0]

    def mean(self) -> np.ndarray:
        return self.weights @ self.states


class ParticleModel(Protocol):
    d_y: int
    d_z: int

    def initial(self, B: int, rng: np.random.Generator) -> np.ndarray: ...

    def propagate(self, z: np.ndarray, rng: np.random.Generator): ...

    def obs_logpdf(self, y: np.ndarray, z: np.ndarray) -> np.ndarray: ...


class LinearGaussianSampler:
    """Particle interface to a linear Gaussian state-space model.

    The observation density ``p(y | z) = N(mu + A z, B B')`` needs a
    nonsingular ``B B'`` and measurement shocks independent of the state
    shocks (``D B' = 0``).
    """

    def __init__(self, m: ModelMatrices, z0_mean=None, z0_var=None):
        if np.linalg.norm(m.D @ m.B.T) > 0:
            raise ConfigError("particle filter requires D B' = 0")
        R = as_sym(m.B @ m.B.T)
        w = np.linalg.eigvalsh(R)
        if w[0] <= 1e-12 * max(w[-1], 1e-300):
            raise ConfigError("particle filter requires a nonsingular measurement variance B B'")
        self.m = m
        self.d_y, self.d_z = m.d_y, m.d_z
        self._Ri = np.linalg.inv(R)
        self._logdet = float(np.linalg.slogdet(R)[1])
        self.z0_mean = np.zeros(m.d_z) if z0_mean is None else np.asarray(z0_mean, float)
        self.z0_root = np.zeros((m.d_z, m.d_z)) if z0_var is None else sqrt_psd(z0_var)

    def initial(self, B, rng):
        return self.z0_mean + rng.standard_normal((B, self.d_z)) @ self.z0_root

    def propagate(self, z, rng):
        m = self.m
        v = rng.standard_normal((z.shape[0], m.d_v))
        z_new = z @ m.C.T + v @ m.D.T
        return m.mu + z_new @ m.A.T + v @ m.B.T, z_new

    def obs_logpdf(self, y, z):
        r = y - self.m.mu - z @ self.m.A.T
        q = np.einsum("bi,ij,bj->b", r, self._Ri, r)
        return -0.5 * (q + self._logdet + self.d_y * np.log(2 * np.pi))


class GaussianPredictive:
    """Auxiliary predictive ``N(mean_t, Sigma)``; by default the VAR(k) one-step predictive."""

    def __init__(self, means, sigma, data):
        self.means = np.asarray(means, dtype=float)
        self.root = sqrt_psd(sigma)
        self.data = np.asarray(data, dtype=float)

    @classmethod
    def from_fit(cls, fit):
        return cls(fit.predictive_mean(), fit.sigma_tilde, fit.data)

    @classmethod
    def from_model(cls, m: ModelMatrices, data, nu0=None):
        """The model's own steady Kalman predictive on ``data``."""
        kf = solve_steady_kf(m)
        out = kalman_filter(m, data, nu0, steady=kf)
        return cls(out.mu_predicted, kf.Sigma, data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def draw(self, t: int, B: int, rng: np.random.Generator) -> np.ndarray:
        return self.means[t] + rng.standard_normal((B, self.root.shape[0])) @ self.root


def run_particle_otf(model, aux, B: int = 2000, eps: Optional[float] = None, eps_scale: float = 0.1,
                     ess_min: Optional[float] = None, seed=0, max_iters: int = 500,
                     tol: float = 1e-6, names=(), state_names=()) -> CoupledOutput:
    """Particle transport filter.

    ``eps`` defaults to ``eps_scale`` times the median cost of each period
    and ``ess_min`` to ``B / 2``. Each period draws from its own seeded
    substream. ``extras`` holds the ESS trace and Sinkhorn diagnostics.
    """
    if B < 2:
        raise ConfigError("need B >= 2 particles")
    ess_min = B / 2.0 if ess_min is None else float(ess_min)
    n = aux.n
    root = np.random.SeedSequence(seed)
    rng0 = np.random.default_rng(root.spawn(1)[0])
    subs = root.spawn(n)
    z = model.initial(B, rng0)
    logw = np.full(B, -np.log(B))
    w = np.full(B, 1.0 / B)
    y_out = np.empty((n, model.d_y))
    nu_f = np.empty((n, model.d_z))
    nu_p = np.empty((n, model.d_z))
    mu_p = np.empty((n, model.d_y))
    ess_trace, errs, flags, eps_used = np.empty(n), np.empty(n), np.zeros(n, bool), np.empty(n)
    for t in range(n):
        rng = np.random.default_rng(subs[t])
        if ess(w) < ess_min:
            z = z[systematic_resample(w, B, rng)]
            w = np.full(B, 1.0 / B)
        ess_trace[t] = ess(w)
        y_draw, z = model.propagate(z, rng)
        nu_p[t] = w @ z
        mu_p[t] = w @ y_draw
        y_aux = aux.draw(t, B, rng)
        # centering both clouds leaves the plan unchanged and makes eps translation invariant
        yc, ac = y_draw - mu_p[t], y_aux - y_aux.mean(axis=0)
        cost = np.sum((yc[:, None, :] - ac[None, :, :]) ** 2, axis=2)
        e_t = eps_scale * float(np.median(cost)) if eps is None else float(eps)
        if e_t <= 0:
            e_t = 1e-12
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            plan = sinkhorn(cost, w, np.full(B, 1.0 / B), e_t, max_iters, tol)
        errs[t], flags[t], eps_used[t] = plan.marginal_err, not plan.converged, e_t
        j_star = int(np.argmin(np.sum((y_aux - aux.data[t]) ** 2, axis=1)))
        col = plan.p[:, j_star]
        tot = col.sum()
        pw = col / tot if tot > 0 else w
        y_out[t] = pw @ y_draw
        with np.errstate(divide="ignore"):
            logw = np.log(w) + model.obs_logpdf(y_out[t][None, :], z)
        if not np.any(np.isfinite(logw)):
            raise ParticleDegeneracy(t + 1)
        logw -= logsumexp(logw)
        w = np.exp(logw)
        w /= w.sum()
        nu_f[t] = w @ z
    if flags.any():
        warnings.warn(f"Sinkhorn did not reach tol={tol:g} in {int(flags.sum())} of {n} periods "
                      f"(max marginal error {errs.max():.2e}); see extras['sinkhorn_flag']",
                      RuntimeWarning, stacklevel=2)
    data = aux.data
    extras = {"ess": ess_trace, "sinkhorn_err": errs, "sinkhorn_flag": flags, "eps": eps_used}
    return CoupledOutput(y_out, nu_f, nu_p, mu_p, r_squared(y_out, data), data, tuple(names),
                         tuple(state_names), extras)
