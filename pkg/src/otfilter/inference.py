"""Sensitivities of the coupled series, standard errors and the specification test.

Derivatives are central finite differences. Perturbing the auxiliary
parameters ``psi = (mu', vech(Sigma)', vec(Psi_1)', ..., vec(Psi_k)')'``
re-runs the whole pipeline: new residuals, new ``Sigma_tilde``, new transport
map and new coupling.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .estimator import LossConfig, coupled_path, weighted_msd
from .exceptions import (
    BoundaryTooClose,
    CollinearRegressors,
    DegenerateDistribution,
    InsufficientData,
    LocalIdentificationFailure,
    NotPSD,
    ShapeError,
)
from .linalg import as_sym, sqrt_psd
from .otf import transport_map
from .ssm import ModelSpec, eval_model, solve_steady_kf
from .varsieve import VarFit, lag_matrix, unvech

FD_STEP = 1e-5
FD_STEP2 = 1e-4
N_DRAWS = 200_000
MC_SEED = 20240611


def fd_step(x: float, scale: float = FD_STEP) -> float:
    return scale * max(1.0, abs(float(x)))


# -- layout helpers ----------------------------------------------------------

def psi_blocks(d: int, k: int) -> dict:
    """Index slices of the ``mu``, ``vech(Sigma)`` and ``vec(Psi)`` blocks."""
    nv = d * (d + 1) // 2
    return {"mu": slice(0, d), "sigma": slice(d, d + nv), "psi": slice(d + nv, d + nv + k * d * d)}


def _vech_pairs(d: int):
    return [(i, j) for j in range(d) for i in range(j, d)]


def duplication_matrix(d: int) -> np.ndarray:
    """``D_d`` with ``vec(S) = D_d vech(S)`` for symmetric ``S``."""
    pairs = _vech_pairs(d)
    Dm = np.zeros((d * d, len(pairs)))
    for c, (i, j) in enumerate(pairs):
        Dm[i + j * d, c] = 1.0
        Dm[j + i * d, c] = 1.0
    return Dm


# -- sensitivities -----------------------------------------------------------

@dataclass(frozen=True)
class SensitivityBundle:
    """Finite-difference derivatives of ``y_t(theta; psi)`` at the estimates.

    ``d_theta_y`` has shape ``(n, d_y, d_theta)`` and ``d_psi_y`` shape
    ``(n, d_y, d_psi)``. On the robust path ``d_theta_G`` and ``d_psi_G``
    hold the contractions ``(1/n) sum_t [u_t' W (x) I] d G_t`` of the second
    derivatives of ``G_t = vec[d_theta y_t']`` against the residuals
    ``u_t = y_t - data_t``; they are ``None`` otherwise.
    """

    y: np.ndarray
    u: np.ndarray
    W: np.ndarray
    d_theta_y: np.ndarray
    d_psi_y: np.ndarray
    d_theta_G: Optional[np.ndarray] = None
    d_psi_G: Optional[np.ndarray] = None
    h_theta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    h_psi: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d_theta(self) -> int:
        return self.d_theta_y.shape[2]

    @property
    def d_psi(self) -> int:
        return self.d_psi_y.shape[2]


def _theta_step(spec: ModelSpec, theta: np.ndarray, i: int, scale: float) -> float:
    """Step for coordinate ``i``, shrunk once by 10 near a bound."""
    lo, hi = spec.lower[i], spec.upper[i]
    h = fd_step(theta[i], scale)
    for cand in (h, h / 10.0):
        if lo < theta[i] - cand and theta[i] + cand < hi:
            return cand
    raise BoundaryTooClose(f"{spec.param_names[i]}={theta[i]:.6g} is within {h / 10:.2g} of a bound")


def _pd(sigma: np.ndarray) -> bool:
    return bool(np.linalg.eigvalsh(sigma)[0] > 0)


def _psi_step(fit: VarFit, psi: np.ndarray, l: int, scale: float) -> float:
    """Step for auxiliary coordinate ``l``; ``Sigma_tilde`` must stay positive definite."""
    h = fd_step(psi[l], scale)
    sl = psi_blocks(fit.d, fit.k)["sigma"]
    if not (sl.start <= l < sl.stop):
        return h
    for cand in (h, h / 10.0):
        ok = True
        for sgn in (1.0, -1.0):
            v = psi[sl].copy()
            v[l - sl.start] += sgn * cand
            ok &= _pd(unvech(v, fit.d))
        if ok:
            return cand
    raise BoundaryTooClose(f"perturbing vech(Sigma_tilde)[{l - sl.start}] leaves the PD cone")


def _shift(x: np.ndarray, idx: Sequence[int], hs: Sequence[float]) -> np.ndarray:
    x = x.copy()
    for i, h in zip(idx, hs):
        x[i] += h
    return x


def numeric_sensitivities(spec: ModelSpec, theta_hat, fit: VarFit, cfg: LossConfig = LossConfig(),
                          robust: bool = False, W=None) -> SensitivityBundle:
    """Central-difference derivatives of the coupled series in ``theta`` and ``psi``.

    Steps are ``1e-5 * max(1, |x|)`` (``1e-4`` for second derivatives). A
    step that would cross a bound is shrunk once by a factor of 10;
    otherwise :class:`BoundaryTooClose` is raised.
    """
    theta = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    if W is None:
        W = cfg.weight_matrix(fit.data)
    psi = fit.psi_vector()
    d_th, d_ps = theta.size, psi.size

    def path(th, ps=None):
        f = fit if ps is None else fit.with_psi(ps)
        return coupled_path(spec, th, f)

    y = path(theta)
    n, d_y = y.shape
    h_th = np.array([_theta_step(spec, theta, i, FD_STEP) for i in range(d_th)])
    h_ps = np.array([_psi_step(fit, psi, l, FD_STEP) for l in range(d_ps)])
    dty = np.empty((n, d_y, d_th))
    for i in range(d_th):
        dty[:, :, i] = (path(_shift(theta, [i], [h_th[i]])) - path(_shift(theta, [i], [-h_th[i]]))) / (2 * h_th[i])
    dpy = np.empty((n, d_y, d_ps))
    for l in range(d_ps):
        dpy[:, :, l] = (path(theta, _shift(psi, [l], [h_ps[l]])) - path(theta, _shift(psi, [l], [-h_ps[l]]))) / (2 * h_ps[l])
    u = y - fit.data
    dG_th = dG_ps = None
    if robust:
        uW = u @ W

        def g(th, ps=None):
            return float(np.sum(uW * path(th, ps)) / n)

        k_th = np.array([_theta_step(spec, theta, i, FD_STEP2) for i in range(d_th)])
        k_ps = np.array([_psi_step(fit, psi, l, FD_STEP2) for l in range(d_ps)])
        g0 = g(theta)
        dG_th = np.empty((d_th, d_th))
        for i in range(d_th):
            hi = k_th[i]
            dG_th[i, i] = (g(_shift(theta, [i], [hi])) - 2 * g0 + g(_shift(theta, [i], [-hi]))) / hi ** 2
            for j in range(i):
                hj = k_th[j]
                val = sum(si * sj * g(_shift(theta, [i, j], [si * hi, sj * hj]))
                          for si in (1, -1) for sj in (1, -1)) / (4 * hi * hj)
                dG_th[i, j] = dG_th[j, i] = val
        dG_ps = np.empty((d_th, d_ps))
        for l in range(d_ps):
            hl = k_ps[l]
            fits = {s: fit.with_psi(_shift(psi, [l], [s * hl])) for s in (1, -1)}
            for i in range(d_th):
                hi = k_th[i]
                acc = 0.0
                for si in (1, -1):
                    th = _shift(theta, [i], [si * hi])
                    for sl in (1, -1):
                        acc += si * sl * float(np.sum(uW * coupled_path(spec, th, fits[sl])) / n)
                dG_ps[i, l] = acc / (4 * hi * hl)
    return SensitivityBundle(y, u, np.asarray(W, float), dty, dpy, dG_th, dG_ps, h_th, h_ps)


def dmu_closed_form(spec: ModelSpec, theta, fit: VarFit) -> np.ndarray:
    """Analytic ``d y_t / d mu_tilde`` for ``t = 1..n`` as an ``(n, d, d)`` array.

    ``-(sum_{l=0}^{t-1} Lambda_l) P (I - sum_j Psi_j)`` with ``Lambda_0 = I``
    and ``Lambda_l = A C^l K``, for a coupling started at ``nu_0 = 0``.
    """
    m = eval_model(spec, theta)
    kf = solve_steady_kf(m)
    P = transport_map(kf.Sigma, fit.sigma_tilde, check=False).P
    d = fit.d
    right = P @ (np.eye(d) - fit.psi.sum(axis=0))
    out = np.empty((fit.n, d, d))
    cum = np.eye(d)
    CK = m.C @ kf.K
    for t in range(fit.n):
        out[t] = -cum @ right
        cum = cum + m.A @ CK
        CK = m.C @ CK
    return out


# -- auxiliary VAR quasi-likelihood -------------------------------------------

def _var_pieces(fit: VarFit):
    d, k = fit.d, fit.k
    dev = fit.data - fit.mu_tilde
    X = lag_matrix(dev, k, fill=fit.presample - fit.mu_tilde)
    Si = np.linalg.inv(fit.sigma_tilde)
    return X, Si, np.eye(d) - fit.psi.sum(axis=0)


def var_scores(fit: VarFit) -> np.ndarray:
    """Per-period Gaussian VAR(k) scores ``d_psi L_t`` in the ``psi`` layout, ``(n, d_psi)``."""
    n, d, k = fit.n, fit.d, fit.k
    X, Si, lr = _var_pieces(fit)
    E = fit.residuals @ Si
    s_mu = E @ lr
    G = 0.5 * (np.einsum("ti,tj->tij", E, E) - Si)
    G = 2.0 * G - G * np.eye(d)
    s_sig = np.stack([G[:, i, j] for i, j in _vech_pairs(d)], axis=1)
    s_psi = [np.einsum("tc,tr->tcr", X[:, j * d:(j + 1) * d], E).reshape(n, d * d) for j in range(k)]
    return np.hstack([s_mu, s_sig] + s_psi)


def var_hessian(fit: VarFit) -> np.ndarray:
    """Hessian of the mean Gaussian VAR(k) log-likelihood at the OLS estimates.

    At the estimates the mean residual, the residual-regressor products and
    ``Sigma_tilde - mean(e e')`` all vanish, so the ``Sigma`` block decouples
    and the ``(mu, Psi)`` block is exactly ``-mean(J_t' Sigma^{-1} J_t)``.
    """
    n, d, k = fit.n, fit.d, fit.k
    X, Si, lr = _var_pieces(fit)
    bl = psi_blocks(d, k)
    H = np.zeros((fit.d_psi, fit.d_psi))
    Dm = duplication_matrix(d)
    H[bl["sigma"], bl["sigma"]] = -0.5 * Dm.T @ np.kron(Si, Si) @ Dm
    # J_t = d e_t / d(mu, vec Psi) = [-(I - sum Psi), -(x_{t-1}' (x) I), ...]
    idx = np.r_[np.arange(d), np.arange(bl["psi"].start, bl["psi"].stop)]
    J = np.empty((n, d, d + k * d * d))
    J[:, :, :d] = -lr
    J[:, :, d:] = _lag_jacobian(X, d, k)
    H[np.ix_(idx, idx)] = -np.einsum("tia,ij,tjb->ab", J, Si, J) / n
    return as_sym(H)


def _lag_jacobian(X: np.ndarray, d: int, k: int) -> np.ndarray:
    """``-(x_{t-j}' (x) I_d)`` stacked over ``j``, shape ``(n, d, k d^2)``."""
    n = X.shape[0]
    out = np.zeros((n, d, k * d * d))
    for j in range(k):
        for c in range(d):
            for r in range(d):
                out[:, r, j * d * d + c * d + r] = -X[:, j * d + c]
    return out


def var_influence(fit: VarFit) -> np.ndarray:
    """``-H^{-1} d_psi L_t``: the per-period influence of each observation on ``psi_hat``."""
    H = var_hessian(fit)
    return -np.linalg.solve(H, var_scores(fit).T).T


# -- long-run variance -------------------------------------------------------

def auto_bandwidth(n: int) -> int:
    return int(math.floor(1.3 * float(np.cbrt(n)) + 1e-9))


def hac_lrv(series, bandwidth="auto", demean: bool = True) -> np.ndarray:
    """Bartlett-kernel long-run variance ``G_0 + sum_l (1 - l/(L+1)) (G_l + G_l')``."""
    x = np.asarray(series, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    L = auto_bandwidth(n) if bandwidth == "auto" else int(bandwidth)
    if L < 0:
        raise ValueError("bandwidth must be >= 0")
    if n <= 2 * L or n < 2:
        raise InsufficientData(f"n={n} too small for bandwidth {L}")
    if demean:
        x = x - x.mean(axis=0)
    S = x.T @ x / n
    for lag in range(1, L + 1):
        G = x[lag:].T @ x[:-lag] / n
        S += (1.0 - lag / (L + 1.0)) * (G + G.T)
    return as_sym(S)


# -- standard errors ---------------------------------------------------------

@dataclass
class SEResult:
    mode: str
    vcov: np.ndarray
    se: np.ndarray
    hac_bandwidth: int
    names: tuple = ()
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "se": dict(zip(self.names, map(float, self.se))) if self.names else self.se.tolist(),
            "vcov": self.vcov.tolist(),
            "hac_bandwidth": int(self.hac_bandwidth),
            "diagnostics": {k: float(v) for k, v in self.diagnostics.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


def _check_M(M: np.ndarray) -> None:
    c = np.linalg.cond(M)
    if not np.isfinite(c) or c >= 1e10:
        raise LocalIdentificationFailure(f"sensitivity matrix M is singular (cond {c:.3e})")


def _finalize_vcov(V: np.ndarray, n: int) -> np.ndarray:
    V = as_sym(V) / n
    w, Q = np.linalg.eigh(V)
    if w.size and w[0] < -1e-10 * max(np.trace(V), 1e-300):
        raise NotPSD(f"vcov has eigenvalue {w[0]:.3e}")
    return as_sym((Q * np.clip(w, 0.0, None)) @ Q.T)


def _se(spec, theta_hat, fit, cfg, robust, bundle, bandwidth):
    if bundle is None or (robust and bundle.d_theta_G is None):
        bundle = numeric_sensitivities(spec, theta_hat, fit, cfg, robust=robust)
    n, W = bundle.n, bundle.W
    Jt, Jp = bundle.d_theta_y, bundle.d_psi_y
    M = np.einsum("tia,ij,tjb->ab", Jt, W, Jt) / n
    Dmat = np.einsum("tia,ij,tjb->ab", Jt, W, Jp) / n
    if robust:
        M = M + bundle.d_theta_G
        Dmat = Dmat + bundle.d_psi_G
    M = as_sym(M)
    _check_M(M)
    Z = var_influence(fit)
    inner = Z @ Dmat.T
    if robust:
        inner = inner + np.einsum("tia,ij,tj->ta", Jt, W, bundle.u)
    S_t = np.linalg.solve(M, inner.T).T
    L = auto_bandwidth(n) if bandwidth == "auto" else int(bandwidth)
    vcov = _finalize_vcov(hac_lrv(S_t, L), n)
    sv = np.linalg.svd(Dmat, compute_uv=False)
    diag = {"cond_M": float(np.linalg.cond(M)), "sigma_min_D": float(sv[-1]) if sv.size else float("nan")}
    return SEResult("robust" if robust else "correct", vcov, np.sqrt(np.diag(vcov)), L,
                    tuple(spec.param_names), diag)


def se_correct(spec: ModelSpec, theta_hat, fit: VarFit, cfg: LossConfig = LossConfig(),
               bundle: Optional[SensitivityBundle] = None, bandwidth="auto") -> SEResult:
    """Standard errors under correct specification.

    ``S_t = M^{-1} D Z_t`` with ``Z_t = -H^{-1} d_psi L_t`` and
    ``vcov = HAC(S_t) / n``.
    """
    return _se(spec, theta_hat, fit, cfg, False, bundle, bandwidth)


def se_robust(spec: ModelSpec, theta_hat, fit: VarFit, cfg: LossConfig = LossConfig(),
              bundle: Optional[SensitivityBundle] = None, bandwidth="auto") -> SEResult:
    """Misspecification-robust standard errors.

    ``M`` and ``D`` gain the ``[u' W (x) I] dG`` terms and
    ``S_t = M^{-1} (d_theta y_t' W u_t + D Z_t)``.
    """
    return _se(spec, theta_hat, fit, cfg, True, bundle, bandwidth)


# -- weighted chi-square -----------------------------------------------------

def wchi2_draws(weights, n_draws: int = N_DRAWS, seed=MC_SEED, chunk: int = 16) -> np.ndarray:
    """Draws of ``sum_j w_j chi2_1``; deterministic given ``seed`` and the weights."""
    w = np.asarray(weights, dtype=float).ravel()
    if w.size == 0 or np.any(~np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    if not np.any(w > 0):
        raise DegenerateDistribution("all weights are zero")
    rng = np.random.default_rng(seed)
    out = np.zeros(int(n_draws))
    for s in range(0, w.size, chunk):
        z = rng.standard_normal((int(n_draws), min(chunk, w.size - s)))
        out += (z * z) @ w[s:s + chunk]
    return out


def wchi2_quantile(weights, alpha: float = 0.05, n_draws: int = N_DRAWS, seed=MC_SEED) -> float:
    """Empirical ``1 - alpha`` quantile of ``sum_j w_j chi2_1``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return float(np.quantile(wchi2_draws(weights, n_draws, seed), 1.0 - alpha))


# -- specification test ------------------------------------------------------

@dataclass
class SpecTestResult:
    stat: float
    weights: np.ndarray
    crit_10: float
    crit_05: float
    p_value: float
    variable: Optional[int] = None
    diagnostics: dict = field(default_factory=dict)

    def reject(self, alpha: float = 0.05) -> bool:
        crit = {0.05: self.crit_05, 0.10: self.crit_10}.get(alpha)
        return self.stat > crit if crit is not None else self.p_value < alpha

    def as_dict(self) -> dict:
        return {
            "variable": self.variable,
            "stat": float(self.stat),
            "crit_10": float(self.crit_10),
            "crit_05": float(self.crit_05),
            "p_value": float(self.p_value),
            "diagnostics": {k: float(v) for k, v in self.diagnostics.items()},
        }


def spec_moments(fit: VarFit) -> np.ndarray:
    """``Z_t = (y_t - mu, vech(e_t e_t' - Sigma), vec[e_t Y_{t-1}' Gamma^{-1}])`` in the ``psi`` layout."""
    n, d, k = fit.n, fit.d, fit.k
    X, _, _ = _var_pieces(fit)
    gram = X.T @ X / n
    w = np.linalg.eigvalsh(gram)
    if w[0] <= 1e-12 * max(w[-1], 1e-300):
        raise CollinearRegressors("lag Gram matrix is singular")
    XG = np.linalg.solve(gram, X.T).T
    e = fit.residuals
    z_mu = fit.data - fit.mu_tilde
    outer = np.einsum("ti,tj->tij", e, e) - fit.sigma_tilde
    z_sig = np.stack([outer[:, i, j] for i, j in _vech_pairs(d)], axis=1)
    # vec of the d x kd matrix e_t (Y_{t-1}' Gamma^{-1}), column-major
    z_psi = np.einsum("tc,tr->tcr", XG, e).reshape(n, k * d * d)
    return np.hstack([z_mu, z_sig, z_psi])


def _selector(d: int, j: Optional[int]) -> np.ndarray:
    if j is None:
        return np.eye(d)
    if not 0 <= j < d:
        raise ShapeError(f"variable index {j} out of range for d={d}")
    s = np.zeros((d, d))
    s[j, j] = 1.0
    return s


def spec_test(spec: ModelSpec, theta_hat, fit: VarFit, cfg: LossConfig = LossConfig(),
              variable: Optional[int] = None, bundle: Optional[SensitivityBundle] = None,
              n_draws: int = N_DRAWS, seed=MC_SEED, bandwidth="auto") -> SpecTestResult:
    """Test of correct specification based on ``n Q_n``.

    The null law is ``sum_j w_j chi2_1`` with ``w`` the eigenvalues of
    ``S^{1/2} M_k S^{1/2}``. For ``variable=j`` the loss uses
    ``D_j W D_j`` while ``theta`` keeps responding through the full ``W``.
    """
    if bundle is None:
        bundle = numeric_sensitivities(spec, theta_hat, fit, cfg)
    n, W = bundle.n, bundle.W
    Dj = _selector(fit.d, variable)
    Wj = Dj @ W @ Dj
    stat = n * weighted_msd(bundle.y, fit.data, Wj)
    Jt, Jp = bundle.d_theta_y, bundle.d_psi_y
    M = as_sym(np.einsum("tia,ij,tjb->ab", Jt, W, Jt) / n)
    _check_M(M)
    E = -np.einsum("tia,ij,tjb->ab", Jt, W, Jp) / n
    Bt = Jp + np.einsum("tia,ab->tib", Jt, np.linalg.solve(M, E))
    Mk = as_sym(np.einsum("tia,ij,tjb->ab", Bt, Wj, Bt) / n)
    L = auto_bandwidth(n) if bandwidth == "auto" else int(bandwidth)
    S = hac_lrv(spec_moments(fit), L)
    R = sqrt_psd(S)
    w = np.linalg.eigvalsh(as_sym(R @ Mk @ R))
    top = max(float(w.max()), 0.0)
    if np.any(w < -1e-8 * top):
        warnings.warn(f"clipping negative eigenweights (min {w.min():.3e})", RuntimeWarning, stacklevel=2)
    w = np.clip(w, 0.0, None)
    draws = wchi2_draws(w, n_draws, seed)
    c10, c05 = np.quantile(draws, [0.90, 0.95])
    SM = S @ Mk
    diag = {"trace_SM": float(np.trace(SM)), "trace_SM2": float(np.trace(SM @ SM)), "bandwidth": L}
    return SpecTestResult(float(stat), w, float(c10), float(c05), float(np.mean(draws >= stat)),
                          variable, diag)


def spec_test_all(spec: ModelSpec, theta_hat, fit: VarFit, cfg: LossConfig = LossConfig(),
                  bundle: Optional[SensitivityBundle] = None, **kw) -> list:
    """Full-vector test followed by one test per variable (``d > 1`` only)."""
    if bundle is None:
        bundle = numeric_sensitivities(spec, theta_hat, fit, cfg)
    out = [spec_test(spec, theta_hat, fit, cfg, None, bundle, **kw)]
    if fit.d > 1:
        out += [spec_test(spec, theta_hat, fit, cfg, j, bundle, **kw) for j in range(fit.d)]
    return out


__all__ = [
    "SensitivityBundle", "numeric_sensitivities", "dmu_closed_form", "var_scores", "var_hessian",
    "var_influence", "duplication_matrix", "hac_lrv", "auto_bandwidth", "SEResult", "se_correct",
    "se_robust", "wchi2_draws", "wchi2_quantile", "SpecTestResult", "spec_moments", "spec_test",
    "spec_test_all", "psi_blocks", "fd_step",
]
