"""Closed-form transport map and the coupled-series recursion.

For a model with steady innovation variance ``Sigma`` and an auxiliary
model with residuals ``e_t`` and innovation variance ``Sigma_tilde``, the
coupled series is::

    nu_{t|t-1} = C nu_{t-1|t-1}
    mu_{t|t-1} = mu + A nu_{t|t-1}
    y_t        = mu_{t|t-1} + P e_t
    nu_{t|t}   = nu_{t|t-1} + K P e_t

with ``P = St^{-1/2} (St^{1/2} Sigma St^{1/2})^{1/2} St^{-1/2}``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .exceptions import (
    DataVarianceSingular,
    ModelVarianceInvalid,
    NotPSD,
    NumericalError,
    ShapeError,
)
from .linalg import RANK_TOL, as_sym, inv_sqrt_pd, sqrt_psd
from .ssm import ModelMatrices, SteadyKF, kalman_gain, riccati_start


@dataclass(frozen=True)
class TransportMap:
    """Linear map ``P`` taking data innovations to model innovations."""

    P: np.ndarray
    sigma_model: np.ndarray
    sigma_data: np.ndarray

    def residual(self) -> float:
        """Relative error of ``P Sigma_tilde P = Sigma``."""
        err = self.P @ self.sigma_data @ self.P - self.sigma_model
        return float(np.linalg.norm(err) / (1.0 + np.linalg.norm(self.sigma_model)))


def transport_map(sigma_model, sigma_data, check: bool = True) -> TransportMap:
    """Gaussian optimal transport map between innovation variances.

    Parameters
    ----------
    sigma_model : (d, d) array
        Model innovation variance; may be singular.
    sigma_data : (d, d) array
        Auxiliary innovation variance; must be full rank.
    check : bool
        Verify ``P Sigma_tilde P = Sigma`` to ``1e-8`` relative.
    """
    S = as_sym(sigma_model)
    St = as_sym(sigma_data)
    if S.shape != St.shape:
        raise ShapeError(f"variance shapes differ: {S.shape} vs {St.shape}")
    if S.shape[0] == 1:
        s, st = S[0, 0], St[0, 0]
        if not st > 0:
            raise DataVarianceSingular("data innovation variance is not positive")
        if s < -RANK_TOL * abs(s):
            raise NotPSD("model innovation variance is negative")
        return TransportMap(np.array([[np.sqrt(max(s, 0.0) / st)]]), S, St)
    try:
        r = sqrt_psd(St)
        ri = inv_sqrt_pd(St)
    except NotPSD:
        raise DataVarianceSingular("data innovation variance is singular") from None
    P = ri @ sqrt_psd(r @ S @ r) @ ri
    tm = TransportMap(0.5 * (P + P.T), S, St)
    if check and tm.residual() > 1e-8:
        raise NumericalError(f"transport map residual {tm.residual():.2e} exceeds 1e-8")
    return tm


def r_squared(y, data) -> np.ndarray:
    """``R2_j = 1 - sum (y - data)^2 / sum (data - mean(data))^2``."""
    y = np.asarray(y, dtype=float)
    data = np.asarray(data, dtype=float)
    ss_res = np.sum((y - data) ** 2, axis=0)
    ss_tot = np.sum((data - data.mean(axis=0)) ** 2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return 1.0 - ss_res / ss_tot


@dataclass
class CoupledOutput:
    """Coupled series with filtered and predicted states."""

    y: np.ndarray
    nu_filtered: np.ndarray
    nu_predicted: np.ndarray
    mu_predicted: np.ndarray
    r2: np.ndarray
    data: Optional[np.ndarray] = None
    names: tuple = ()
    state_names: tuple = ()
    extras: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def _names(self):
        d_y = self.y.shape[1]
        names = tuple(self.names) or tuple(f"y{i + 1}" for i in range(d_y))
        d_z = self.nu_filtered.shape[1]
        states = tuple(self.state_names) or tuple(f"z{i + 1}" for i in range(d_z))
        return names, states

    def to_csv(self, path) -> None:
        """Write ``period, data_*, coupled_*, state_*`` columns with 17 significant digits."""
        names, states = self._names()
        header = ["period"]
        if self.data is not None:
            header += [f"data_{nm}" for nm in names]
        header += [f"coupled_{nm}" for nm in names] + [f"state_{s}" for s in states]
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for t in range(self.n):
                row = [str(t + 1)]
                if self.data is not None:
                    row += [f"{x:.17g}" for x in self.data[t]]
                row += [f"{x:.17g}" for x in self.y[t]]
                row += [f"{x:.17g}" for x in self.nu_filtered[t]]
                w.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "CoupledOutput":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array([[float(x) for x in r] for r in rows[1:]])
        body = body.reshape(len(rows) - 1, len(header))
        cols = {h: i for i, h in enumerate(header)}
        coupled = [h[len("coupled_"):] for h in header if h.startswith("coupled_")]
        states = [h[len("state_"):] for h in header if h.startswith("state_")]
        y = body[:, [cols[f"coupled_{nm}"] for nm in coupled]]
        nu = body[:, [cols[f"state_{s}"] for s in states]]
        data = None
        if f"data_{coupled[0]}" in cols:
            data = body[:, [cols[f"data_{nm}"] for nm in coupled]]
        r2 = r_squared(y, data) if data is not None else np.full(y.shape[1], np.nan)
        empty = np.full((y.shape[0], 0), np.nan)
        return cls(y, nu, empty, empty, r2, data, tuple(coupled), tuple(states))


def _aux_parts(fit, residuals=None, sigma_data=None, data=None):
    e = np.asarray(fit.residuals if residuals is None else residuals, dtype=float)
    St = fit.sigma_tilde if sigma_data is None else sigma_data
    y_data = getattr(fit, "data", None) if data is None else data
    return e, np.asarray(St, dtype=float), None if y_data is None else np.asarray(y_data, dtype=float)


def coupled_series(m: ModelMatrices, K, P, e, nu0):
    """Vectorized recursion; returns ``(y, nu_filtered, nu_predicted, mu_predicted)``."""
    Pe = e @ P.T
    nu_f = _kernels.linear_recursion(m.C, Pe @ K.T, nu0)
    prev = np.vstack([np.asarray(nu0, dtype=float)[None, :], nu_f[:-1]])
    nu_p = prev @ m.C.T
    mu_p = m.mu + nu_p @ m.A.T
    return mu_p + Pe, nu_f, nu_p, mu_p


def run_otf(steady: SteadyKF, m: ModelMatrices, fit, nu0=None, *, residuals=None,
            sigma_data=None, data=None, names=(), state_names=()) -> CoupledOutput:
    """Optimal transport filter with the steady Kalman gain.

    Parameters
    ----------
    steady : SteadyKF
    m : ModelMatrices
    fit : auxiliary fit exposing ``residuals``, ``sigma_tilde`` and ``data``
    nu0 : initial filtered state mean (zeros by default)
    residuals, sigma_data, data : optional overrides of the auxiliary pieces
    """
    e, St, y_data = _aux_parts(fit, residuals, sigma_data, data)
    if e.ndim != 2 or e.shape[1] != m.d_y or St.shape != (m.d_y, m.d_y):
        raise ShapeError(f"auxiliary dimension {e.shape[1] if e.ndim == 2 else e.shape} != d_y={m.d_y}")
    nu0 = np.zeros(m.d_z) if nu0 is None else np.asarray(nu0, dtype=float)
    if nu0.shape != (m.d_z,):
        raise ShapeError(f"nu0 has shape {nu0.shape}, expected ({m.d_z},)")
    tm = transport_map(steady.Sigma, St)
    y, nu_f, nu_p, mu_p = coupled_series(m, steady.K, tm.P, e, nu0)
    r2 = r_squared(y, y_data) if y_data is not None else np.full(m.d_y, np.nan)
    return CoupledOutput(y, nu_f, nu_p, mu_p, r2, y_data, tuple(names), tuple(state_names),
                         {"P": tm.P})


def run_otf_diffuse(m: ModelMatrices, fit, nu0=None, V0=None, kappa: Optional[float] = None,
                    *, residuals=None, sigma_data=None, data=None, names=(), state_names=()):
    """Coupled series with the time-varying Kalman recursion.

    The filtered variance starts at ``V0`` (``kappa I`` on the stochastic
    states by default) and the per-period map is built from ``Sigma_t``.
    """
    e, St, y_data = _aux_parts(fit, residuals, sigma_data, data)
    n = e.shape[0]
    nu = np.zeros(m.d_z) if nu0 is None else np.asarray(nu0, dtype=float).copy()
    V = riccati_start(m, kappa) if V0 is None else as_sym(V0)
    DD = m.D @ m.D.T
    y = np.empty((n, m.d_y))
    nu_f = np.empty((n, m.d_z))
    nu_p = np.empty((n, m.d_z))
    mu_p = np.empty((n, m.d_y))
    for t in range(n):
        Vbar = as_sym(m.C @ V @ m.C.T + DD)
        S, K, V = kalman_gain(m, Vbar)
        P = transport_map(S, St).P
        nu_p[t] = m.C @ nu
        mu_p[t] = m.mu + m.A @ nu_p[t]
        pe = P @ e[t]
        y[t] = mu_p[t] + pe
        nu = nu_p[t] + K @ pe
        nu_f[t] = nu
    r2 = r_squared(y, y_data) if y_data is not None else np.full(m.d_y, np.nan)
    return CoupledOutput(y, nu_f, nu_p, mu_p, r2, y_data, tuple(names), tuple(state_names))


@dataclass
class KFOutput:
    """Plain Kalman filter output driven by the model's own prediction errors."""

    nu_filtered: np.ndarray
    nu_predicted: np.ndarray
    mu_predicted: np.ndarray
    innovations: np.ndarray


def kalman_filter(m: ModelMatrices, data, nu0=None, steady: Optional[SteadyKF] = None,
                  V0=None, kappa: Optional[float] = None) -> KFOutput:
    """Standard Kalman filter on the raw data.

    With ``steady`` given the steady gain is used throughout; otherwise the
    covariance recursion starts from ``V0`` (or ``kappa I``).
    """
    y = np.asarray(data, dtype=float)
    n = y.shape[0]
    nu = np.zeros(m.d_z) if nu0 is None else np.asarray(nu0, dtype=float).copy()
    V = None
    if steady is None:
        V = riccati_start(m, kappa) if V0 is None else as_sym(V0)
    DD = m.D @ m.D.T
    nu_f = np.empty((n, m.d_z))
    nu_p = np.empty((n, m.d_z))
    mu_p = np.empty((n, m.d_y))
    innov = np.empty((n, m.d_y))
    for t in range(n):
        if steady is None:
            Vbar = as_sym(m.C @ V @ m.C.T + DD)
            _, K, V = kalman_gain(m, Vbar)
        else:
            K = steady.K
        nu_p[t] = m.C @ nu
        mu_p[t] = m.mu + m.A @ nu_p[t]
        innov[t] = y[t] - mu_p[t]
        nu = nu_p[t] + K @ innov[t]
        nu_f[t] = nu
    return KFOutput(nu_f, nu_p, mu_p, innov)


def run_otf_timevarying(mu_fn: Callable, sigma_fn: Callable, fit, *, aux_fn: Optional[Callable] = None,
                        residuals=None, sigma_data=None, data=None, names=()) -> CoupledOutput:
    """Coupled series for ``y_t = mu(x_t) + Sigma(x_t)^{1/2} v_t``.

    ``mu_fn(t, y_past, data_past)`` and ``sigma_fn(t, y_past, data_past)``
    receive the coupled and observed histories up to ``t - 1`` (0-based
    ``t``). The auxiliary predictive defaults to the constant-variance VAR
    (``mu_tilde_{t|t-1} = data_t - e_t``, ``Sigma_tilde``); ``aux_fn(t,
    data_past)`` may instead return ``(mu_tilde_t, Sigma_tilde_t)``.
    """
    e, St, y_data = _aux_parts(fit, residuals, sigma_data, data)
    if y_data is None:
        raise ShapeError("the nonlinear extension needs the observed data")
    n, d = y_data.shape
    y = np.empty((n, d))
    mu_p = np.empty((n, d))
    for t in range(n):
        if aux_fn is None:
            mt, St_t = y_data[t] - e[t], St
        else:
            mt, St_t = aux_fn(t, y_data[:t])
        mu_t = np.atleast_1d(np.asarray(mu_fn(t, y[:t], y_data[:t]), dtype=float))
        S_t = np.atleast_2d(np.asarray(sigma_fn(t, y[:t], y_data[:t]), dtype=float))
        try:
            if not np.all(np.isfinite(S_t)):
                raise NotPSD("non-finite")
            P = transport_map(S_t, St_t).P
        except NotPSD:
            raise ModelVarianceInvalid(t) from None
        mu_p[t] = mu_t
        y[t] = mu_t + P @ (y_data[t] - np.asarray(mt, dtype=float))
    empty = np.zeros((n, 0))
    return CoupledOutput(y, empty, empty, mu_p, r_squared(y, y_data), y_data, tuple(names))
