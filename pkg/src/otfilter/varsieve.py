"""Auxiliary VAR(k) sieve: OLS fit, lag selection, VMA inversion, detrending.

Pre-sample observations are set to the sample mean so that residuals exist
for every period ``t = 1..n``; the innovation variance uses divisor ``n``.
The regression carries an intercept and the mean ``mu_tilde`` is recovered
from it, so that the residual map ``e_t(psi)`` evaluated at the OLS
estimates reproduces the OLS residuals exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np

from .exceptions import (
    CollinearRegressors,
    DataVarianceSingular,
    InsufficientData,
    NonStationary,
    ShapeError,
)
from .linalg import as_sym, spectral_radius


@dataclass(frozen=True)
class DataSet:
    """An ``n x d`` panel of observations with column labels."""

    values: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise ShapeError(f"data must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("data contains missing or non-finite values")
        names = tuple(self.names) or tuple(f"y{i + 1}" for i in range(v.shape[1]))
        if len(names) != v.shape[1]:
            raise ShapeError("number of names does not match number of columns")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_csv(cls, path) -> "DataSet":
        path = Path(path)
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 2:
            raise InsufficientData(f"{path}: no data rows")
        header, body = rows[0], rows[1:]
        try:
            values = np.array([[float(x) for x in r] for r in body if r])
        except ValueError as exc:
            raise ValueError(f"{path}: non-numeric entry ({exc})") from None
        return cls(values, tuple(h.strip() for h in header))

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(self.names)
            for row in self.values:
                w.writerow([repr(float(x)) for x in row])


def as_array(data) -> np.ndarray:
    if isinstance(data, DataSet):
        return data.values
    return DataSet(data).values


@dataclass(frozen=True)
class VarFit:
    """OLS estimates of the auxiliary VAR(k).

    ``psi`` has shape ``(k, d, d)``; ``residuals`` has shape ``(n, d)``.
    ``presample`` is the constant used for all pre-sample observations.
    """

    k: int
    mu_tilde: np.ndarray
    psi: np.ndarray
    residuals: np.ndarray
    sigma_tilde: np.ndarray
    data: np.ndarray
    presample: np.ndarray
    names: tuple = field(default=())

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    @property
    def d_psi(self) -> int:
        d = self.d
        return d + d * (d + 1) // 2 + self.k * d * d

    def predictive_mean(self) -> np.ndarray:
        """One-step predictions ``mu_tilde_{t|t-1} = y_t - e_t``."""
        return self.data - self.residuals

    def psi_vector(self) -> np.ndarray:
        return pack_psi(self.mu_tilde, self.sigma_tilde, self.psi)

    def with_psi(self, vec) -> "VarFit":
        """Copy of the fit with auxiliary parameters replaced and residuals recomputed."""
        mu, sigma, psi = unpack_psi(vec, self.d, self.k)
        resid = var_residuals(self.data, self.presample, mu, psi)
        return VarFit(self.k, mu, psi, resid, sigma, self.data, self.presample, self.names)


@dataclass(frozen=True)
class DataVMA:
    """Truncated VMA coefficients ``Lambda_1..Lambda_J`` (``Lambda_0 = I``)."""

    lambda_tilde: np.ndarray
    mu_tilde: np.ndarray
    sigma_tilde: np.ndarray


def vech(m) -> np.ndarray:
    m = np.asarray(m)
    d = m.shape[0]
    return np.concatenate([m[j:, j] for j in range(d)])


def unvech(v, d: int) -> np.ndarray:
    m = np.zeros((d, d))
    pos = 0
    for j in range(d):
        m[j:, j] = v[pos:pos + d - j]
        pos += d - j
    return m + np.tril(m, -1).T


def pack_psi(mu, sigma, psi) -> np.ndarray:
    """Stack ``(mu', vech(sigma)', vec(Psi_1)', ..., vec(Psi_k)')'``."""
    parts = [np.asarray(mu, float).ravel(), vech(sigma)]
    parts += [np.asarray(p).ravel(order="F") for p in psi]
    return np.concatenate(parts)


def unpack_psi(vec, d: int, k: int):
    vec = np.asarray(vec, dtype=float)
    nv = d * (d + 1) // 2
    if vec.size != d + nv + k * d * d:
        raise ShapeError(f"psi vector has length {vec.size}, expected {d + nv + k * d * d}")
    mu = vec[:d].copy()
    sigma = unvech(vec[d:d + nv], d)
    rest = vec[d + nv:]
    psi = np.stack([rest[j * d * d:(j + 1) * d * d].reshape(d, d, order="F")
                    for j in range(k)]) if k else np.zeros((0, d, d))
    return mu, sigma, psi


def lag_matrix(x: np.ndarray, k: int, fill=None) -> np.ndarray:
    """``(n, k*d)`` matrix whose j-th block is ``x_{t-j}``; pre-sample rows use ``fill``."""
    n, d = x.shape
    fill = np.zeros(d) if fill is None else np.asarray(fill, float)
    out = np.empty((n, k * d))
    for j in range(1, k + 1):
        blk = out[:, (j - 1) * d:j * d]
        m = min(j, n)
        blk[:m] = fill
        blk[m:] = x[:n - j]
    return out


def var_residuals(data, presample, mu, psi) -> np.ndarray:
    """``e_t = (y_t - mu) - sum_j Psi_j (y_{t-j} - mu)`` with pre-sample ``y = presample``."""
    y = np.asarray(data, float)
    dev = y - mu
    k = len(psi)
    if k == 0:
        return dev
    lags = lag_matrix(dev, k, fill=np.asarray(presample) - mu)
    coef = np.concatenate([p.T for p in psi], axis=0)
    return dev - lags @ coef


def fit_var(data, k: int) -> VarFit:
    """OLS fit of a VAR(k) with intercept and sample-mean pre-sample values."""
    names = data.names if isinstance(data, DataSet) else ()
    y = as_array(data)
    n, d = y.shape
    if k < 1:
        raise ValueError("lag order must be >= 1")
    if n <= d * k + 1:
        raise InsufficientData(f"n={n} too small for a VAR({k}) in {d} variables")
    ybar = y.mean(axis=0)
    x = y - ybar
    Z = np.hstack([np.ones((n, 1)), lag_matrix(x, k)])
    gram = Z.T @ Z
    scale = np.sqrt(np.diag(gram))
    if np.any(scale <= 1e-300):
        raise CollinearRegressors("a regressor is identically zero")
    w = np.linalg.eigvalsh(gram / np.outer(scale, scale))
    if w[0] <= 1e-12 * w[-1]:
        raise CollinearRegressors(f"regressor Gram matrix is singular (cond {w[-1] / max(w[0], 1e-300):.2e})")
    coef = np.linalg.solve(gram, Z.T @ x)
    c = coef[0]
    psi = np.stack([coef[1 + j * d:1 + (j + 1) * d].T for j in range(k)])
    resid = x - Z @ coef
    sigma = as_sym(resid.T @ resid / n)
    ws = np.linalg.eigvalsh(sigma)
    if ws[0] <= 1e-12 * max(ws[-1], 1e-300):
        raise DataVarianceSingular("VAR innovation variance is singular")
    lr = np.eye(d) - psi.sum(axis=0)
    try:
        mu = ybar + np.linalg.solve(lr, c)
    except np.linalg.LinAlgError:
        raise CollinearRegressors("VAR has an exact unit root; mean is not identified") from None
    return VarFit(k, mu, psi, resid, sigma, y, ybar, names)


def information_criterion(fit: VarFit, criterion: str = "bic") -> float:
    n, d = fit.n, fit.d
    pen = {"aic": 2.0, "bic": np.log(n)}[criterion.lower()]
    return float(np.linalg.slogdet(fit.sigma_tilde)[1] + pen * fit.k * d * d / n)


def select_lags(data, k_max: int, criterion: str = "bic") -> int:
    """Lag order in ``1..k_max`` minimizing AIC or BIC; ties go to the smaller order."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    best_k, best = 1, np.inf
    for k in range(1, k_max + 1):
        ic = information_criterion(fit_var(data, k), criterion)
        if ic < best:
            best_k, best = k, ic
    return best_k


def companion(psi) -> np.ndarray:
    psi = np.asarray(psi)
    k, d, _ = psi.shape
    top = np.hstack(list(psi))
    if k == 1:
        return top
    bottom = np.hstack([np.eye(d * (k - 1)), np.zeros((d * (k - 1), d))])
    return np.vstack([top, bottom])


def default_horizon(k: int = 1) -> int:
    return max(50, 10 * k)


def vma_from_var(fit: VarFit, horizon: int | None = None) -> DataVMA:
    """Invert the VAR: ``Lambda_j = sum_{i=1}^{min(j,k)} Psi_i Lambda_{j-i}``."""
    psi = np.asarray(fit.psi)
    if spectral_radius(companion(psi)) >= 1.0:
        raise NonStationary("fitted VAR is not stationary")
    J = default_horizon(fit.k) if horizon is None else int(horizon)
    lam = vma_coefficients(psi, J)
    return DataVMA(lam[1:], fit.mu_tilde.copy(), fit.sigma_tilde.copy())


def vma_coefficients(psi, J: int) -> np.ndarray:
    """``Lambda_0..Lambda_J`` for VAR coefficients ``psi`` (shape ``(k, d, d)``)."""
    psi = np.asarray(psi, float)
    k, d = psi.shape[0], psi.shape[1]
    lam = np.zeros((J + 1, d, d))
    lam[0] = np.eye(d)
    for j in range(1, J + 1):
        for i in range(1, min(j, k) + 1):
            lam[j] += psi[i - 1] @ lam[j - i]
    return lam


def detrend_flexible(data, n_cosines: int = 4):
    """OLS projection on ``{1, t, cos(2 pi j t / n), j = 1..n_cosines}``.

    Returns the fitted trend and the residual ``DataSet``.
    """
    names = data.names if isinstance(data, DataSet) else ()
    y = as_array(data)
    n = y.shape[0]
    if n_cosines < 0:
        raise ValueError("n_cosines must be >= 0")
    if n <= n_cosines + 2:
        raise InsufficientData(f"n={n} too small for {n_cosines} cosine terms")
    t = np.arange(1, n + 1, dtype=float)
    cols = [np.ones(n), t] + [np.cos(2 * np.pi * j * t / n) for j in range(1, n_cosines + 1)]
    X = np.column_stack(cols)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    trend = X @ beta
    return trend, DataSet(y - trend, names)


@dataclass(frozen=True)
class TrendARFit:
    """Flexible-trend auxiliary: OLS trend on cosines, then an AR(p) on the deviations.

    Exposes ``residuals``, ``sigma_tilde`` and ``data`` like :class:`VarFit`.
    """

    trend: np.ndarray
    ar: VarFit
    data: np.ndarray
    names: tuple = ()

    @property
    def residuals(self) -> np.ndarray:
        return self.ar.residuals

    @property
    def sigma_tilde(self) -> np.ndarray:
        return self.ar.sigma_tilde

    def predictive_mean(self) -> np.ndarray:
        return self.data - self.residuals


def fit_trend_ar(data, n_cosines: int = 4, p: int = 4) -> TrendARFit:
    """Detrend with :func:`detrend_flexible`, then fit an AR(p) to the deviations."""
    names = data.names if isinstance(data, DataSet) else ()
    y = as_array(data)
    trend, dev = detrend_flexible(y, n_cosines)
    return TrendARFit(trend, fit_var(dev, p), y, names)
