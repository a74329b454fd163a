"""Dense kernels for small symmetric matrices.

All routines symmetrize their input and treat eigenvalues within
``rank_tol * lambda_max`` of zero as structural zeros, so rank-deficient
(stochastically singular) variances are handled consistently.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from . import _kernels
from .exceptions import InvalidMatrix, NonStationary, NotPSD

RANK_TOL = 1e-10


def as_sym(m) -> np.ndarray:
    """Return ``m`` as a finite, symmetrized 2-D float array."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidMatrix(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidMatrix("matrix has non-finite entries")
    return 0.5 * (m + m.T)


def eig_sym(m):
    """Eigen-decomposition of a symmetric matrix.

    Returns
    -------
    w : ndarray
        Eigenvalues in ascending order.
    Q : ndarray
        Orthonormal eigenvectors, ``m = Q @ diag(w) @ Q.T``.
    """
    return np.linalg.eigh(as_sym(m))


def _clipped_spectrum(m, rank_tol):
    w, Q = eig_sym(m)
    scale = max(float(np.max(np.abs(w))) if w.size else 0.0, 0.0)
    tol = rank_tol * scale
    if w.size and w[0] < -tol:
        raise NotPSD(f"smallest eigenvalue {w[0]:.3e} below -{tol:.3e}")
    w = np.where(w <= tol, 0.0, w)
    return w, Q


def sqrt_psd(m, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Symmetric PSD square root with spectral truncation of near-zero modes."""
    w, Q = _clipped_spectrum(m, rank_tol)
    s = (Q * np.sqrt(w)) @ Q.T
    return 0.5 * (s + s.T)


def pinv_psd(m, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Moore-Penrose inverse of a PSD matrix."""
    w, Q = _clipped_spectrum(m, rank_tol)
    inv = np.zeros_like(w)
    pos = w > 0
    inv[pos] = 1.0 / w[pos]
    p = (Q * inv) @ Q.T
    return 0.5 * (p + p.T)


def inv_sqrt_pd(m, rank_tol: float = RANK_TOL) -> np.ndarray:
    """``m^{-1/2}`` for a positive definite matrix; raises NotPSD if singular."""
    w, Q = _clipped_spectrum(m, rank_tol)
    if w.size and w[0] <= 0:
        raise NotPSD("matrix is singular")
    s = (Q / np.sqrt(w)) @ Q.T
    return 0.5 * (s + s.T)


def psd_rank(m, rank_tol: float = RANK_TOL) -> int:
    w, _ = _clipped_spectrum(m, rank_tol)
    return int(np.count_nonzero(w))


def spectral_radius(c) -> float:
    c = np.atleast_2d(np.asarray(c, dtype=float))
    if c.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(c))))


def solve_lyapunov(c, q, tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
    """Solve ``X = C X C' + Q`` for a stable ``C``.

    Smith doubling is tried first; if its residual exceeds
    ``tol * (1 + ||X||)`` a Bartels-Stewart solve is refined with
    fixed-point sweeps.
    """
    c = np.atleast_2d(np.asarray(c, dtype=float))
    q = as_sym(q)
    rho = spectral_radius(c)
    if rho >= 1.0:
        raise NonStationary(f"spectral radius of C is {rho:.6f} >= 1")
    x = _kernels.lyapunov_doubling(c, q)
    if _lyap_ok(c, q, x, tol):
        return x
    x = scipy.linalg.solve_discrete_lyapunov(c, q)
    x = 0.5 * (x + x.T)
    for _ in range(max_iter):
        nxt = c @ x @ c.T + q
        nxt = 0.5 * (nxt + nxt.T)
        if np.linalg.norm(nxt - x) <= tol * (1.0 + np.linalg.norm(nxt)):
            return nxt
        x = nxt
    raise NonStationary("Lyapunov iteration failed to converge")


def _lyap_ok(c, q, x, tol):
    r = c @ x @ c.T + q - x
    return bool(np.all(np.isfinite(x))) and np.linalg.norm(r) <= tol * (1.0 + np.linalg.norm(x))
