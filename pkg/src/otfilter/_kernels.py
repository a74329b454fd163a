"""Compiled inner loops. Falls back to plain numpy when numba is missing."""

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None


def _linear_recursion_py(C, U, x0):
    n, d = U.shape
    out = np.empty((n, d))
    prev = x0
    for t in range(n):
        prev = C @ prev + U[t]
        out[t] = prev
    return out


if njit is not None:

    @njit(cache=True)
    def _linear_recursion_nb(C, U, x0):
        n, d = U.shape
        out = np.empty((n, d))
        prev = x0.copy()
        for t in range(n):
            for i in range(d):
                s = U[t, i]
                for j in range(d):
                    s += C[i, j] * prev[j]
                out[t, i] = s
            for i in range(d):
                prev[i] = out[t, i]
        return out


def linear_recursion(C, U, x0):
    """Return ``x_t = C x_{t-1} + U_t`` for t = 1..n, with ``x_0 = x0``."""
    C = np.ascontiguousarray(C, dtype=float)
    U = np.ascontiguousarray(U, dtype=float)
    x0 = np.ascontiguousarray(x0, dtype=float)
    if U.shape[1] == 0:
        return np.empty((U.shape[0], 0))
    if njit is None:
        return _linear_recursion_py(C, U, x0)
    return _linear_recursion_nb(C, U, x0)


def _gain_py(A, B, D, Vbar, rank_tol):
    DB = D @ B.T
    S = A @ Vbar @ A.T + B @ B.T + A @ DB + DB.T @ A.T
    S = 0.5 * (S + S.T)
    w, Q = np.linalg.eigh(S)
    scale = np.max(np.abs(w)) if w.size else 0.0
    keep = w > rank_tol * scale
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    K = (Vbar @ A.T + DB) @ ((Q * inv) @ Q.T)
    V = Vbar - K @ S @ K.T
    return S, K, 0.5 * (V + V.T)


def _riccati_py(A, B, C, D, Vbar, tol, max_iter, rank_tol):
    DD = D @ D.T
    for it in range(max_iter):
        S, K, V = _gain_py(A, B, D, Vbar, rank_tol)
        new = C @ V @ C.T + DD
        new = 0.5 * (new + new.T)
        diff = np.sqrt(np.sum((new - Vbar) ** 2))
        Vbar = new
        if diff <= tol * (1.0 + np.sqrt(np.sum(new * new))):
            S, K, V = _gain_py(A, B, D, Vbar, rank_tol)
            return Vbar, S, K, V, it + 1
    S, K, V = _gain_py(A, B, D, Vbar, rank_tol)
    return Vbar, S, K, V, -1


def _lyapunov_py(C, Q, max_iter):
    X = Q.copy()
    Ak = C.copy()
    for _ in range(max_iter):
        X = X + Ak @ X @ Ak.T
        Ak = Ak @ Ak
        if np.max(np.abs(Ak)) < 1e-300 or np.sum(Ak * Ak) < 1e-34:
            break
    return 0.5 * (X + X.T)


if njit is not None:

    @njit(cache=True)
    def _gain_nb(A, B, D, Vbar, rank_tol):
        DB = D @ B.T
        AT = np.ascontiguousarray(A.T)
        cross = A @ DB
        S = A @ Vbar @ AT + B @ B.T + cross + cross.T
        S = 0.5 * (S + S.T)
        w, Q = np.linalg.eigh(S)
        scale = 0.0
        for i in range(w.size):
            if abs(w[i]) > scale:
                scale = abs(w[i])
        inv = np.zeros(w.size)
        for i in range(w.size):
            if w[i] > rank_tol * scale:
                inv[i] = 1.0 / w[i]
        Sp = (Q * inv) @ Q.T
        K = (Vbar @ AT + DB) @ Sp
        V = Vbar - K @ S @ K.T
        return S, K, 0.5 * (V + V.T)

    @njit(cache=True)
    def _riccati_nb(A, B, C, D, Vbar, tol, max_iter, rank_tol):
        DD = D @ D.T
        CT = np.ascontiguousarray(C.T)
        Vbar = Vbar.copy()
        for it in range(max_iter):
            S, K, V = _gain_nb(A, B, D, Vbar, rank_tol)
            new = C @ V @ CT + DD
            new = 0.5 * (new + new.T)
            diff = np.sqrt(np.sum((new - Vbar) ** 2))
            Vbar = new
            if diff <= tol * (1.0 + np.sqrt(np.sum(new * new))):
                S, K, V = _gain_nb(A, B, D, Vbar, rank_tol)
                return Vbar, S, K, V, it + 1
        S, K, V = _gain_nb(A, B, D, Vbar, rank_tol)
        return Vbar, S, K, V, -1

    @njit(cache=True)
    def _lyapunov_nb(C, Q, max_iter):
        X = Q.copy()
        Ak = C.copy()
        for _ in range(max_iter):
            X = X + Ak @ X @ np.ascontiguousarray(Ak.T)
            Ak = Ak @ Ak
            if np.sum(Ak * Ak) < 1e-34:
                break
        return 0.5 * (X + X.T)


def riccati_iterate(A, B, C, D, Vbar0, tol=1e-12, max_iter=50_000, rank_tol=1e-10):
    """Fixed-point iteration on the predicted state variance.

    Returns ``(Vbar, Sigma, K, V, iterations)``; ``iterations`` is ``-1``
    when the tolerance was not reached.
    """
    args = [np.ascontiguousarray(x, dtype=float) for x in (A, B, C, D, Vbar0)]
    if njit is None:
        return _riccati_py(*args, tol, max_iter, rank_tol)
    return _riccati_nb(*args, float(tol), int(max_iter), float(rank_tol))


def lyapunov_doubling(C, Q, max_iter=64):
    """Smith doubling for ``X = C X C' + Q`` (requires a stable ``C``)."""
    C = np.ascontiguousarray(C, dtype=float)
    Q = np.ascontiguousarray(Q, dtype=float)
    if njit is None:
        return _lyapunov_py(C, Q, max_iter)
    return _lyapunov_nb(C, Q, int(max_iter))


def _vma_py(A, C, K, J):
    out = np.empty((J, A.shape[0], K.shape[1]))
    CK = C @ K
    for j in range(J):
        out[j] = A @ CK
        CK = C @ CK
    return out


if njit is not None:

    @njit(cache=True)
    def _vma_nb(A, C, K, J):
        out = np.empty((J, A.shape[0], K.shape[1]))
        CK = C @ K
        for j in range(J):
            out[j] = A @ CK
            CK = C @ CK
        return out


def vma_sequence(A, C, K, J):
    """``A C^j K`` for ``j = 1..J``."""
    args = [np.ascontiguousarray(x, dtype=float) for x in (A, C, K)]
    if njit is None or J == 0:
        return _vma_py(*args, int(J))
    return _vma_nb(*args, int(J))
