"""Bounded Nelder-Mead with multistart.

Box bounds are removed by a smooth reparameterization: logit for two-sided
boxes, ``exp`` for one-sided ones, identity otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import qmc

from .exceptions import NoFeasibleStart


@dataclass(frozen=True)
class BoxTransform:
    lower: np.ndarray
    upper: np.ndarray

    def to_free(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.lower, self.upper
        u = np.empty_like(x)
        for i in range(x.size):
            fl, fh = np.isfinite(lo[i]), np.isfinite(hi[i])
            if fl and fh:
                u[i] = np.log((x[i] - lo[i]) / (hi[i] - x[i]))
            elif fl:
                u[i] = np.log(x[i] - lo[i])
            elif fh:
                u[i] = -np.log(hi[i] - x[i])
            else:
                u[i] = x[i]
        return u

    def to_box(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        lo, hi = self.lower, self.upper
        x = np.empty_like(u)
        for i in range(u.size):
            fl, fh = np.isfinite(lo[i]), np.isfinite(hi[i])
            if fl and fh:
                x[i] = lo[i] + (hi[i] - lo[i]) * expit(u[i])
            elif fl:
                x[i] = lo[i] + np.exp(u[i])
            elif fh:
                x[i] = hi[i] - np.exp(-u[i])
            else:
                x[i] = u[i]
        return x


@dataclass
class NMResult:
    x: np.ndarray
    fun: float
    n_evals: int
    converged: bool
    trace: list = field(default_factory=list)


def nelder_mead(f: Callable, x0, step: float = 0.5, xatol: float = 1e-8, max_evals: int = 4000,
                keep_trace: bool = False) -> NMResult:
    """Minimize ``f`` without constraints.

    Uses dimension-adaptive coefficients and stops when the simplex
    diameter falls below ``xatol`` or after ``max_evals`` evaluations.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    alpha, gamma = 1.0, 1.0 + 2.0 / n
    rho, sigma = 0.75 - 1.0 / (2.0 * n), 1.0 - 1.0 / n
    if n == 1:
        gamma, rho, sigma = 2.0, 0.5, 0.5
    sim = np.vstack([x0, x0 + step * np.eye(n)])
    fs = np.array([f(x) for x in sim])
    evals = n + 1
    trace = []
    converged = False
    while True:
        order = np.lexsort((np.arange(n + 1), fs))
        sim, fs = sim[order], fs[order]
        if keep_trace:
            trace.append((sim[0].copy(), float(fs[0])))
        diam = np.max(np.abs(sim[1:] - sim[0]))
        if diam < xatol:
            converged = True
            break
        if evals >= max_evals or not np.isfinite(fs[0]):
            break
        cen = sim[:-1].mean(axis=0)
        xr = cen + alpha * (cen - sim[-1])
        fr = f(xr)
        evals += 1
        if fr < fs[0]:
            xe = cen + gamma * (xr - cen)
            fe = f(xe)
            evals += 1
            sim[-1], fs[-1] = (xe, fe) if fe < fr else (xr, fr)
            continue
        if fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-1]:
            xc = cen + rho * (xr - cen)
            fc = f(xc)
            evals += 1
            if fc <= fr:
                sim[-1], fs[-1] = xc, fc
                continue
        else:
            xc = cen + rho * (sim[-1] - cen)
            fc = f(xc)
            evals += 1
            if fc < fs[-1]:
                sim[-1], fs[-1] = xc, fc
                continue
        sim[1:] = sim[0] + sigma * (sim[1:] - sim[0])
        fs[1:] = [f(x) for x in sim[1:]]
        evals += n
    return NMResult(sim[0].copy(), float(fs[0]), evals, converged, trace)


def start_points(base, lower, upper, n_starts: int = 8, scale: float = 0.25, seed: int = 0):
    """``base`` followed by scrambled-Sobol perturbations of ``scale`` times the box width."""
    base = np.asarray(base, dtype=float)
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    width = np.where(np.isfinite(upper - lower), upper - lower, np.maximum(1.0, np.abs(base)))
    pts = [base]
    if n_starts > 1:
        sob = qmc.Sobol(d=base.size, scramble=True, seed=seed)
        u = sob.random_base2(int(np.ceil(np.log2(n_starts - 1))))[:n_starts - 1]
        margin = 1e-3 * width
        lo_in = np.where(np.isfinite(lower), lower + margin, -np.inf)
        hi_in = np.where(np.isfinite(upper), upper - margin, np.inf)
        for row in u:
            pts.append(np.clip(base + scale * width * (2.0 * row - 1.0), lo_in, hi_in))
    return pts


def multistart(f: Callable, starts: Sequence, lower, upper, xatol: float = 1e-8,
               max_evals: int = 4000, step: float = 0.5, keep_trace: bool = False):
    """Run Nelder-Mead in the free space from each start; deterministic argmin.

    Ties in the objective are broken lexicographically on ``theta``.
    """
    tr = BoxTransform(np.asarray(lower, float), np.asarray(upper, float))

    def g(u):
        return f(tr.to_box(u))

    runs = []
    for x0 in starts:
        res = nelder_mead(g, tr.to_free(x0), step=step, xatol=xatol, max_evals=max_evals,
                          keep_trace=keep_trace)
        res.x = tr.to_box(res.x)
        res.trace = [(tr.to_box(u), v) for u, v in res.trace]
        runs.append(res)
    feasible = [r for r in runs if np.isfinite(r.fun)]
    if not feasible:
        raise NoFeasibleStart(f"all {len(runs)} starts have an infinite objective")
    best = min(feasible, key=lambda r: (r.fun, tuple(r.x)))
    return best, runs


def minimize_box(f: Callable, x0, lower, upper, n_starts: int = 8, seed: int = 0,
                 xatol: float = 1e-8, max_evals: int = 4000, starts: Optional[Sequence] = None):
    """Convenience wrapper: multistart Nelder-Mead on a box."""
    if starts is None:
        starts = start_points(x0, lower, upper, n_starts, seed=seed)
    return multistart(f, starts, lower, upper, xatol=xatol, max_evals=max_evals)[0]
