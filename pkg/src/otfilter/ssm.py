"""Linear state-space models: specification, steady Kalman system, simulation.

The model is::

    y_t = mu + A z_t + B v_t,     z_t = C z_{t-1} + D v_t,     v_t ~ (0, I).

A :class:`ModelSpec` maps a parameter vector ``theta`` to
:class:`ModelMatrices`. Builtin families are available through
:func:`get_builtin`; arbitrary models can be written with expression
templates (:class:`TemplateModel`).
"""

from __future__ import annotations

import math
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from . import _kernels
from .exceptions import (
    ConfigError,
    NonStationary,
    OutOfBounds,
    RiccatiDivergence,
    ShapeError,
)
from .linalg import RANK_TOL, as_sym, pinv_psd, solve_lyapunov, spectral_radius
from .modeldsl import Expr, ParamSpec, Prior, compile_expr, free_names, parse_expr
from .varsieve import DataSet

STATIONARY_TOL = 1.0 - 1e-10


@dataclass(frozen=True)
class ModelMatrices:
    """System matrices at a parameter point."""

    mu: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        d_y, d_z, d_v = mu.size, C.shape[0], D.shape[1]
        if A.shape != (d_y, d_z) or B.shape != (d_y, d_v) or C.shape != (d_z, d_z) or D.shape != (d_z, d_v):
            raise ShapeError(
                f"inconsistent shapes: mu {mu.shape}, A {A.shape}, B {B.shape}, C {C.shape}, D {D.shape}"
            )
        for name, m in (("mu", mu), ("A", A), ("B", B), ("C", C), ("D", D)):
            if not np.all(np.isfinite(m)):
                raise ShapeError(f"{name} has non-finite entries")
            object.__setattr__(self, name, m)

    @property
    def d_y(self) -> int:
        return self.mu.size

    @property
    def d_z(self) -> int:
        return self.C.shape[0]

    @property
    def d_v(self) -> int:
        return self.D.shape[1]

    @property
    def spectral_radius(self) -> float:
        r = self.__dict__.get("_rho")
        if r is None:
            r = spectral_radius(self.C)
            object.__setattr__(self, "_rho", r)
        return r

    @property
    def stationary(self) -> bool:
        return self.spectral_radius < STATIONARY_TOL


class ModelSpec(ABC):
    """Map from a parameter vector to :class:`ModelMatrices`.

    Subclasses set ``params`` and ``d_y`` and implement :meth:`build`.
    """

    name: str = "model"
    params: tuple = ()
    d_y: int = 1
    #: whether the estimation path applies (stationary family)
    estimable: bool = True
    #: parameter values used as defaults (e.g. for simulation)
    defaults: Optional[tuple] = None
    #: labels of the state vector, used for output columns
    state_names: tuple = ()

    @abstractmethod
    def build(self, p: Mapping[str, float]) -> ModelMatrices:
        """Build matrices from a name -> value map."""

    @property
    def param_names(self) -> tuple:
        return tuple(ps.name for ps in self.params)

    @property
    def d_theta(self) -> int:
        return len(self.params)

    @property
    def lower(self) -> np.ndarray:
        return np.array([ps.lower for ps in self.params])

    @property
    def upper(self) -> np.ndarray:
        return np.array([ps.upper for ps in self.params])

    def theta_dict(self, theta) -> dict:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.size != self.d_theta:
            raise ShapeError(f"theta has length {theta.size}, expected {self.d_theta}")
        return dict(zip(self.param_names, theta.tolist()))

    def theta_from_dict(self, values: Mapping[str, float]) -> np.ndarray:
        missing = [n for n in self.param_names if n not in values]
        if missing:
            raise ConfigError(f"missing parameter values: {missing}")
        return np.array([float(values[n]) for n in self.param_names])

    def in_bounds(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))

    def matrices(self, theta) -> ModelMatrices:
        return self.build(self.theta_dict(theta))

    def initial_state(self, m: ModelMatrices, data: Optional[np.ndarray] = None) -> np.ndarray:
        """Initial filtered mean ``nu_{0|0}``; the stationary mean of the states by default."""
        return np.zeros(m.d_z)

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


def eval_model(spec: ModelSpec, theta, require_stationary: bool = True) -> ModelMatrices:
    """Evaluate ``spec`` at ``theta`` and check bounds and stationarity."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if not spec.in_bounds(theta):
        raise OutOfBounds(f"theta={theta.tolist()} outside parameter bounds")
    m = spec.matrices(theta)
    if m.d_y != spec.d_y:
        raise ShapeError(f"model produced d_y={m.d_y}, expected {spec.d_y}")
    if require_stationary and not m.stationary:
        raise NonStationary(f"spectral radius of C is {m.spectral_radius:.6f}")
    return m


# -- template models ---------------------------------------------------------

def _as_expr(x) -> Expr:
    if isinstance(x, (int, float)):
        return parse_expr(repr(float(x)))
    if isinstance(x, str):
        return parse_expr(x)
    return x


class TemplateModel(ModelSpec):
    """Model whose matrix entries are expressions in the declared parameters.

    Parameters
    ----------
    params : sequence of ParamSpec
    mu, A, B, C, D : nested lists of expression strings (or numbers)
    """

    def __init__(self, params: Sequence[ParamSpec], mu, A, B, C, D, name="template", defaults=None):
        self.name = name
        self.params = tuple(params)
        self.defaults = None if defaults is None else tuple(defaults)
        names = set(self.param_names)
        if len(names) != len(self.params):
            raise ConfigError("duplicate parameter names")
        self.templates = {}
        self._compiled = {}
        for key, block in (("mu", mu), ("A", A), ("B", B), ("C", C), ("D", D)):
            rows = [block] if key == "mu" else block
            if key == "mu" and rows and isinstance(rows[0], (list, tuple)):
                rows = [[r[0] for r in rows]] if all(len(r) == 1 for r in rows) else rows
            exprs = [[_as_expr(x) for x in row] for row in rows]
            if len({len(r) for r in exprs}) > 1:
                raise ConfigError(f"template {key} has ragged rows")
            for row in exprs:
                for e in row:
                    unknown = free_names(e) - names
                    if unknown:
                        raise ConfigError(f"template {key} references undeclared parameters {sorted(unknown)}")
            self.templates[key] = exprs
            self._compiled[key] = [[compile_expr(e) for e in row] for row in exprs]
        self.d_y = len(self.templates["mu"][0])
        d_z = len(self.templates["C"])
        d_v = len(self.templates["D"][0]) if self.templates["D"] else 0
        shapes = {
            "A": (self.d_y, d_z), "B": (self.d_y, d_v), "C": (d_z, d_z), "D": (d_z, d_v),
        }
        for key, shp in shapes.items():
            got = (len(self.templates[key]), len(self.templates[key][0]) if self.templates[key] else 0)
            if got != shp:
                raise ConfigError(f"template {key} has shape {got}, expected {shp}")

    def build(self, p):
        ev = {k: np.array([[f(p) for f in row] for row in rows], dtype=float).reshape(
            len(rows), len(rows[0]) if rows else 0) for k, rows in self._compiled.items()}
        return ModelMatrices(ev["mu"].ravel(), ev["A"], ev["B"], ev["C"], ev["D"])


# -- builtin models ----------------------------------------------------------

def _p(name, lo, hi, prior=None):
    return ParamSpec(name, lo, hi, prior or Prior())


class MA1(ModelSpec):
    """``y_t = mu + xi_t + lam*xi_{t-1}``, ``xi_t = sigma*v_t``.

    The state is ``z_t = (xi_t, xi_{t-1})``.
    """

    name = "ma1"
    d_y = 1
    state_names = ("xi", "xi_lag1")

    def __init__(self):
        self.params = (_p("mu", -10.0, 10.0), _p("lam", -0.99, 0.99), _p("sigma", 1e-3, 10.0))
        self.defaults = (0.0, 0.5, 1.0)

    def build(self, p):
        return ModelMatrices(
            [p["mu"]], [[1.0, p["lam"]]], [[0.0]], [[0.0, 0.0], [1.0, 0.0]], [[p["sigma"]], [0.0]]
        )


class ARMA(ModelSpec):
    """ARMA(p, q) in the Harvey state form with ``r = max(p, q + 1)`` states.

    ``y_t = mu + z_{1,t}``; ``z_t = T z_{t-1} + R sigma v_t`` with ``T`` the
    companion of ``phi`` and ``R = (1, theta_1, ..., theta_{r-1})'``.
    """

    d_y = 1

    def __init__(self, p: int = 1, q: int = 0):
        if p < 0 or q < 0 or p + q == 0:
            raise ConfigError("arma needs p + q >= 1")
        self.p, self.q = int(p), int(q)
        self.name = f"arma({self.p},{self.q})"
        phi_box = 0.999 if p == 1 else 2.0
        th_box = 0.99 if q == 1 else 2.0
        params = [_p("mu", -10.0, 10.0)]
        if p == 1:
            params.append(_p("rho", -phi_box, phi_box))
        else:
            params += [_p(f"phi{i + 1}", -phi_box, phi_box) for i in range(p)]
        params += [_p(f"theta{i + 1}", -th_box, th_box) for i in range(q)]
        params.append(_p("sigma", 1e-3, 10.0))
        self.params = tuple(params)

    def build(self, prm):
        p, q = self.p, self.q
        r = max(p, q + 1)
        phi = [prm["rho"]] if p == 1 else [prm[f"phi{i + 1}"] for i in range(p)]
        theta = [prm[f"theta{i + 1}"] for i in range(q)]
        T = np.zeros((r, r))
        T[:p, 0] = phi
        T[np.arange(r - 1), np.arange(1, r)] = 1.0
        R = np.zeros((r, 1))
        R[0, 0] = 1.0
        R[1:q + 1, 0] = theta
        A = np.zeros((1, r))
        A[0, 0] = 1.0
        return ModelMatrices([prm["mu"]], A, [[0.0]], T, R * prm["sigma"])


class LocalLevel(ModelSpec):
    """``y_t = z_t + sigma_e v_{2,t}``, ``z_t = z_{t-1} + sigma_eta v_{1,t}`` (filtering only)."""

    name = "local_level"
    d_y = 1
    state_names = ("level",)
    estimable = False

    def __init__(self):
        self.params = (_p("sigma_eta", 1e-4, 100.0), _p("sigma_e", 1e-4, 100.0))
        self.defaults = (1.0, 1.0)

    def build(self, p):
        return ModelMatrices([0.0], [[1.0]], [[0.0, p["sigma_e"]]], [[1.0]], [[p["sigma_eta"], 0.0]])

    def initial_state(self, m, data=None):
        return np.array([0.0 if data is None else float(np.asarray(data)[0, 0])])


class WatsonTrendCycle(ModelSpec):
    """Random-walk-with-drift trend plus AR(2) cycle (filtering only).

    States are ``(tau_t, c_t, c_{t-1}, 1)``; the constant state carries the
    drift ``mu`` so that the system stays in the homogeneous form.
    """

    name = "watson_trend_cycle"
    d_y = 1
    state_names = ("trend", "cycle", "cycle_lag1", "const")
    estimable = False

    def __init__(self):
        self.params = (
            _p("mu", -10.0, 10.0),
            _p("rho1", -2.0, 2.0),
            _p("rho2", -1.0, 1.0),
            _p("sigma_eta", 1e-4, 100.0),
            _p("sigma_e", 1e-4, 100.0),
        )
        self.defaults = (0.8, 1.53, -0.61, 0.57, 0.62)

    def build(self, p):
        C = np.array([
            [1.0, 0.0, 0.0, p["mu"]],
            [0.0, p["rho1"], p["rho2"], 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
        D = np.zeros((4, 2))
        D[0, 0] = p["sigma_eta"]
        D[1, 1] = p["sigma_e"]
        return ModelMatrices([0.0], [[1.0, 1.0, 0.0, 0.0]], [[0.0, 0.0]], C, D)

    def initial_state(self, m, data=None):
        tau0 = 0.0 if data is None else float(np.asarray(data)[0, 0]) - m.C[0, 3]
        return np.array([tau0, 0.0, 0.0, 1.0])


def atsm_loadings(delta0, delta1, rhoQ, cQ, max_maturity: int):
    """Bond-yield loadings ``y^n = a_n + b_n' F`` for ``n = 1..N``.

    ``b_n = (1/n) sum_{i<n} (rhoQ')^i delta1`` and
    ``a_n = delta0 + (1/n) sum_{i<n} i b_i' cQ - (1/(2n)) sum_{i<n} i^2 b_i' b_i``.

    Returns
    -------
    a : ndarray, shape (N,)
    b : ndarray, shape (N, d_f)
    """
    delta1 = np.atleast_1d(np.asarray(delta1, dtype=float))
    d_f = delta1.size
    rhoQ = np.asarray(rhoQ, dtype=float).reshape(d_f, d_f)
    cQ = np.atleast_1d(np.asarray(cQ, dtype=float))
    if cQ.size != d_f:
        raise ShapeError("cQ must have d_f entries")
    N = int(max_maturity)
    if N < 1:
        raise ValueError("max_maturity must be >= 1")
    a = np.empty(N)
    b = np.empty((N, d_f))
    term = delta1.copy()
    acc = np.zeros(d_f)
    lin = 0.0
    quad = 0.0
    for n in range(1, N + 1):
        acc += term
        term = rhoQ.T @ term
        b[n - 1] = acc / n
        a[n - 1] = float(delta0) + lin / n - quad / (2 * n)
        lin += n * float(b[n - 1] @ cQ)
        quad += n * n * float(b[n - 1] @ b[n - 1])
    return a, b


class ATSM(ModelSpec):
    """Gaussian affine term-structure model with ``d_f`` latent factors.

    Factors follow ``F_t = rho F_{t-1} + v_t``; yields at the given
    maturities load on the factors with no measurement error (``B = 0``).
    """

    def __init__(self, d_f: int = 3, maturities: Sequence[int] = (1, 12, 24, 36, 48, 60)):
        self.d_f = int(d_f)
        self.maturities = tuple(int(x) for x in maturities)
        if self.d_f < 1 or not self.maturities or min(self.maturities) < 1:
            raise ConfigError("atsm needs d_f >= 1 and positive maturities")
        self.name = f"atsm({self.d_f},{list(self.maturities)})"
        self.d_y = len(self.maturities)
        f = self.d_f
        params = [_p("delta0", -10.0, 10.0)]
        params += [_p(f"delta1_{i + 1}", 0.0, 5.0) for i in range(f)]
        params += [_p(f"rhoQ_{i + 1}{j + 1}", -1.5, 1.5) for i in range(f) for j in range(i + 1)]
        params += [_p(f"cQ_{i + 1}", -10.0, 10.0) for i in range(f)]
        params += [_p(f"rho_{i + 1}{j + 1}", -1.5, 1.5) for i in range(f) for j in range(f)]
        self.params = tuple(params)

    def build(self, p):
        f = self.d_f
        delta1 = np.array([p[f"delta1_{i + 1}"] for i in range(f)])
        rhoQ = np.zeros((f, f))
        for i in range(f):
            for j in range(i + 1):
                rhoQ[i, j] = p[f"rhoQ_{i + 1}{j + 1}"]
        cQ = np.array([p[f"cQ_{i + 1}"] for i in range(f)])
        rho = np.array([[p[f"rho_{i + 1}{j + 1}"] for j in range(f)] for i in range(f)])
        a, b = atsm_loadings(p["delta0"], delta1, rhoQ, cQ, max(self.maturities))
        idx = np.array(self.maturities) - 1
        return ModelMatrices(a[idx], b[idx], np.zeros((self.d_y, f)), rho, np.eye(f))


_BUILTIN = re.compile(r"^\s*(?P<name>[a-z_0-9]+)\s*(?:\((?P<args>.*)\))?\s*$")


def get_builtin(name: str, **kwargs) -> ModelSpec:
    """Look up a builtin model by name, e.g. ``"ma1"``, ``"arma(1,0)"``, ``"atsm(3,[1,12,60])"``."""
    m = _BUILTIN.match(name)
    if m is None:
        raise ConfigError(f"cannot parse model name {name!r}")
    key = m.group("name")
    nums = [int(x) for x in re.findall(r"\d+", m.group("args") or "")]
    if key == "ma1":
        return MA1()
    if key == "local_level":
        return LocalLevel()
    if key == "watson_trend_cycle":
        return WatsonTrendCycle()
    if key == "arma":
        if len(nums) != 2 and not kwargs:
            raise ConfigError("arma needs (p, q)")
        p, q = (nums + [None, None])[:2] if nums else (kwargs["p"], kwargs["q"])
        return ARMA(p, q)
    if key == "atsm":
        if nums:
            return ATSM(nums[0], nums[1:] or kwargs.get("maturities", (1, 12, 24, 36, 48, 60)))
        return ATSM(**kwargs)
    raise ConfigError(f"unknown builtin model {key!r}")


BUILTIN_NAMES = ("ma1", "arma(p,q)", "local_level", "watson_trend_cycle", "atsm(d_f, maturities)")


# -- steady Kalman system ----------------------------------------------------

@dataclass(frozen=True)
class SteadyKF:
    """Steady-state Kalman quantities.

    ``Vbar`` is the predicted and ``V`` the filtered state variance, ``K``
    the gain and ``Sigma`` the innovation variance of ``y_t``.
    """

    V: np.ndarray
    Vbar: np.ndarray
    K: np.ndarray
    Sigma: np.ndarray
    A: np.ndarray
    C: np.ndarray
    iterations: int = 0
    horizon: Optional[int] = None

    @property
    def lam(self) -> np.ndarray:
        """Model VMA coefficients ``Lambda_1..Lambda_J``."""
        return model_vma(self, self.horizon)


def kalman_gain(m: ModelMatrices, Vbar):
    """Innovation variance, gain and filtered variance given ``Vbar``.

    With ``DB' = 0`` these reduce to ``K = Vbar A' Sigma^+`` and
    ``V = (I - KA) Vbar``.
    """
    A, B, D = m.A, m.B, m.D
    DB = D @ B.T
    S = as_sym(A @ Vbar @ A.T + B @ B.T + A @ DB + DB.T @ A.T)
    Sp = pinv_psd(S)
    K = (Vbar @ A.T + DB) @ Sp
    V = as_sym(Vbar - K @ S @ K.T)
    return S, K, V


def _deterministic_states(m: ModelMatrices) -> np.ndarray:
    """States that are exact constants (``z_i,t = z_i,t-1`` with no shocks)."""
    eye = np.eye(m.d_z)
    return np.array([np.all(m.D[i] == 0) and np.array_equal(m.C[i], eye[i]) for i in range(m.d_z)],
                    dtype=bool)


def riccati_start(m: ModelMatrices, kappa: Optional[float] = None) -> np.ndarray:
    """Starting predicted variance: stationary state variance, or ``kappa I`` under unit roots."""
    DD = m.D @ m.D.T
    if m.stationary:
        return solve_lyapunov(m.C, DD)
    if kappa is None:
        kappa = 1e4 * (1.0 + np.linalg.norm(DD))
    diag = np.where(_deterministic_states(m), 0.0, kappa)
    return np.diag(diag)


def solve_steady_kf(m: ModelMatrices, horizon: Optional[int] = None, tol: float = 1e-12,
                    max_iter: int = 50_000, kappa: Optional[float] = None) -> SteadyKF:
    """Solve the steady Kalman system by fixed-point iteration on ``Vbar``."""
    Vbar0 = riccati_start(m, kappa)
    Vbar, S, K, V, iters = _kernels.riccati_iterate(m.A, m.B, m.C, m.D, Vbar0, tol, max_iter, RANK_TOL)
    if iters < 0 or not (np.all(np.isfinite(Vbar)) and np.all(np.isfinite(K))):
        raise RiccatiDivergence(f"Riccati iteration did not converge in {max_iter} steps")
    return SteadyKF(V, Vbar, K, S, m.A, m.C, iters, horizon)


def riccati_residuals(m: ModelMatrices, kf: SteadyKF) -> dict:
    """Relative residuals of the four steady-state equations."""
    A, B, C, D = m.A, m.B, m.C, m.D

    def rel(x, y):
        return float(np.linalg.norm(x - y) / (1.0 + np.linalg.norm(x)))

    DB = D @ B.T
    return {
        "Vbar": rel(kf.Vbar, C @ kf.V @ C.T + D @ D.T),
        "Sigma": rel(kf.Sigma, A @ C @ kf.V @ C.T @ A.T + (B + A @ D) @ (B + A @ D).T),
        "V": rel(kf.V, kf.Vbar - kf.K @ kf.Sigma @ kf.K.T),
        "K": rel(kf.K, (kf.Vbar @ A.T + DB) @ pinv_psd(kf.Sigma)),
    }


def model_vma(kf: SteadyKF, horizon: Optional[int] = None, k: int = 1) -> np.ndarray:
    """``Lambda_j = A C^j K`` for ``j = 1..J``.

    Without an explicit horizon, ``J = max(50, 10k)`` is extended until
    ``||Lambda_J|| < 1e-10`` or ``J = 2000``.
    """
    if horizon is not None:
        return _kernels.vma_sequence(kf.A, kf.C, kf.K, int(horizon))
    J0 = max(50, 10 * k)
    J_cap = 2000
    out = []
    CK = kf.C @ kf.K
    for j in range(1, J_cap + 1):
        out.append(kf.A @ CK)
        if j >= J0 and np.linalg.norm(out[-1]) < 1e-10:
            break
        CK = kf.C @ CK
    d_y = kf.A.shape[0]
    return np.array(out) if out else np.zeros((0, d_y, d_y))


# -- simulation --------------------------------------------------------------

def simulate(m: ModelMatrices, n: int, seed=None, shock_law: str = "gaussian",
             z0=None, names=None) -> DataSet:
    """Simulate ``n`` periods with iid ``N(0, I)`` shocks.

    ``z0`` defaults to a draw from the stationary state distribution, which
    requires a stable ``C``.
    """
    if shock_law != "gaussian":
        raise ConfigError(f"unsupported shock law {shock_law!r}")
    rng = np.random.default_rng(seed)
    if z0 is None:
        if not m.stationary:
            raise NonStationary("stationary initialization requested for a unit-root model")
        P0 = solve_lyapunov(m.C, m.D @ m.D.T)
        w, Q = np.linalg.eigh(as_sym(P0))
        z0 = (Q * np.sqrt(np.clip(w, 0.0, None))) @ rng.standard_normal(m.d_z)
    z0 = np.asarray(z0, dtype=float)
    v = rng.standard_normal((n, m.d_v))
    z = _kernels.linear_recursion(m.C, v @ m.D.T, z0)
    y = m.mu + z @ m.A.T + v @ m.B.T
    return DataSet(y, tuple(names) if names else ())


def simulate_states(m: ModelMatrices, n: int, seed=None, z0=None):
    """Like :func:`simulate` but also returns the states and shocks."""
    rng = np.random.default_rng(seed)
    if z0 is None:
        P0 = solve_lyapunov(m.C, m.D @ m.D.T)
        w, Q = np.linalg.eigh(as_sym(P0))
        z0 = (Q * np.sqrt(np.clip(w, 0.0, None))) @ rng.standard_normal(m.d_z)
    v = rng.standard_normal((n, m.d_v))
    z = _kernels.linear_recursion(m.C, v @ m.D.T, np.asarray(z0, dtype=float))
    y = m.mu + z @ m.A.T + v @ m.B.T
    return y, z, v


def vma_autocovariance(lam: np.ndarray, Sigma: np.ndarray, h: int) -> np.ndarray:
    """``Gamma_h = sum_j Lambda_{j+h} Sigma Lambda_j'`` with ``Lambda_0 = I``."""
    d = Sigma.shape[0]
    full = np.concatenate([np.eye(d)[None], np.asarray(lam)], axis=0)
    J = full.shape[0]
    return sum(full[j + h] @ Sigma @ full[j].T for j in range(J - h))


def is_finite_number(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)
