"""Monte Carlo experiments: estimates, t-test rejection rates and specification-test size."""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from .estimator import LossConfig, OptimizerOptions, optimize
from .exceptions import OTFError
from .inference import N_DRAWS, numeric_sensitivities, se_correct, se_robust, spec_test
from .ssm import ModelSpec, eval_model, simulate
from .varsieve import fit_var

log = logging.getLogger(__name__)

MC_COLUMNS = ("name", "true", "mean", "std", "rej_c", "rej_r", "len_c", "len_r")


def worker_count() -> int:
    """Worker processes from ``OTF_WORKERS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("OTF_WORKERS", "1")))
    except ValueError:
        return 1


def replication_seeds(master: int, reps: int) -> list:
    """Independent per-replication seeds spawned from ``master``."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(master).spawn(reps)]


@dataclass(frozen=True)
class MCDesign:
    """One Monte Carlo design.

    ``dgp`` simulates the data at ``dgp_theta``; ``model`` is fitted. The
    t-tests are centred at ``target`` (``dgp_theta`` when the two coincide).
    """

    dgp: ModelSpec
    dgp_theta: tuple
    model: ModelSpec
    n: int
    k: int
    target: Optional[tuple] = None
    cfg: LossConfig = field(default_factory=LossConfig)
    opts: OptimizerOptions = field(default_factory=OptimizerOptions)
    robust: bool = True
    spec_draws: int = N_DRAWS
    burn: int = 0

    @property
    def center(self) -> np.ndarray:
        t = self.target if self.target is not None else self.dgp_theta
        return np.asarray(t, dtype=float)


def replicate(design: MCDesign, seed: int) -> dict:
    """Simulate, fit and test once; failures are returned, not raised."""
    out = {"seed": seed, "error": None}
    try:
        m = eval_model(design.dgp, design.dgp_theta)
        data = simulate(m, design.n + design.burn, seed=seed).values[design.burn:]
        fit = fit_var(data, design.k)
        cfg = LossConfig(design.cfg.weighting, design.cfg.prior_penalty, design.k)
        est = optimize(design.model, fit, cfg, design.opts)
        bundle = numeric_sensitivities(design.model, est.theta_hat, fit, cfg, robust=design.robust)
        out["theta"] = est.theta_hat
        out["converged"] = est.converged
        out["se_c"] = se_correct(design.model, est.theta_hat, fit, cfg, bundle).se
        out["se_r"] = se_robust(design.model, est.theta_hat, fit, cfg, bundle).se if design.robust \
            else np.full(est.theta_hat.size, np.nan)
        st = spec_test(design.model, est.theta_hat, fit, cfg, bundle=bundle, n_draws=design.spec_draws,
                       seed=seed)
        out["stat"], out["crit_05"], out["crit_10"] = st.stat, st.crit_05, st.crit_10
    except OTFError as exc:
        out["error"] = f"{type(exc).__name__}: {exc}"
        log.warning("replication seed=%d failed: %s", seed, out["error"])
    return out


@dataclass
class MCResult:
    names: tuple
    true: np.ndarray
    theta: np.ndarray
    se_c: np.ndarray
    se_r: np.ndarray
    stat: np.ndarray
    crit_05: np.ndarray
    crit_10: np.ndarray
    converged: np.ndarray
    errors: list
    alpha: float = 0.05

    @property
    def ok(self) -> np.ndarray:
        return np.isfinite(self.theta).all(axis=1)

    def _rej(self, se):
        z = norm.ppf(1 - self.alpha / 2)
        t = np.abs(self.theta - self.true) / se
        return np.nanmean(np.where(self.ok[:, None], t > z, np.nan), axis=0)

    @property
    def rej_c(self):
        return self._rej(self.se_c)

    @property
    def rej_r(self):
        return self._rej(self.se_r)

    @property
    def spec_rej_05(self) -> float:
        return float(np.mean(self.stat[self.ok] > self.crit_05[self.ok]))

    @property
    def spec_rej_10(self) -> float:
        return float(np.mean(self.stat[self.ok] > self.crit_10[self.ok]))

    def table(self) -> list:
        z = norm.ppf(1 - self.alpha / 2)
        th = self.theta[self.ok]
        rows = []
        rc, rr = self.rej_c, self.rej_r
        for i, nm in enumerate(self.names):
            rows.append({
                "name": nm,
                "true": float(self.true[i]),
                "mean": float(np.mean(th[:, i])) if th.size else float("nan"),
                "std": float(np.std(th[:, i], ddof=1)) if th.shape[0] > 1 else float("nan"),
                "rej_c": float(rc[i]),
                "rej_r": float(rr[i]),
                "len_c": float(np.median(2 * z * self.se_c[self.ok, i])) if th.size else float("nan"),
                "len_r": float(np.median(2 * z * self.se_r[self.ok, i])) if th.size else float("nan"),
            })
        return rows

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(MC_COLUMNS)
            for r in self.table():
                w.writerow([r["name"]] + [f"{r[c]:.10g}" for c in MC_COLUMNS[1:]])
            w.writerow(["spec_test_rej_05", "", f"{self.spec_rej_05:.10g}"] + [""] * 5)
            w.writerow(["spec_test_rej_10", "", f"{self.spec_rej_10:.10g}"] + [""] * 5)
            w.writerow(["failed_replications", "", str(len(self.errors))] + [""] * 5)


def run_mc(design: MCDesign, reps: int, seed: int = 0, workers: Optional[int] = None,
           alpha: float = 0.05) -> MCResult:
    """Run ``reps`` replications; results do not depend on the worker count."""
    seeds = replication_seeds(seed, reps)
    workers = worker_count() if workers is None else max(1, int(workers))
    if workers > 1 and reps > 1:
        with ProcessPoolExecutor(workers) as ex:
            outs = list(ex.map(replicate, [design] * reps, seeds))
    else:
        outs = [replicate(design, s) for s in seeds]
    return collect(design, outs, alpha)


def collect(design: MCDesign, outs: Sequence[dict], alpha: float = 0.05) -> MCResult:
    d = design.model.d_theta
    nan_vec = np.full(d, np.nan)

    def stack(key, default):
        return np.array([o.get(key, default) if o["error"] is None else default for o in outs], dtype=float)

    return MCResult(
        names=design.model.param_names,
        true=design.center,
        theta=stack("theta", nan_vec).reshape(len(outs), d),
        se_c=stack("se_c", nan_vec).reshape(len(outs), d),
        se_r=stack("se_r", nan_vec).reshape(len(outs), d),
        stat=stack("stat", np.nan),
        crit_05=stack("crit_05", np.nan),
        crit_10=stack("crit_10", np.nan),
        converged=np.array([bool(o.get("converged", False)) for o in outs]),
        errors=[(o["seed"], o["error"]) for o in outs if o["error"] is not None],
        alpha=alpha,
    )
