"""Command-line interface: ``otfilter {filter,estimate,test,mc,pfilter} --config run.json``.

Exit codes: 0 on success, 2 for configuration errors, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import RunConfig, build_model
from .estimator import filter_at, optimize
from .exceptions import ConfigError, NumericalError, OTFError
from .inference import N_DRAWS, numeric_sensitivities, se_correct, se_robust, spec_test
from .montecarlo import MC_COLUMNS, MCDesign, run_mc
from .otf import kalman_filter
from .particle import GaussianPredictive, LinearGaussianSampler, run_particle_otf
from .ssm import eval_model, solve_steady_kf
from .varsieve import fit_trend_ar, fit_var

log = logging.getLogger("otfilter")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _print_table(header, rows) -> None:
    cells = [list(map(str, header))] + [[f"{v:.4f}" if isinstance(v, float) else str(v) for v in r] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(header))]
    for c in cells:
        print("  ".join(x.rjust(w) for x, w in zip(c, widths)))


def _outdir(cfg: RunConfig) -> Path:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def _aux_fit(cfg: RunConfig, data):
    opts = cfg.section("filter")
    if opts.get("aux", "var") == "trend_ar":
        return fit_trend_ar(data, opts.get("n_cosines", 4), opts.get("ar_lags", cfg.lags(data)))
    return fit_var(data, cfg.lags(data))


def _names(data, spec):
    return data.names, tuple(getattr(spec, "state_names", ()))


def cmd_filter(cfg: RunConfig) -> dict:
    """Coupled series and filtered states at a fixed ``theta``."""
    spec = cfg.model()
    data = cfg.data()
    theta = cfg.theta(spec)
    fit = _aux_fit(cfg, data)
    names, states = _names(data, spec)
    out = filter_at(spec, theta, fit, require_stationary=spec.estimable, names=names, state_names=states)
    d = _outdir(cfg)
    out.to_csv(d / "coupled.csv")
    W = cfg.loss(getattr(fit, "k", 1)).weight_matrix(data.values)
    u = out.y - data.values
    summary = {
        "model": spec.name,
        "theta": spec.theta_dict(theta),
        "r2": dict(zip(names, map(float, out.r2))),
        "qn": float(np.einsum("ti,ij,tj->", u, W, u) / len(u)),
        "state_mean": dict(zip(states or range(out.nu_filtered.shape[1]),
                               map(float, out.nu_filtered.mean(axis=0)))),
    }
    if cfg.section("filter").get("compare_kf", False):
        m = eval_model(spec, theta, require_stationary=spec.estimable)
        kf = kalman_filter(m, data.values, spec.initial_state(m, data.values), steady=solve_steady_kf(m))
        with (d / "kf.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["period"] + [f"state_{s}" for s in (states or range(m.d_z))])
            for t, row in enumerate(kf.nu_filtered):
                w.writerow([t + 1] + [f"{x:.17g}" for x in row])
        summary["kf_state_mean"] = dict(zip(states or range(m.d_z), map(float, kf.nu_filtered.mean(axis=0))))
    _write_json(d / "summary.json", {k: {str(a): b for a, b in v.items()} if isinstance(v, dict) else v
                                     for k, v in summary.items()})
    return summary


def _estimate(cfg: RunConfig, spec, data):
    if not spec.estimable:
        raise ConfigError(f"model {spec.name!r} is not estimable (non-stationary)")
    k = cfg.lags(data)
    fit = fit_var(data, k)
    loss = cfg.loss(k)
    res = optimize(spec, fit, loss, cfg.optimizer(spec))
    return fit, loss, res


def cmd_estimate(cfg: RunConfig) -> dict:
    """Estimates with correct-specification and robust standard errors."""
    spec = cfg.model()
    data = cfg.data()
    fit, loss, res = _estimate(cfg, spec, data)
    mode = cfg.get("standard_errors", "both")
    sd_c = sd_r = np.full(spec.d_theta, np.nan)
    if mode != "none":
        bundle = numeric_sensitivities(spec, res.theta_hat, fit, loss, robust=mode == "both")
        sd_c = se_correct(spec, res.theta_hat, fit, loss, bundle).se
        if mode == "both":
            sd_r = se_robust(spec, res.theta_hat, fit, loss, bundle).se
    d = _outdir(cfg)
    doc = res.as_dict()
    doc.update({"model": spec.name, "k": fit.k, "sd_c": dict(zip(spec.param_names, map(float, sd_c))),
                "sd_r": dict(zip(spec.param_names, map(float, sd_r))),
                "r2": dict(zip(data.names, map(float, res.r2))),
                "note": "standard errors ignore the prior penalty" if loss.prior_penalty else ""})
    _write_json(d / "estimates.json", doc)
    with (d / "estimates.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "est", "sd_c", "sd_r"])
        for nm, est, c, r in zip(spec.param_names, res.theta_hat, sd_c, sd_r):
            w.writerow([nm, f"{est:.10g}", f"{c:.10g}", f"{r:.10g}"])
    _print_table(["", "est", "sd_c", "sd_r"],
                 [[nm, float(e), float(c), float(r)] for nm, e, c, r in zip(spec.param_names, res.theta_hat, sd_c, sd_r)])
    if res.trace:
        with (d / "trace.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["step", *spec.param_names, "objective"])
            for i, (x, f) in enumerate(res.trace):
                w.writerow([i, *(f"{v:.10g}" for v in x), f"{f:.10g}"])
    return doc


def cmd_test(cfg: RunConfig) -> dict:
    """Specification test, full vector and per variable."""
    spec = cfg.model()
    data = cfg.data()
    if "estimates" in cfg.raw or "theta" in cfg.raw:
        k = cfg.lags(data)
        fit, loss = fit_var(data, k), cfg.loss(k)
        theta = cfg.theta(spec)
    else:
        fit, loss, res = _estimate(cfg, spec, data)
        theta = res.theta_hat
    opts = cfg.section("test")
    n_draws = opts.get("n_draws", N_DRAWS)
    bundle = numeric_sensitivities(spec, theta, fit, loss)
    variables = [None]
    if opts.get("per_variable", True) and fit.d > 1:
        variables += list(range(fit.d))
    rows = []
    for j in variables:
        r = spec_test(spec, theta, fit, loss, variable=j, bundle=bundle, n_draws=n_draws, seed=cfg.seed)
        row = r.as_dict()
        row["variable"] = "all" if j is None else data.names[j]
        rows.append(row)
    doc = {"model": spec.name, "theta": spec.theta_dict(theta), "n": fit.n, "k": fit.k, "rows": rows}
    _print_table(["", "stat", "10%", "5%", "p"],
                 [[r["variable"], r["stat"], r["crit_10"], r["crit_05"], r["p_value"]] for r in rows])
    _write_json(_outdir(cfg) / "test.json", doc)
    return doc


def cmd_mc(cfg: RunConfig) -> dict:
    """Monte Carlo table: mean, std, rejection rates and interval lengths."""
    spec = cfg.model()
    mc = cfg.section("mc")
    dgp = build_model(mc["dgp"]) if "dgp" in mc else spec
    dgp_theta = dgp.theta_from_dict(mc.get("dgp_theta", mc["theta"]))
    target = spec.theta_from_dict(mc["theta"])
    for sp, th in ((dgp, dgp_theta), (spec, target)):
        if not sp.in_bounds(th):
            raise ConfigError(f"theta {th.tolist()} violates the bounds of {sp.name!r}")
    lags = cfg.get("lags", 4)
    if not isinstance(lags, int):
        raise ConfigError("mc needs an integer lag order")
    design = MCDesign(dgp, tuple(dgp_theta), spec, int(mc["n"]), lags, tuple(target), cfg.loss(lags),
                      cfg.optimizer(spec), mc.get("robust", True), mc.get("n_draws", N_DRAWS))
    res = run_mc(design, int(mc["reps"]), seed=cfg.seed, alpha=mc.get("alpha", 0.05))
    d = _outdir(cfg)
    res.to_csv(d / "mc.csv")
    doc = {"rows": res.table(), "spec_test_rej_05": res.spec_rej_05, "spec_test_rej_10": res.spec_rej_10,
           "failures": [{"seed": s, "error": e} for s, e in res.errors]}
    _write_json(d / "mc.json", doc)
    _print_table(MC_COLUMNS, [[r[c] for c in MC_COLUMNS] for r in doc["rows"]])
    print(f"spec test rejection: {res.spec_rej_10:.3f} (10%), {res.spec_rej_05:.3f} (5%)")
    return doc


def cmd_pfilter(cfg: RunConfig) -> dict:
    """Particle transport filter for linear Gaussian models with measurement noise."""
    spec = cfg.model()
    data = cfg.data()
    theta = cfg.theta(spec)
    m = eval_model(spec, theta, require_stationary=spec.estimable)
    po = cfg.section("particle")
    kf = solve_steady_kf(m)
    nu0 = spec.initial_state(m, data.values)
    model = LinearGaussianSampler(m, nu0, kf.V)
    if po.get("aux", "var") == "model":
        aux = GaussianPredictive.from_model(m, data.values, nu0)
    else:
        aux = GaussianPredictive.from_fit(fit_var(data, cfg.lags(data)))
    names, states = _names(data, spec)
    out = run_particle_otf(model, aux, B=po.get("B", 2000), eps=po.get("eps"),
                           eps_scale=po.get("eps_scale", 0.1), ess_min=po.get("ess_min"), seed=cfg.seed,
                           max_iters=po.get("max_iters", 500), tol=po.get("tol", 1e-6), names=names,
                           state_names=states)
    d = _outdir(cfg)
    out.to_csv(d / "coupled.csv")
    ex = out.extras
    with (d / "ess.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["period", "ess", "eps", "sinkhorn_err", "sinkhorn_flag"])
        for t in range(out.n):
            w.writerow([t + 1, f"{ex['ess'][t]:.10g}", f"{ex['eps'][t]:.10g}", f"{ex['sinkhorn_err'][t]:.3e}",
                        int(ex["sinkhorn_flag"][t])])
    summary = {"model": spec.name, "theta": spec.theta_dict(theta), "r2": dict(zip(names, map(float, out.r2))),
               "sinkhorn_flags": int(np.sum(ex["sinkhorn_flag"]))}
    _write_json(d / "summary.json", summary)
    return summary


COMMANDS = {"filter": cmd_filter, "estimate": cmd_estimate, "test": cmd_test, "mc": cmd_mc,
            "pfilter": cmd_pfilter}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="otfilter", description="Optimal transport filtering and estimation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        s = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        s.add_argument("--config", required=True, help="JSON run configuration")
        s.add_argument("--seed", type=int, help="override the master seed")
        s.add_argument("--lags", help="override the lag order (k or auto(k_max,bic))")
        s.add_argument("--out", help="override the output directory")
    return p


def _lags_override(val: Optional[str]):
    if val is None:
        return None
    return int(val) if val.strip().isdigit() else val


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {"seed": args.seed, "lags": _lags_override(args.lags),
                     "output": str(Path(args.out).resolve()) if args.out else None}
        cfg = RunConfig.from_file(args.config, overrides)
        COMMANDS[args.command](cfg)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        if isinstance(exc, NumericalError):
            print(f"otfilter: numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        print(f"otfilter: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OTFError as exc:
        print(f"otfilter: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
