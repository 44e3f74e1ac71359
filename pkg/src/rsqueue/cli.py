"""Command-line front end.

    rsqueue <command> [--config PATH] [--seed N] [--workers N] [--out DIR]

Exit codes: 0 ok, 1 validation failure, 2 configuration error,
3 violated model precondition (the computed threshold is printed).
"""
from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import COMMANDS, ConfigError, config_hash, load_file, resolve
from .core import Grid, RandomStream, ScatterModel, ServiceModel, map_blocks
from .errors import DomainError, PreconditionError, RootNotFoundError
from .io import ResultTable, write_json, write_meta

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_PRECONDITION = 0, 1, 2, 3


def _model(cls, doc, key):
    try:
        return cls.from_dict(doc)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def _service(cfg) -> ServiceModel:
    return _model(ServiceModel, cfg["service"], "service")


def _scatter(cfg) -> ScatterModel:
    return _model(ScatterModel, cfg["scatter"], "scatter")


# simulate ------------------------------------------------------------------------------------------

def _simulate_block(count, stream, service, scatter, n, c, grid):
    from .queue import simulate_workload

    rng = stream.generator()
    return np.array([simulate_workload(service, scatter, n, c, grid, rng).path.values for _ in range(count)])


def cmd_simulate(cfg, meta):
    from .limits import fluid_workload_curve

    service, scatter = _service(cfg), _scatter(cfg)
    n = cfg["n"]
    c_rate = cfg.get("c_rate", service.mean)
    c = n * c_rate + cfg["a"] * math.sqrt(n)
    grid = Grid(0.0, cfg["t_end"], cfg["points"] - 1)
    # one stream per replication, so paths do not depend on the worker count
    parts = map_blocks(_simulate_block, cfg["reps"], cfg["seed"], service, scatter, n, c, grid,
                       workers=cfg["workers"], block=1)
    paths = np.vstack(parts) / n
    fluid = fluid_workload_curve(grid.times, service, scatter, c_rate, points=2000)
    keep = min(cfg["keep_paths"], cfg["reps"])
    path_cols = {"time": grid.times, **{f"w_over_n_{k}": paths[k] for k in range(keep)}}
    summary = {"time": grid.times, "mean_w_over_n": paths.mean(axis=0),
               "std_w_over_n": paths.std(axis=0, ddof=1) if cfg["reps"] > 1 else np.zeros(grid.times.size),
               "fluid": fluid}
    stats = {"n": n, "c": c, "reps": cfg["reps"], "sup_w_over_n": paths.max(),
             "sup_fluid_gap": np.abs(paths - fluid).max()}
    return [ResultTable.from_columns("paths", path_cols, meta),
            ResultTable.from_columns("summary", summary, meta),
            ResultTable.from_columns("stats", stats, meta)]


def cmd_fluid(cfg, meta):
    from .limits import fluid_workload_curve

    service, scatter = _service(cfg), _scatter(cfg)
    rho = cfg.get("rho", service.mean)
    times = np.linspace(0.0, cfg["t_end"], cfg["points"])
    return [ResultTable.from_columns("fluid", {"time": times,
                                               "fluid": fluid_workload_curve(times, service, scatter, rho)}, meta)]


# transient -----------------------------------------------------------------------------------------

def cmd_transient(cfg, meta):
    from .limits import Regime, diffusion_workload_at
    from .transient import (
        ReflectedLawParams,
        reflected_bridge_cdf,
        reflected_diffusion_cdf_closed,
        reflected_diffusion_cdf_quadrature,
    )

    service = _service(cfg)
    t, d = cfg["t"], cfg["d"]
    lam = np.linspace(0.0, cfg["lam_max"], cfg["lam_points"])
    params = ReflectedLawParams.from_service(service, t, lam, d)
    closed = reflected_diffusion_cdf_closed(params)
    quad = reflected_diffusion_cdf_quadrature(params)
    scale = params.scale
    bridge = reflected_bridge_cdf(lam / scale, t, d / scale)
    cols = {"lam": lam, "closed": closed, "quadrature": quad, "abs_diff": np.abs(closed - quad),
            "bridge": bridge}
    if cfg["mc_paths"] > 0:
        w = np.sort(diffusion_workload_at(Regime(service, a=d), t, cfg["mc_paths"],
                                          RandomStream(cfg["seed"], 0), cells=cfg["cells"]))
        mc = np.searchsorted(w, lam, side="right") / w.size
        cols.update(mc=mc, mc_abs_diff=np.abs(mc - quad))
    return [ResultTable.from_columns("transient", cols, meta)]


# tail ----------------------------------------------------------------------------------------------

def cmd_tail(cfg, meta):
    from . import tails

    rows = []
    for k, x in enumerate(np.atleast_1d(cfg["x"])):
        prob = tails.TailProblem(cfg["c"], float(x), cfg["scv"])
        interior = prob.regime == "interior"
        A = tails.curvature_A(prob) if interior else tails.curvature_A_one_sided(prob)
        level = float(tails.m_curve(tails.t_star(prob), prob))
        row = dict(c=prob.c, x=prob.x, scv=prob.scv, t_star=tails.t_star(prob),
                   t_star_numeric=tails.t_star_numeric(prob), interior=float(interior), A=A,
                   A_numeric=tails.curvature_numeric(prob) if interior else math.nan, level=level,
                   asymptotic=tails.tail_prob_asymptotic(level, prob), exact=tails.tail_prob_exact(prob))
        if cfg["mc_paths"] > 0:
            row["mc"], row["mc_se"] = tails.tail_prob_mc(prob, cfg["mc_paths"], RandomStream(cfg["seed"], k))
        rows.append(row)
    cols = list(rows[0])
    return [ResultTable("tail", cols, np.array([[r[c] for c in cols] for r in rows]), meta)]


# large deviations ----------------------------------------------------------------------------------

def _ldp_problem(cfg):
    from .ldp import LdpProblem

    return LdpProblem(cfg["t"], cfg["x"], cfg["c_rate"], _service(cfg), _scatter(cfg))


def _rare_path_table(problem, twisted, points, meta, mc_reps=0, seed=0):
    from .ldp import rare_event_path, twisted_sample

    s = np.linspace(0.0, problem.t, points)
    cols = {"s": s, "rare_path": rare_event_path(s, twisted, problem)}
    if mc_reps > 0:
        times, works = twisted_sample(twisted, problem, mc_reps, RandomStream(seed, 0))
        order = np.argsort(times, kind="stable")
        cum = np.concatenate(([0.0], np.cumsum(works[order])))
        cols["mc"] = cum[np.searchsorted(times[order], s, side="right")] / mc_reps
    return ResultTable.from_columns("rare_path", cols, meta)


def _minimizer_table(profile, twisted, meta):
    return ResultTable.from_columns("minimizer", {
        "t_star": profile.t_star, "rate_star": profile.rate_star, "theta_star": twisted.theta,
        "v_star": twisted.v, "max_residual": float(np.max(profile.residual))}, meta)


def cmd_ldp(cfg, meta):
    from .ldp import TwistedLaw, rate_profile

    problem = _ldp_problem(cfg)
    profile = rate_profile(problem, cfg["points"])
    twisted = TwistedLaw.from_problem(problem, profile.t_star)
    return [ResultTable.from_columns("rate_function", {"s": profile.s, "rate": profile.rate}, meta),
            _rare_path_table(problem, twisted, cfg["points"], meta),
            _minimizer_table(profile, twisted, meta)]


def cmd_rare_path(cfg, meta):
    from .ldp import TwistedLaw, rate_profile

    problem = _ldp_problem(cfg)
    profile = rate_profile(problem, cfg["points"])
    twisted = TwistedLaw.from_problem(problem, profile.t_star)
    return [_rare_path_table(problem, twisted, cfg["points"], meta, cfg["mc_reps"], cfg["seed"]),
            _minimizer_table(profile, twisted, meta)]


def cmd_is_estimate(cfg, meta):
    from .ldp import TwistedLaw, decay_rate, is_estimate, rate_minimize
    from .queue import crude_tail_estimate

    problem = _ldp_problem(cfg)
    t_star, rate_star = rate_minimize(problem, cfg["points"])
    twisted = TwistedLaw.from_problem(problem, t_star)
    est = is_estimate(problem, cfg["n"], cfg["reps"], seed=cfg["seed"], workers=cfg["workers"], twisted=twisted)
    row = {"n": cfg["n"], "reps": est.reps, "p_hat": est.p_hat, "std_err": est.std_err,
           "lr_mean": est.lr_mean, "lr_std_err": est.lr_std_err, "decay_rate": decay_rate(est, cfg["n"]),
           "t_star": t_star, "rate_star": rate_star}
    if cfg["crude_reps"] > 0:
        # a different master seed keeps crude draws independent of the IS draws
        crude = crude_tail_estimate(problem, cfg["n"], cfg["crude_reps"], seed=cfg["seed"] + 1,
                                    workers=cfg["workers"])
        row.update(crude_p=crude.p_hat, crude_std_err=crude.std_err)
    return [ResultTable.from_columns("is_estimate", row, meta)]


# periodic ------------------------------------------------------------------------------------------

def cmd_periodic(cfg, meta):
    from .periodic import (
        PeriodicGaussParams,
        periodic_steady_cdf,
        periodic_transient_cdf,
        periodic_workload_at,
        phi_steady,
    )

    params = PeriodicGaussParams(cfg["a"], cfg["mean"], cfg["variance"], cfg["t"])
    lam = np.linspace(0.0, cfg["lam_max"], cfg["lam_points"])
    steady = (periodic_steady_cdf(lam, params) if params.has_steady_state
              else np.full(lam.size, np.nan))
    cols = {"lam": lam, "transient": periodic_transient_cdf(lam, params), "steady": steady,
            "phi": phi_steady(lam, params.a, params.second_moment, params.variance)}
    if cfg["mc_paths"] > 0:
        w = np.sort(periodic_workload_at(params, params.t, cfg["mc_paths"], RandomStream(cfg["seed"], 0),
                                         cells_per_period=cfg["cells_per_period"]))
        cols["mc"] = np.searchsorted(w, lam, side="right") / w.size
    return [ResultTable.from_columns("periodic", cols, meta)]


# validate ------------------------------------------------------------------------------------------

def cmd_validate(cfg, meta):
    from .validation import apply_tolerance_overrides, run_criterion

    results = []
    for k in cfg["criteria"]:
        res = run_criterion(k, cfg["scale"], cfg["seed"], cfg["workers"])
        apply_tolerance_overrides([res], cfg["tolerances"])
        print(res.summary(), flush=True)
        results.append(res)
    verdict = {"artifact": "rsqueue", "version": __version__, "seed": cfg["seed"], "scale": cfg["scale"],
               "config_hash": meta["config_hash"], "passed": all(r.passed for r in results),
               "criteria": [r.to_dict() for r in results]}
    return verdict


HANDLERS = {
    "simulate": cmd_simulate, "fluid": cmd_fluid, "transient": cmd_transient, "tail": cmd_tail,
    "ldp": cmd_ldp, "rare-path": cmd_rare_path, "is-estimate": cmd_is_estimate, "periodic": cmd_periodic,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsqueue", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rsqueue {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("--out", type=str, help="output directory")
    return parser


def run(argv=None, environ=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_cfg = load_file(args.config) if args.config else {}
        cfg = resolve(args.command, file_cfg, {"seed": args.seed, "workers": args.workers, "out": args.out},
                      environ)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    meta = {"artifact": "rsqueue", "version": __version__, "command": args.command, "seed": cfg["seed"],
            "config_hash": config_hash(cfg)}
    out = Path(cfg["out"])
    started = time.time()
    clock = time.perf_counter()
    try:
        result = HANDLERS[args.command](cfg, meta)
    except PreconditionError as exc:
        extra = f" (threshold {exc.threshold:.17g})" if exc.threshold is not None else ""
        print(f"precondition violated: {exc}{extra}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ConfigError, DomainError, RootNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    wall = time.perf_counter() - clock
    if args.command == "validate":
        path = write_json(out / "verdict.json", result)
        write_meta(out, meta, cfg, [path], wall, started)
        if not result["passed"]:
            failing = [f"{c['number']} ({c['name']})" for c in result["criteria"] if not c["passed"]]
            print("failing criteria: " + ", ".join(failing), file=sys.stderr)
            return EXIT_VALIDATION
        return EXIT_OK
    files = [table.write_csv(out) for table in result]
    write_meta(out, meta, cfg, files, wall, started)
    for f in files:
        print(f)
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
