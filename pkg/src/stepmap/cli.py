"""Command line entry point: ``stepmap <command> [options]``."""
from __future__ import annotations

import argparse
import csv
import os
import sys
import time

import numpy as np

from .config import ConfigError, ManifestError, PipelineConfig, RunManifest
from .episode import InitialCondition
from .maps import (StepSelector, build_dense_maps, compare_lipm, fit_step_selector,
                   read_reach_map, read_torque_map, select_step, swing_time_report,
                   train_safe_region, write_maps, write_swing_report)
from .paramgrid import (OutOfRangeError, ParamGrid, build_param_grid, query_params, write_timings,
                        write_traces)
from .svm import SafeRegionModel
from .validate import EmptyRegionError

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_PARTIAL = 0, 1, 2, 3

FILES = {
    "config": "config.json",
    "grid": "param_grid.csv",
    "traces": "bo_traces.csv",
    "timings": "node_timings.csv",
    "reach": "reach_map.csv",
    "torque": "torque_map.csv",
    "episodes": "dense_episodes.csv",
    "svm": "safe_region.json",
    "selector": "step_selector.json",
    "lipm": "lipm_compare.csv",
    "lipm_summary": "lipm_summary.csv",
    "swing": "swing_time.csv",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _emit(rows) -> None:
    """Print ``key,value`` lines on stdout."""
    w = csv.writer(sys.stdout, lineterminator="\n")
    for row in rows:
        w.writerow(row)


class Context:
    def __init__(self, args):
        cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
        self.config = cfg.with_overrides(workers=args.workers, seed=args.seed, out=args.out)
        self.out = self.config.out
        os.makedirs(self.out, exist_ok=True)
        self.manifest = RunManifest.open(self.out)
        self.args = args

    def path(self, key) -> str:
        return os.path.join(self.out, FILES[key])

    def require(self, *paths) -> None:
        for p in paths:
            if not os.path.exists(p):
                raise ManifestError(f"missing input {p}; run the producing command first")
        self.manifest.verify([p for p in paths if os.path.abspath(p).startswith(os.path.abspath(self.out))])

    def finish(self, command, outputs, inputs=(), **extra) -> None:
        self.manifest.config_hash = self.config.digest()
        self.manifest.seed = self.config.seed
        self.manifest.record(command, outputs, inputs, **extra)
        self.manifest.save()


def cmd_optimize(ctx: Context) -> int:
    cfg = ctx.config
    ctx.config.save(ctx.path("config"), runtime=False)
    run = build_param_grid(cfg.phase1.velocities, cfg.phase1.positions, cfg.budget,
                           workers=cfg.workers, config=cfg.episode_config(), seed=cfg.seed,
                           bounds=cfg.bounds, strict=False)
    run.grid.write_csv(ctx.path("grid"))
    write_traces(run, ctx.path("traces"), cfg.bounds)
    write_timings(run, ctx.path("timings"))
    failed = [[int(i), int(j), f"{type(e).__name__}: {e}"] for (i, j), e in sorted(run.failures.items())]
    ctx.manifest.timings = {f"{i},{j}": r.seconds for (i, j), r in sorted(run.results.items())}
    ctx.finish("optimize", [ctx.path(k) for k in ("config", "grid", "traces", "timings")],
               failed_nodes=failed)
    _emit([("nodes", run.grid.shape[0] * run.grid.shape[1]), ("failed", len(failed)),
           ("episodes_per_node", cfg.budget.total), ("grid", ctx.path("grid"))])
    for i, j, msg in failed:
        print(f"failed node ({i}, {j}): {msg}", file=sys.stderr)
    return EXIT_PARTIAL if failed else EXIT_OK


def _load_grid(ctx, path=None) -> ParamGrid:
    path = path or ctx.path("grid")
    ctx.require(path)
    grid = ParamGrid.read_csv(path)
    if not grid.complete:
        raise ConfigError(f"{path} has unpopulated nodes")
    return grid


def cmd_map(ctx: Context) -> int:
    cfg = ctx.config
    gpath = ctx.args.grid or ctx.path("grid")
    grid = _load_grid(ctx, gpath)
    if (grid.shape != (cfg.phase1.n_v, cfg.phase1.n_s)
            or not np.allclose(grid.velocities, cfg.phase1.velocities, rtol=0, atol=1e-12)
            or not np.allclose(grid.positions, cfg.phase1.positions, rtol=0, atol=1e-12)):
        raise ConfigError("parameter grid axes do not match the configured phase-1 axes")
    dm = build_dense_maps(grid, cfg.phase2.velocities, cfg.phase2.positions,
                          cfg.episode_config(), workers=cfg.workers)
    write_maps(dm.reach, dm.torque, ctx.path("reach"), ctx.path("torque"))
    dm.write_records(ctx.path("episodes"))
    ctx.finish("map", [ctx.path(k) for k in ("reach", "torque", "episodes")], [gpath])
    n = dm.reach.reachable.size
    _emit([("cells", n), ("reachable", int(dm.reach.reachable.sum())),
           ("reach_map", ctx.path("reach")), ("torque_map", ctx.path("torque"))])
    return EXIT_OK


def cmd_fit(ctx: Context) -> int:
    cfg = ctx.config
    ctx.require(ctx.path("reach"), ctx.path("torque"))
    reach = read_reach_map(ctx.path("reach"))
    tmap = read_torque_map(ctx.path("torque"))
    sr = cfg.safe_region
    model = train_safe_region(reach, sr.class_weights, sr.C, sr.gamma, sr.tol)
    sel = fit_step_selector(tmap, cfg.selector_degree)
    model.save(ctx.path("svm"))
    sel.save(ctx.path("selector"))
    ctx.finish("fit", [ctx.path("svm"), ctx.path("selector")], [ctx.path("reach"), ctx.path("torque")])
    X, lab = reach.points()
    pred = model.decision_function(X) > 0
    rows = [("support_vectors", len(model.dual_coef)), ("gamma", repr(model.gamma)),
            ("recall_reachable", repr(float(pred[lab].mean())))]
    for name, st in (("position", sel.position_residual), ("torque", sel.torque_residual)):
        rows += [(f"{name}_residual_{k}", repr(v) if isinstance(v, float) else v)
                 for k, v in st.as_dict().items()]
    _emit(rows)
    return EXIT_OK


def _load_models(ctx):
    ctx.require(ctx.path("svm"), ctx.path("selector"))
    return SafeRegionModel.load(ctx.path("svm")), StepSelector.load(ctx.path("selector"))


def cmd_query(ctx: Context) -> int:
    grid = _load_grid(ctx, ctx.args.grid)
    ctx.require(ctx.path("selector"))
    sel = StepSelector.load(ctx.path("selector"))
    v = ctx.args.vel
    t0 = time.perf_counter()
    try:
        s = select_step(sel, v)
        p = query_params(grid, InitialCondition(v, s))
    except OutOfRangeError as exc:
        lo = max(sel.v_range[0], grid.velocities[0])
        hi = min(sel.v_range[1], grid.velocities[-1])
        print(f"{exc}; valid velocity range is [{lo}, {hi}]", file=sys.stderr)
        return EXIT_INVALID
    ms = 1e3 * (time.perf_counter() - t0)
    _emit([("v0", repr(v)), ("s_des", repr(s)), ("t_min", repr(p.t_min)), ("s_max", repr(p.s_max)),
           ("t_swing_start", repr(p.t_swing_start)), ("s_speed", repr(p.s_speed)),
           ("query_ms", f"{ms:.4f}")])
    return EXIT_OK


def cmd_validate(ctx: Context) -> int:
    from .validate import validate_reach, validate_step_select
    cfg = ctx.config
    grid = _load_grid(ctx)
    model, sel = _load_models(ctx)
    mode = ctx.args.mode
    vc = cfg.validation
    if mode == "reach":
        n = ctx.args.n if ctx.args.n is not None else vc.n_reach
        rep = validate_reach(grid, model, n, cfg.seed, cfg.episode_config(), vc.max_draws_per_trial)
    else:
        n = ctx.args.n if ctx.args.n is not None else vc.n_step
        rep = validate_step_select(grid, sel, model, n, cfg.seed, cfg.episode_config(),
                                   vc.max_draws_per_trial)
    path = os.path.join(ctx.out, f"validation_{mode}.csv")
    rep.write_csv(path)
    ctx.finish(f"validate-{mode}", [path], [ctx.path("grid"), ctx.path("svm"), ctx.path("selector")])
    _emit([("mode", mode), ("trials", rep.n), ("successes", rep.successes),
           ("success_fraction", repr(rep.success_fraction)), ("report", path)])
    return EXIT_OK


def cmd_render(ctx: Context) -> int:
    from . import render
    cfg = ctx.config
    what = ctx.args.what
    deltas = tuple(ctx.args.delta) if ctx.args.delta else cfg.near_optimal_deltas
    inputs = []
    sel = None
    if what in ("torque", "swing-time") and os.path.exists(ctx.path("selector")):
        ctx.require(ctx.path("selector"))
        sel = StepSelector.load(ctx.path("selector"))
        inputs.append(ctx.path("selector"))
    if what == "reach":
        ctx.require(ctx.path("reach"))
        inputs.append(ctx.path("reach"))
        fig = render.fig_reach(read_reach_map(ctx.path("reach")))
    elif what in ("torque", "near-opt"):
        ctx.require(ctx.path("torque"))
        inputs.append(ctx.path("torque"))
        tmap = read_torque_map(ctx.path("torque"))
        fig = render.fig_torque(tmap, sel) if what == "torque" else render.fig_near_opt(tmap, deltas)
    elif what == "safe-region":
        ctx.require(ctx.path("reach"), ctx.path("svm"))
        inputs += [ctx.path("reach"), ctx.path("svm")]
        fig = render.fig_safe_region(SafeRegionModel.load(ctx.path("svm")),
                                     read_reach_map(ctx.path("reach")),
                                     cfg.safe_region.render_factor)
    else:
        grid = _load_grid(ctx)
        inputs.append(ctx.path("grid"))
        rows = swing_time_report(grid, sel)
        write_swing_report(rows, ctx.path("swing"))
        fig = render.fig_swing_time(grid, sel)
    stem = os.path.join(ctx.out, f"fig_{what}")
    outs = list(render.save_figure(fig, stem))
    if what == "swing-time":
        outs.append(ctx.path("swing"))
    ctx.finish(f"render-{what}", outs, inputs)
    _emit([("figure", p) for p in outs])
    return EXIT_OK


def cmd_lipm_compare(ctx: Context) -> int:
    cfg = ctx.config
    grid = _load_grid(ctx)
    ctx.require(ctx.path("torque"))
    tmap = read_torque_map(ctx.path("torque"))
    sel = StepSelector.load(ctx.path("selector")) if os.path.exists(ctx.path("selector")) else None
    cmp_ = compare_lipm(tmap, sel, grid, cfg.biped.z_nom, cfg.biped.gravity)
    cmp_.write_csv(ctx.path("lipm"))
    summary = cmp_.summary()
    with open(ctx.path("lipm_summary"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("statistic", "value"))
        for k, v in summary.items():
            w.writerow((k, repr(v) if isinstance(v, float) else v))
    ctx.finish("lipm-compare", [ctx.path("lipm"), ctx.path("lipm_summary")],
               [ctx.path("grid"), ctx.path("torque")])
    _emit([(k, repr(v) if isinstance(v, float) else v) for k, v in summary.items()])
    return EXIT_OK


COMMANDS = {"optimize": cmd_optimize, "map": cmd_map, "fit": cmd_fit, "query": cmd_query,
            "validate": cmd_validate, "render": cmd_render, "lipm-compare": cmd_lipm_compare}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON pipeline config (defaults when omitted)")
    common.add_argument("--workers", type=int, help="worker processes")
    common.add_argument("--seed", type=int, help="master random seed")
    common.add_argument("--out", help="output directory")
    parser = _Parser(prog="stepmap", description="Energy-aware step maps for a planar biped.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("optimize", parents=[common], help="phase 1: optimize the parameter grid")
    p = sub.add_parser("map", parents=[common], help="phase 2: dense reach and torque maps")
    p.add_argument("--grid", help="parameter grid CSV (default: OUT/param_grid.csv)")
    sub.add_parser("fit", parents=[common], help="train the safe region and step selector")
    p = sub.add_parser("query", parents=[common], help="optimal step and parameters for a velocity")
    p.add_argument("--vel", type=float, required=True, help="initial CoM velocity [m/s]")
    p.add_argument("--grid", help="parameter grid CSV (default: OUT/param_grid.csv)")
    p = sub.add_parser("validate", parents=[common], help="simulate seeded validation trials")
    p.add_argument("--mode", choices=("reach", "step-select"), required=True)
    p.add_argument("--n", type=int, help="number of trials")
    p = sub.add_parser("render", parents=[common], help="write SVG and PPM figures")
    p.add_argument("--what", choices=("reach", "torque", "near-opt", "safe-region", "swing-time"),
                   required=True)
    p.add_argument("--delta", type=float, action="append", help="near-optimal fraction (repeatable)")
    sub.add_parser("lipm-compare", parents=[common], help="compare against the LIPM capture point")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: " + ", ".join(COMMANDS))
        if args.workers is not None and args.workers < 1:
            raise UsageError("--workers must be >= 1")
        if getattr(args, "n", None) is not None and args.n < 1:
            raise UsageError("--n must be >= 1")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        ctx = Context(args)
        return COMMANDS[args.command](ctx)
    except (ConfigError, ManifestError, OutOfRangeError, ValueError, EmptyRegionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
