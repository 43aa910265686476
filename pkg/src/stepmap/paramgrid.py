"""Per-node gait parameter optimization and the interpolated parameter map."""
from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bayesopt import BOBudget, TraceRow, maximize
from .episode import EpisodeConfig, InitialCondition, run_episode
from .trajectory import PARAM_BOUNDS, PARAM_NAMES, GaitParams, bounds_arrays

GRID_FIELDS = ("v0", "s_des") + PARAM_NAMES + ("objective",)


class OutOfRangeError(ValueError):
    """Query outside the region covered by a grid or model."""


class NodeError(RuntimeError):
    """Failure while optimizing or simulating one grid node."""

    def __init__(self, i: int, j: int, cause: BaseException):
        super().__init__(f"node ({i}, {j}) failed: {type(cause).__name__}: {cause}")
        self.i, self.j, self.cause = i, j, cause


def check_axis(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} axis is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} axis has non-finite values")
    if np.any(np.diff(arr) <= 0):
        raise ValueError(f"{name} axis must be strictly increasing")
    return arr


def node_seed(master: int, i: int, j: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master), int(i), int(j)])


@dataclass
class PairResult:
    params: GaitParams
    objective: float
    trace: list[TraceRow]
    seconds: float
    n_terminated_early: int = 0


def optimize_pair(ic: InitialCondition, budget: BOBudget, config: EpisodeConfig | None = None,
                  seed=0, bounds: dict | None = None, fn=None) -> PairResult:
    """Bayesian optimization of the gait parameters for one initial condition.

    Parameters are searched in the unit box and mapped affinely onto
    ``bounds``.  ``fn`` replaces the episode objective with a function of the
    normalized parameter vector, which is handy for synthetic checks.
    """
    config = EpisodeConfig() if config is None else config
    bounds = PARAM_BOUNDS if bounds is None else bounds
    lo, hi = bounds_arrays(bounds)
    rng = np.random.default_rng(seed)
    early = [0]

    def evaluate(u):
        if fn is not None:
            return fn(u)
        p = GaitParams.from_array(lo + u * (hi - lo))
        out = run_episode(ic, p, config, bounds=bounds, keep_logs=False)
        if out.t_term < out.t_total - 0.5 * config.biped.dt:
            early[0] += 1
        return out.objective

    t0 = time.perf_counter()
    u, best, trace = maximize(evaluate, len(PARAM_NAMES), budget, rng)
    p = GaitParams.from_array(np.clip(lo + u * (hi - lo), lo, hi))
    return PairResult(p, best, trace, time.perf_counter() - t0, early[0])


@dataclass
class ParamGrid:
    """Optimal gait parameters on a (velocity, step position) grid."""

    velocities: np.ndarray
    positions: np.ndarray
    # shape (n_v, n_s, 4); NaN marks an unpopulated node
    params: np.ndarray
    objective: np.ndarray

    def __post_init__(self):
        self.velocities = check_axis(self.velocities, "velocity")
        self.positions = check_axis(self.positions, "position")
        shape = (len(self.velocities), len(self.positions))
        self.params = np.asarray(self.params, dtype=float)
        self.objective = np.asarray(self.objective, dtype=float)
        if self.params.shape != shape + (len(PARAM_NAMES),) or self.objective.shape != shape:
            raise ValueError("parameter table does not match the grid axes")

    @classmethod
    def empty(cls, velocities, positions) -> "ParamGrid":
        n = (len(velocities), len(positions))
        return cls(velocities, positions, np.full(n + (len(PARAM_NAMES),), np.nan), np.full(n, np.nan))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.velocities), len(self.positions)

    @property
    def complete(self) -> bool:
        return bool(np.all(np.isfinite(self.params)))

    def node(self, i: int, j: int) -> GaitParams:
        return GaitParams.from_array(self.params[i, j])

    def contains(self, v0: float, s_des: float) -> bool:
        return bool(self.velocities[0] <= v0 <= self.velocities[-1]
                    and self.positions[0] <= s_des <= self.positions[-1])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(GRID_FIELDS)
            for i, v in enumerate(self.velocities):
                for j, s in enumerate(self.positions):
                    w.writerow([repr(float(v)), repr(float(s))]
                               + [repr(float(x)) for x in self.params[i, j]]
                               + [repr(float(self.objective[i, j]))])

    @classmethod
    def read_csv(cls, path) -> "ParamGrid":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or tuple(rows[0]) != GRID_FIELDS:
            raise ValueError(f"{path}: expected columns {GRID_FIELDS}")
        vs = sorted({float(r["v0"]) for r in rows})
        ss = sorted({float(r["s_des"]) for r in rows})
        grid = cls.empty(vs, ss)
        if len(rows) != len(vs) * len(ss):
            raise ValueError(f"{path}: {len(rows)} rows do not fill a {len(vs)}x{len(ss)} grid")
        iv = {v: i for i, v in enumerate(vs)}
        js = {s: j for j, s in enumerate(ss)}
        for r in rows:
            i, j = iv[float(r["v0"])], js[float(r["s_des"])]
            grid.params[i, j] = [float(r[n]) for n in PARAM_NAMES]
            grid.objective[i, j] = float(r["objective"])
        return grid


def _cell(axis, x):
    k = int(np.searchsorted(axis, x, side="right")) - 1
    k = min(max(k, 0), max(len(axis) - 2, 0))
    if len(axis) == 1:
        return 0, 0.0
    return k, (x - axis[k]) / (axis[k + 1] - axis[k])


def query_params(grid: ParamGrid, ic: InitialCondition) -> GaitParams:
    """Bilinear interpolation of each gait parameter over the enclosing cell."""
    if not grid.complete:
        raise ValueError("parameter grid has unpopulated nodes")
    if not grid.contains(ic.v0, ic.s_des):
        raise OutOfRangeError(
            f"({ic.v0}, {ic.s_des}) outside grid [{grid.velocities[0]}, {grid.velocities[-1]}]"
            f" x [{grid.positions[0]}, {grid.positions[-1]}]")
    i, a = _cell(grid.velocities, ic.v0)
    j, b = _cell(grid.positions, ic.s_des)
    P = grid.params
    i1 = min(i + 1, len(grid.velocities) - 1)
    j1 = min(j + 1, len(grid.positions) - 1)
    val = ((1 - a) * (1 - b) * P[i, j] + a * (1 - b) * P[i1, j]
           + (1 - a) * b * P[i, j1] + a * b * P[i1, j1])
    return GaitParams.from_array(val)


def _node_job(args):
    i, j, v0, s, budget, config, master, bounds = args
    try:
        res = optimize_pair(InitialCondition(v0, s), budget, config, node_seed(master, i, j), bounds)
    except Exception as exc:  # noqa: BLE001 - reported with node identity
        return i, j, None, exc
    return i, j, res, None


@dataclass
class GridRun:
    grid: ParamGrid
    results: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)


def build_param_grid(velocities, positions, budget: BOBudget, workers: int = 1,
                     config: EpisodeConfig | None = None, seed: int = 0,
                     bounds: dict | None = None, strict: bool = True) -> GridRun:
    """Optimize every grid node, optionally across a process pool.

    Each node draws from its own seed derived from ``(seed, i, j)``, so the
    result does not depend on ``workers`` or scheduling.  With ``strict`` a
    failing node raises :class:`NodeError`; otherwise failures are collected
    and the node stays unpopulated.
    """
    velocities = check_axis(velocities, "velocity")
    positions = check_axis(positions, "position")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    config = EpisodeConfig() if config is None else config
    jobs = [(i, j, float(v), float(s), budget, config, seed, bounds)
            for i, v in enumerate(velocities) for j, s in enumerate(positions)]
    run = GridRun(ParamGrid.empty(velocities, positions))
    if workers == 1:
        outputs = map(_node_job, jobs)
        _collect(run, outputs, strict)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            _collect(run, pool.map(_node_job, jobs), strict)
    return run


def _collect(run, outputs, strict):
    for i, j, res, exc in outputs:
        if exc is not None:
            if strict:
                raise NodeError(i, j, exc) from exc
            run.failures[(i, j)] = exc
            continue
        run.results[(i, j)] = res
        run.grid.params[i, j] = res.params.as_array()
        run.grid.objective[i, j] = res.objective


TRACE_FIELDS = ("i", "j", "iteration", "phase") + PARAM_NAMES + ("objective", "incumbent")


def write_traces(run: GridRun, path, bounds: dict | None = None) -> None:
    """BO history of every node in physical parameter units."""
    lo, hi = bounds_arrays(bounds)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_FIELDS)
        for (i, j) in sorted(run.results):
            for row in run.results[(i, j)].trace:
                p = lo + row.x * (hi - lo)
                w.writerow([i, j, row.iteration, row.phase] + [repr(float(x)) for x in p]
                           + [repr(row.value), repr(row.incumbent)])


TIMING_FIELDS = ("i", "j", "v0", "s_des", "seconds", "early_fraction", "status")


def write_timings(run: GridRun, path) -> None:
    g = run.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMING_FIELDS)
        for i, v in enumerate(g.velocities):
            for j, s in enumerate(g.positions):
                res = run.results.get((i, j))
                if res is None:
                    w.writerow([i, j, repr(float(v)), repr(float(s)), "nan", "nan", "failed"])
                    continue
                frac = res.n_terminated_early / max(len(res.trace), 1)
                w.writerow([i, j, repr(float(v)), repr(float(s)), f"{res.seconds:.6f}",
                            repr(frac), "ok"])
