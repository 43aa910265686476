"""Dense reachability and torque maps, the step selector and the LIPM baseline."""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .episode import EPISODE_FIELDS, EpisodeConfig, InitialCondition, run_episode
from .paramgrid import OutOfRangeError, ParamGrid, check_axis, query_params
from .svm import SafeRegionModel, fit_svm
from .trajectory import GRAVITY

MAP_FIELDS = ("v0", "s_des", "reachable", "j_tau")


@dataclass
class ReachMap:
    velocities: np.ndarray
    positions: np.ndarray
    reachable: np.ndarray  # bool, (n_v, n_s)

    def __post_init__(self):
        self.velocities = check_axis(self.velocities, "velocity")
        self.positions = check_axis(self.positions, "position")
        self.reachable = np.asarray(self.reachable, bool)
        if self.reachable.shape != (len(self.velocities), len(self.positions)):
            raise ValueError("reachability table does not match the axes")

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """All cells as (n, 2) coordinates and their labels."""
        V, S = np.meshgrid(self.velocities, self.positions, indexing="ij")
        return np.column_stack([V.ravel(), S.ravel()]), self.reachable.ravel()


@dataclass
class TorqueMap:
    velocities: np.ndarray
    positions: np.ndarray
    j_tau: np.ndarray  # NaN where the cell is unreachable

    def __post_init__(self):
        self.velocities = check_axis(self.velocities, "velocity")
        self.positions = check_axis(self.positions, "position")
        self.j_tau = np.asarray(self.j_tau, float)
        if self.j_tau.shape != (len(self.velocities), len(self.positions)):
            raise ValueError("torque table does not match the axes")
        present = np.isfinite(self.j_tau)
        if np.any(self.j_tau[present] < 0):
            raise ValueError("torque integrals must be non-negative")

    @property
    def present(self) -> np.ndarray:
        return np.isfinite(self.j_tau)


def write_maps(reach: ReachMap, tmap: TorqueMap, reach_path, torque_path) -> None:
    for path, with_tau in ((reach_path, False), (torque_path, True)):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(MAP_FIELDS if with_tau else MAP_FIELDS[:3])
            for i, v in enumerate(reach.velocities):
                for j, s in enumerate(reach.positions):
                    row = [repr(float(v)), repr(float(s)), int(reach.reachable[i, j])]
                    if with_tau:
                        row.append(repr(float(tmap.j_tau[i, j])))
                    w.writerow(row)


def _read_table(path, fields):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or tuple(rows[0]) != fields:
        raise ValueError(f"{path}: expected columns {fields}")
    vs = sorted({float(r["v0"]) for r in rows})
    ss = sorted({float(r["s_des"]) for r in rows})
    if len(rows) != len(vs) * len(ss):
        raise ValueError(f"{path}: rows do not fill a {len(vs)}x{len(ss)} grid")
    iv = {v: i for i, v in enumerate(vs)}
    js = {s: j for j, s in enumerate(ss)}
    return rows, vs, ss, iv, js


def read_reach_map(path) -> ReachMap:
    rows, vs, ss, iv, js = _read_table(path, MAP_FIELDS[:3])
    r = np.zeros((len(vs), len(ss)), bool)
    for row in rows:
        r[iv[float(row["v0"])], js[float(row["s_des"])]] = row["reachable"] == "1"
    return ReachMap(vs, ss, r)


def read_torque_map(path) -> TorqueMap:
    rows, vs, ss, iv, js = _read_table(path, MAP_FIELDS)
    t = np.full((len(vs), len(ss)), np.nan)
    for row in rows:
        t[iv[float(row["v0"])], js[float(row["s_des"])]] = float(row["j_tau"])
    return TorqueMap(vs, ss, t)


def _cell_job(args):
    i, j, v0, s, p, config = args
    out = run_episode(InitialCondition(v0, s), p, config, keep_logs=False)
    return i, j, out.record()


@dataclass
class DenseMaps:
    reach: ReachMap
    torque: TorqueMap
    records: list = field(default_factory=list)

    def write_records(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(EPISODE_FIELDS)
            for rec in self.records:
                w.writerow([v if isinstance(v, (str, int)) else repr(float(v))
                            for v in (rec[k] for k in EPISODE_FIELDS)])


def build_dense_maps(grid: ParamGrid, velocities, positions, config: EpisodeConfig | None = None,
                     workers: int = 1) -> DenseMaps:
    """Simulate every dense cell with parameters interpolated from ``grid``."""
    velocities = check_axis(velocities, "velocity")
    positions = check_axis(positions, "position")
    config = EpisodeConfig() if config is None else config
    for v in (velocities[0], velocities[-1]):
        for s in (positions[0], positions[-1]):
            if not grid.contains(v, s):
                raise OutOfRangeError(f"dense axes leave the parameter grid at ({v}, {s})")
    jobs = [(i, j, float(v), float(s), query_params(grid, InitialCondition(float(v), float(s))), config)
            for i, v in enumerate(velocities) for j, s in enumerate(positions)]
    if workers == 1:
        results = list(map(_cell_job, jobs))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell_job, jobs, chunksize=4))
    shape = (len(velocities), len(positions))
    reach = np.zeros(shape, bool)
    tau = np.full(shape, np.nan)
    records = []
    for i, j, rec in results:
        records.append(rec)
        if rec["reached"]:
            reach[i, j] = True
            tau[i, j] = rec["j_tau"]
    return DenseMaps(ReachMap(velocities, positions, reach), TorqueMap(velocities, positions, tau),
                     records)


def train_safe_region(reach: ReachMap, class_weights=(1.0, 14.0), C: float = 100.0,
                      gamma: float | None = None, tol: float = 1e-3) -> SafeRegionModel:
    X, lab = reach.points()
    return fit_svm(X, lab, class_weights=class_weights, C=C, gamma=gamma, tol=tol)


def classify(model: SafeRegionModel, ic: InitialCondition) -> str:
    return "safe" if model.decision_function([[ic.v0, ic.s_des]])[0] > 0 else "unsafe"


def column_argmins(tmap: TorqueMap) -> np.ndarray:
    """Index of the cheapest reachable cell per velocity; ties go to the shortest step."""
    present = tmap.present
    empty = np.flatnonzero(~present.any(axis=1))
    if empty.size:
        cols = ", ".join(f"v0={tmap.velocities[k]!r}" for k in empty)
        raise ValueError(f"no reachable cell in velocity column(s) {cols}")
    return np.argmin(np.where(present, tmap.j_tau, np.inf), axis=1)


@dataclass
class ResidualStats:
    mean: float
    std: float
    min: float
    max: float
    count: int

    @classmethod
    def of(cls, values) -> "ResidualStats":
        a = np.asarray(values, float)
        if a.size == 0:
            return cls(math.nan, math.nan, math.nan, math.nan, 0)
        return cls(float(a.mean()), float(a.std()), float(a.min()), float(a.max()), int(a.size))

    def as_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "min": self.min, "max": self.max,
                "count": self.count}


@dataclass
class StepSelector:
    """Degree-4 polynomial from initial CoM velocity to the cheapest step position."""

    coef: np.ndarray
    domain: tuple
    v_range: tuple
    s_range: tuple
    position_residual: ResidualStats
    torque_residual: ResidualStats
    degree: int = 4

    @property
    def poly(self) -> Polynomial:
        return Polynomial(self.coef, domain=self.domain, window=(-1.0, 1.0))

    def to_dict(self) -> dict:
        return {"kind": "step-selector", "degree": self.degree, "coef": list(map(float, self.coef)),
                "domain": list(self.domain), "v_range": list(self.v_range),
                "s_range": list(self.s_range),
                "position_residual": self.position_residual.as_dict(),
                "torque_residual": self.torque_residual.as_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "StepSelector":
        if d.get("kind") != "step-selector":
            raise ValueError("not a step-selector document")
        return cls(np.asarray(d["coef"], float), tuple(d["domain"]), tuple(d["v_range"]),
                   tuple(d["s_range"]), ResidualStats(**d["position_residual"]),
                   ResidualStats(**d["torque_residual"]), int(d["degree"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "StepSelector":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit_step_selector(tmap: TorqueMap, degree: int = 4) -> StepSelector:
    """Least-squares polynomial through the per-velocity torque argmins.

    The torque residual compares the map value at the cell nearest the
    fitted position with the column minimum; columns whose nearest cell is
    unreachable are left out of those statistics.
    """
    k = column_argmins(tmap)
    v = tmap.velocities
    s_opt = tmap.positions[k]
    deg = min(degree, len(v) - 1)
    p = Polynomial.fit(v, s_opt, deg, window=(-1.0, 1.0))
    coef = np.zeros(degree + 1)
    coef[:deg + 1] = p.coef
    s_fit = np.clip(p(v), tmap.positions[0], tmap.positions[-1])
    tau_err = []
    for i in range(len(v)):
        jn = int(np.argmin(np.abs(tmap.positions - s_fit[i])))
        if tmap.present[i, jn]:
            tau_err.append(abs(tmap.j_tau[i, jn] - tmap.j_tau[i, k[i]]))
    return StepSelector(coef, tuple(map(float, p.domain)), (float(v[0]), float(v[-1])),
                        (float(tmap.positions[0]), float(tmap.positions[-1])),
                        ResidualStats.of(np.abs(s_fit - s_opt)), ResidualStats.of(tau_err), degree)


def select_step(sel: StepSelector, v0: float) -> float:
    lo, hi = sel.v_range
    if not lo <= v0 <= hi:
        raise OutOfRangeError(f"v0={v0} outside the selector range [{lo}, {hi}]")
    return float(np.clip(sel.poly(v0), *sel.s_range))


def near_optimal_regions(tmap: TorqueMap, delta: float) -> np.ndarray:
    """Cells within ``(1 + delta)`` of their velocity column's cheapest cell."""
    if not delta >= 0:
        raise ValueError("delta must be non-negative")
    present = tmap.present
    j = np.where(present, tmap.j_tau, np.inf)
    best = j.min(axis=1, keepdims=True)
    if math.isinf(delta):
        return present.copy()
    return present & (j <= (1.0 + delta) * best)


def lipm_predict_step(v0: float, z_nom: float, t_sw: float, g: float = GRAVITY) -> float:
    """Instantaneous capture point at ``t_sw`` of a pendulum starting over its pivot."""
    if t_sw < 0:
        raise ValueError("t_sw must be non-negative")
    w = math.sqrt(g / z_nom)
    x = v0 / w * math.sinh(w * t_sw)
    xd = v0 * math.cosh(w * t_sw)
    return x + xd / w


LIPM_FIELDS = ("v0", "s_opt", "s_selected", "t_sw", "s_lipm", "status", "j_tau_opt",
               "j_tau_lipm", "error")


@dataclass
class LipmComparison:
    rows: list
    stats: ResidualStats
    n_outside_axis: int
    n_beyond_reachable: int

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LIPM_FIELDS)
            for r in self.rows:
                w.writerow([r[k] if isinstance(r[k], str) else repr(float(r[k])) for k in LIPM_FIELDS])

    def summary(self) -> dict:
        return {**self.stats.as_dict(), "outside_axis": self.n_outside_axis,
                "beyond_reachable": self.n_beyond_reachable}


def compare_lipm(tmap: TorqueMap, sel: StepSelector | None, grid: ParamGrid, z_nom: float,
                 g: float = GRAVITY, iterations: int = 2) -> LipmComparison:
    """Torque cost of stepping to the LIPM capture point instead of the map optimum.

    The swing time starts from the optimal cell's parameters and is refined
    ``iterations`` times at the predicted position.  Predictions off the
    position axis are excluded; those landing on unreachable cells are
    flagged as beyond the reachable area.
    """
    k = column_argmins(tmap)
    rows, errs = [], []
    n_out = n_beyond = 0
    for i, v in enumerate(tmap.velocities):
        v = float(v)
        s_opt = float(tmap.positions[k[i]])
        p = query_params(grid, InitialCondition(v, s_opt)) if grid.contains(v, s_opt) else None
        t_sw = p.total_swing_time(s_opt) if p is not None else math.nan
        s_l = lipm_predict_step(v, z_nom, t_sw, g) if p is not None else math.nan
        for _ in range(iterations):
            if p is None or not grid.contains(v, s_l):
                break
            p = query_params(grid, InitialCondition(v, s_l))
            t_sw = p.total_swing_time(s_l)
            s_l = lipm_predict_step(v, z_nom, t_sw, g)
        row = {"v0": v, "s_opt": s_opt,
               "s_selected": select_step(sel, v) if sel is not None else math.nan,
               "t_sw": t_sw, "s_lipm": s_l, "j_tau_opt": float(tmap.j_tau[i, k[i]]),
               "j_tau_lipm": math.nan, "error": math.nan}
        lo, hi = tmap.positions[0], tmap.positions[-1]
        if not (np.isfinite(s_l) and lo <= s_l <= hi):
            row["status"] = "outside-axis"
            n_out += 1
        else:
            jl = int(np.argmin(np.abs(tmap.positions - s_l)))
            if not tmap.present[i, jl]:
                row["status"] = "beyond-reachable"
                n_beyond += 1
            else:
                row["status"] = "ok"
                row["j_tau_lipm"] = float(tmap.j_tau[i, jl])
                row["error"] = math.sqrt((row["j_tau_lipm"] - row["j_tau_opt"]) ** 2)
                errs.append(row["error"])
        rows.append(row)
    return LipmComparison(rows, ResidualStats.of(errs), n_out, n_beyond)


SWING_FIELDS = ("v0", "s_des", "t_swing_start", "s_speed", "swing_time", "optimal")


def swing_time_report(grid: ParamGrid, sel: StepSelector | None = None) -> list[dict]:
    """Swing time ``t_swing_start + s_des / s_speed`` per grid node.

    With a selector, one extra row per grid velocity gives the swing time at
    the selected step (``optimal`` = 1).
    """
    rows = []
    for i, v in enumerate(grid.velocities):
        for j, s in enumerate(grid.positions):
            p = grid.node(i, j)
            rows.append({"v0": float(v), "s_des": float(s), "t_swing_start": p.t_swing_start,
                         "s_speed": p.s_speed, "swing_time": p.total_swing_time(float(s)),
                         "optimal": 0})
        if sel is not None and sel.v_range[0] <= v <= sel.v_range[1]:
            s = select_step(sel, float(v))
            if grid.contains(float(v), s):
                p = query_params(grid, InitialCondition(float(v), s))
                rows.append({"v0": float(v), "s_des": s, "t_swing_start": p.t_swing_start,
                             "s_speed": p.s_speed, "swing_time": p.total_swing_time(s),
                             "optimal": 1})
    return rows


def write_swing_report(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWING_FIELDS)
        for r in rows:
            w.writerow([repr(float(r[k])) if k != "optimal" else r[k] for k in SWING_FIELDS])
