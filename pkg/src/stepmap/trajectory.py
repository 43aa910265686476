"""CoM and swing-foot reference trajectories."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, astuple

import numpy as np

GRAVITY = 9.81

# (low, high) per gait parameter
PARAM_BOUNDS = {
    "t_min": (0.01, 0.99),
    "s_max": (0.01, 0.99),
    "t_swing_start": (0.01, 0.08),
    "s_speed": (0.2, 3.0),
}
PARAM_NAMES = tuple(PARAM_BOUNDS)


@dataclass(frozen=True)
class GaitParams:
    """Open gait parameters: minimum swing time (s), maximum step length (m),
    swing start time (s) and swing foot speed (m/s)."""

    t_min: float
    s_max: float
    t_swing_start: float
    s_speed: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values) -> "GaitParams":
        return cls(*(float(v) for v in values))

    def check_bounds(self, bounds: dict | None = None, tol: float = 1e-12) -> None:
        bounds = PARAM_BOUNDS if bounds is None else bounds
        for name, value in zip(PARAM_NAMES, astuple(self)):
            lo, hi = bounds[name]
            if not (lo - tol <= value <= hi + tol):
                raise ValueError(f"{name}={value} outside [{lo}, {hi}]")

    def swing_duration(self, s_des: float) -> float:
        return s_des / self.s_speed

    def total_swing_time(self, s_des: float) -> float:
        return self.t_swing_start + s_des / self.s_speed


def bounds_arrays(bounds: dict | None = None) -> tuple[np.ndarray, np.ndarray]:
    bounds = PARAM_BOUNDS if bounds is None else bounds
    lo = np.array([bounds[n][0] for n in PARAM_NAMES], dtype=float)
    hi = np.array([bounds[n][1] for n in PARAM_NAMES], dtype=float)
    return lo, hi


@dataclass(frozen=True)
class SwingTrajConfig:
    z_max: float = 0.08
    # the descent aims slightly below the ground so touchdown is a clean crossing
    landing_depth: float = 0.005

    def __post_init__(self):
        if self.z_max <= 0:
            raise ValueError("z_max must be positive")
        if self.landing_depth < 0:
            raise ValueError("landing_depth must be non-negative")


@dataclass(frozen=True)
class Trajectory:
    period: float
    samples: np.ndarray
    start_time: float = 0.0

    @property
    def duration(self) -> float:
        return (len(self.samples) - 1) * self.period

    def _position(self, t):
        s = (t - self.start_time) / self.period
        n = len(self.samples)
        if s <= 0:
            return self.samples[0].copy()
        if s >= n - 1:
            return self.samples[-1].copy()
        k = int(math.floor(s))
        frac = s - k
        if frac == 0.0:
            return self.samples[k].copy()
        return (1.0 - frac) * self.samples[k] + frac * self.samples[k + 1]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "z"])
            for k, row in enumerate(self.samples):
                w.writerow([repr(self.start_time + k * self.period)] + [repr(float(v)) for v in row])


def sample(traj: Trajectory, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Linearly interpolated position and central-difference velocity at ``t``.

    Past the final sample the trajectory holds with zero velocity.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    t_end = traj.start_time + traj.duration
    pos = traj._position(t)
    if t >= t_end:
        return pos, np.zeros(3)
    h = traj.period
    lo = max(t - h, traj.start_time)
    hi = min(t + h, t_end)
    vel = (traj._position(hi) - traj._position(lo)) / (hi - lo)
    return pos, vel


def min_jerk(s0: float, s1: float, T: float, t: float) -> tuple[float, float, float]:
    """Quintic minimum-jerk blend from ``s0`` to ``s1`` over ``T`` seconds."""
    if T <= 0:
        raise ValueError("minimum-jerk duration must be positive")
    u = min(max(t / T, 0.0), 1.0)
    d = s1 - s0
    pos = s0 + d * (10 * u**3 - 15 * u**4 + 6 * u**5)
    vel = d * (30 * u**2 - 60 * u**3 + 30 * u**4) / T
    acc = d * (60 * u - 180 * u**2 + 120 * u**3) / T**2
    return pos, vel, acc


def _n_samples(t_total, dt):
    return int(round(t_total / dt)) + 1


def gen_swing_traj(s_des: float, p: GaitParams, cfg: SwingTrajConfig | None = None,
                   start_pose=(0.0, 0.0, 0.01), dt: float = 1e-3,
                   t_total: float = 7.0) -> Trajectory:
    """Swing-foot reference: hold, then a minimum-jerk step to ``s_des``.

    The vertical profile rises to ``z_max`` at mid-swing and descends to
    ``-landing_depth``; both halves are minimum-jerk segments.
    """
    if s_des <= 0:
        raise ValueError("s_des must be positive")
    cfg = SwingTrajConfig() if cfg is None else cfg
    x0, y0, z0 = (float(v) for v in start_pose)
    T = p.swing_duration(s_des)
    t0 = p.t_swing_start
    half = 0.5 * T
    n = _n_samples(t_total, dt)
    out = np.empty((n, 3))
    out[:, 1] = y0
    for k in range(n):
        tau = k * dt - t0
        if tau <= 0:
            out[k, 0] = x0
            out[k, 2] = z0
            continue
        out[k, 0] = min_jerk(x0, s_des, T, min(tau, T))[0]
        if tau <= half:
            out[k, 2] = min_jerk(z0, cfg.z_max, half, tau)[0]
        else:
            out[k, 2] = min_jerk(cfg.z_max, -cfg.landing_depth, half, min(tau - half, half))[0]
    return Trajectory(dt, out)


@dataclass(frozen=True)
class ComPlan:
    """Analytic piecewise pendulum plan behind :func:`gen_com_traj`."""

    v0: float
    omega: float
    t_switch: float
    pivot: float
    t_freeze: float
    z: float

    def state(self, t: float) -> tuple[float, float]:
        """Reference (x, xdot) at time ``t``."""
        w = self.omega
        if t <= self.t_switch:
            return self._pre(t)
        xs, vs = self._pre(self.t_switch)
        tau = min(t, self.t_freeze) - self.t_switch
        x = self.pivot + (xs - self.pivot) * math.cosh(w * tau) + vs / w * math.sinh(w * tau)
        v = w * (xs - self.pivot) * math.sinh(w * tau) + vs * math.cosh(w * tau)
        if t > self.t_freeze:
            v = 0.0
        return x, v

    def _pre(self, t):
        w = self.omega
        return self.v0 / w * math.sinh(w * t), self.v0 * math.cosh(w * t)


def com_plan(v0: float, p: GaitParams, s_des: float, z_nom: float, g: float = GRAVITY) -> ComPlan:
    if v0 < 0:
        raise ValueError("initial CoM velocity must be non-negative")
    w = math.sqrt(g / z_nom)
    t_switch = max(p.t_min, s_des / p.s_speed + p.t_swing_start)
    pivot = min(s_des, p.s_max)
    xs = v0 / w * math.sinh(w * t_switch)
    vs = v0 * math.cosh(w * t_switch)
    if vs <= 0 or xs >= pivot:
        t_freeze = t_switch
    elif xs + vs / w < pivot:
        # decelerates to rest short of the pivot
        t_freeze = t_switch + math.atanh(vs / (w * (pivot - xs))) / w
    else:
        # diverging: hold once the CoM passes over the landing pivot
        ratio = min(w * (pivot - xs) / vs, 1.0 - 1e-15)
        t_freeze = t_switch + math.atanh(ratio) / w
    return ComPlan(v0=v0, omega=w, t_switch=t_switch, pivot=pivot, t_freeze=t_freeze, z=z_nom)


def gen_com_traj(v0: float, p: GaitParams, s_des: float, z_nom: float, dt: float = 1e-3,
                 t_total: float = 7.0, g: float = GRAVITY) -> Trajectory:
    """CoM reference from a linear inverted pendulum at constant height.

    The pendulum pivots on the stance foot until the swing completes (or
    ``t_min``, whichever is later), then on ``min(s_des, s_max)``.  The
    reference freezes once it comes to rest.
    """
    plan = com_plan(v0, p, s_des, z_nom, g)
    n = _n_samples(t_total, dt)
    out = np.zeros((n, 3))
    out[:, 2] = z_nom
    for k in range(n):
        out[k, 0] = plan.state(k * dt)[0]
    return Trajectory(dt, out)
