"""One stepping episode and its scores."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels as K
from .biped import BipedConfig, Status, init_standing, point_position, standing_posture
from .controller import ControllerGains
from .trajectory import GaitParams, SwingTrajConfig, gen_com_traj, gen_swing_traj

EPISODE_FIELDS = ("v0", "s_des", "t_min", "s_max", "t_swing_start", "s_speed", "status",
                  "reached", "t_term", "t_td", "s_td", "x_f", "z_f", "j_tau", "objective")


@dataclass(frozen=True)
class InitialCondition:
    v0: float
    s_des: float

    def __post_init__(self):
        if self.v0 < 0 or self.s_des <= 0:
            raise ValueError("need v0 >= 0 and s_des > 0")


@dataclass(frozen=True)
class ObjectiveWeights:
    w_f: float = 0.001
    w_swing: float = 50.0
    w_x_mid: float = 1.0
    w_z: float = 1.0
    w_tau: float = 0.0002

    def __post_init__(self):
        if min(self.w_f, self.w_swing, self.w_x_mid, self.w_z, self.w_tau) < 0:
            raise ValueError("objective weights must be non-negative")


@dataclass(frozen=True)
class EpisodeConfig:
    biped: BipedConfig = field(default_factory=BipedConfig)
    gains: ControllerGains = field(default_factory=ControllerGains)
    swing: SwingTrajConfig = field(default_factory=SwingTrajConfig)
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    # touchdown must land this close to s_des for the step to count as reached
    step_tolerance: float = 0.05


@dataclass
class EpisodeOutcome:
    ic: InitialCondition
    params: GaitParams
    status: Status
    t_term: float
    t_total: float
    t_lo: float
    t_td: float | None
    s_td: float
    s_stance: float
    x_f: float
    z_f: float
    j_tau: float
    objective: float = math.nan
    step_tolerance: float = 0.05
    tau_log: np.ndarray | None = field(default=None, repr=False)
    q_log: np.ndarray | None = field(default=None, repr=False)
    dq_log: np.ndarray | None = field(default=None, repr=False)
    com_log: np.ndarray | None = field(default=None, repr=False)
    foot_log: np.ndarray | None = field(default=None, repr=False)

    @property
    def s_mid(self) -> float:
        """Midpoint between the stance foot and the touchdown point."""
        return self.s_stance + 0.5 * (self.s_td - self.s_stance)

    @property
    def touched_down(self) -> bool:
        return self.t_td is not None

    @property
    def success(self) -> bool:
        return self.status is Status.SUCCESS

    @property
    def reached(self) -> bool:
        """Stood still at the end after landing within tolerance of ``s_des``."""
        return self.success and abs(self.s_td - self.ic.s_des) <= self.step_tolerance

    def record(self) -> dict:
        p = self.params
        return {"v0": self.ic.v0, "s_des": self.ic.s_des, "t_min": p.t_min, "s_max": p.s_max,
                "t_swing_start": p.t_swing_start, "s_speed": p.s_speed,
                "status": self.status.value, "reached": int(self.reached),
                "t_term": self.t_term, "t_td": math.nan if self.t_td is None else self.t_td,
                "s_td": self.s_td, "x_f": self.x_f, "z_f": self.z_f, "j_tau": self.j_tau,
                "objective": self.objective}


def torque_integral(tau_log, t_lo: float, t_td: float, dt: float) -> float:
    """Left-Riemann sum of the summed squared torques over ``[t_lo, t_td)``."""
    tau_log = np.asarray(tau_log, dtype=float)
    if tau_log.ndim == 1:
        tau_log = tau_log[:, None]
    eps = 1e-9
    if t_lo < -eps or t_td < t_lo - eps:
        raise ValueError(f"invalid integration interval [{t_lo}, {t_td})")
    k_lo = int(math.ceil(t_lo / dt - eps))
    k_hi = int(math.ceil(t_td / dt - eps))
    if k_hi > len(tau_log):
        raise ValueError(f"torque log covers {len(tau_log) * dt} s, interval ends at {t_td} s")
    seg = tau_log[k_lo:k_hi]
    return float(np.sum(seg * seg) * dt)


def objective(outcome: EpisodeOutcome, ic: InitialCondition, w: ObjectiveWeights,
              t_total: float, z_nom: float) -> float:
    """Weighted stepping score; higher is better and 0 is the ideal."""
    return -(w.w_f * (t_total - outcome.t_term)
             + w.w_swing * (ic.s_des - outcome.s_td) ** 2
             + w.w_x_mid * (outcome.x_f - outcome.s_mid) ** 2
             + w.w_z * (z_nom - outcome.z_f)
             + w.w_tau * outcome.j_tau)


@lru_cache(maxsize=16)
def _posture(biped: BipedConfig) -> np.ndarray:
    q = standing_posture(biped)
    q.setflags(write=False)
    return q


def run_episode(ic: InitialCondition, p: GaitParams, config: EpisodeConfig | None = None,
                bounds: dict | None = None, keep_logs: bool = True) -> EpisodeOutcome:
    """Simulate one step from standing with CoM velocity ``ic.v0`` towards ``ic.s_des``.

    After an early termination the torque log is filled with the joint
    torque limits up to ``t_total``.  The torque integral runs from the swing
    start to touchdown, or to ``t_total`` when the foot never lands.
    """
    config = EpisodeConfig() if config is None else config
    p.check_bounds(bounds)
    bc = config.biped
    posture = _posture(bc)
    state = init_standing(bc, ic.v0, posture)
    foot0 = point_position(bc, posture, "swing-foot")
    com_traj = gen_com_traj(ic.v0, p, ic.s_des, bc.z_nom, bc.dt, bc.t_total, bc.gravity)
    swing_traj = gen_swing_traj(ic.s_des, p, config.swing, (foot0[0], 0.0, foot0[1]),
                                bc.dt, bc.t_total)
    a = bc.arrays
    q_log, dq_log, tau_log, com_log, foot_log, code, k_term, t_td, s_td = K.simulate(
        state.q, state.dq, com_traj.samples, swing_traj.samples, np.array(posture),
        bc.n_steps, bc.dt, config.gains.as_array(), config.gains.damping, a.tau_lim, a.vel_lim,
        bc.velocity_threshold, bc.fall_height, bc.settle_threshold,
        a.W, a.inertia, a.mP, a.wc, a.wf, a.sign, a.g, a.baumgarte)

    status = Status.from_code(code)
    t_term = k_term * bc.dt
    k_last = k_term
    while k_last > 0 and not np.all(np.isfinite(com_log[k_last])):
        k_last -= 1
    touched = t_td >= 0
    t_lo = p.t_swing_start
    end = t_td if touched else bc.t_total
    j_tau = torque_integral(tau_log, t_lo, max(end, t_lo), bc.dt)
    out = EpisodeOutcome(
        ic=ic, params=p, status=status, t_term=t_term, t_total=bc.t_total, t_lo=t_lo,
        t_td=float(t_td) if touched else None,
        s_td=float(s_td) if touched else float(foot_log[k_last, 0]),
        s_stance=0.0, x_f=float(com_log[k_last, 0]), z_f=float(com_log[k_last, 1]),
        j_tau=j_tau, step_tolerance=config.step_tolerance)
    out.objective = objective(out, ic, config.weights, bc.t_total, bc.z_nom)
    if keep_logs:
        out.tau_log, out.q_log, out.dq_log = tau_log, q_log, dq_log
        out.com_log, out.foot_log = com_log, foot_log
    return out
