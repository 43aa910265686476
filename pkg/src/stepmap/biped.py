"""Planar five-link biped with a flat stance foot welded to the ground.

Joint order is (stance ankle, stance knee, stance hip, swing hip, swing knee).
Positions are (x, z) in the world frame with the stance ankle at the origin.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import optimize

from . import _kernels as K

N_JOINTS = K.N_JOINTS
JOINT_NAMES = ("stance_ankle", "stance_knee", "stance_hip", "swing_hip", "swing_knee")
SEGMENT_SIGN = np.array([1.0, 1.0, 1.0, -1.0, -1.0])
# parent segments on the path from the ankle to each segment's proximal joint
_SEGMENT_PATH = ((), (0,), (0, 1), (0, 1), (0, 1, 3))


class ConfigurationError(ValueError):
    """Raised for invalid model parameters or unreachable postures."""


class NonPhysicalStateError(RuntimeError):
    """Raised when the dynamics become singular or non-finite."""


class Contact(enum.Enum):
    SWING_AIRBORNE = "swing-airborne"
    DOUBLE_SUPPORT = "double-support"

    @property
    def code(self) -> int:
        return K.SINGLE if self is Contact.SWING_AIRBORNE else K.DOUBLE


class Status(enum.Enum):
    RUNNING = "running"
    SUCCESS = "success"
    FELL_VELOCITY = "fell-velocity"
    FELL_HEIGHT = "fell-height"
    TIMEOUT_UNSETTLED = "timeout-unsettled"

    @classmethod
    def from_code(cls, code: int) -> "Status":
        return _STATUS_BY_CODE[int(code)]


_STATUS_BY_CODE = {
    K.RUNNING: Status.RUNNING,
    K.SUCCESS: Status.SUCCESS,
    K.FELL_VELOCITY: Status.FELL_VELOCITY,
    K.FELL_HEIGHT: Status.FELL_HEIGHT,
    K.TIMEOUT_UNSETTLED: Status.TIMEOUT_UNSETTLED,
}


@dataclass(frozen=True)
class TerminationStatus:
    status: Status
    t_term: float


def _tuple5(name, value):
    value = tuple(float(v) for v in value)
    if len(value) != N_JOINTS:
        raise ConfigurationError(f"{name} needs {N_JOINTS} entries, got {len(value)}")
    return value


@dataclass(frozen=True)
class BipedConfig:
    """Model and simulation parameters.

    Segment tuples are ordered (stance shank, stance thigh, torso,
    swing thigh, swing shank); ``com_offsets`` are distances from each
    segment's proximal joint to its centre of mass.
    """

    lengths: tuple = (0.53, 0.53, 0.6, 0.53, 0.53)
    com_offsets: tuple = (0.265, 0.265, 0.3, 0.265, 0.265)
    masses: tuple = (4.0, 6.0, 25.0, 6.0, 4.0)
    inertias: tuple = (0.0936, 0.1405, 0.75, 0.1405, 0.0936)
    torque_limits: tuple = (200.0, 300.0, 300.0, 300.0, 300.0)
    velocity_limits: tuple = (20.0, 20.0, 20.0, 20.0, 20.0)
    z_nom: float = 0.925
    dt: float = 1e-3
    t_total: float = 7.0
    velocity_threshold: float = 1e6
    fall_height: float = 0.4
    settle_threshold: float = 0.5
    gravity: float = 9.81
    swing_start_height: float = 0.01
    baumgarte: float = 20.0

    def __post_init__(self):
        for name in ("lengths", "com_offsets", "masses", "inertias", "torque_limits",
                     "velocity_limits"):
            object.__setattr__(self, name, _tuple5(name, getattr(self, name)))
        for name in ("lengths", "masses", "inertias", "torque_limits", "velocity_limits"):
            if min(getattr(self, name)) <= 0:
                raise ConfigurationError(f"{name} must be strictly positive")
        if min(self.com_offsets) < 0:
            raise ConfigurationError("com_offsets must be non-negative")
        if self.dt <= 0 or self.t_total < self.dt:
            raise ConfigurationError("need dt > 0 and t_total >= dt")
        if not 0 < self.z_nom < self.lengths[0] + self.lengths[1]:
            raise ConfigurationError("z_nom must be below the stance-leg length")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_total / self.dt))

    @property
    def total_mass(self) -> float:
        return float(sum(self.masses))

    @cached_property
    def arrays(self) -> "ModelArrays":
        return ModelArrays.from_config(self)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in self.__dict__.items() if not k.startswith("_") and k != "arrays"}

    @classmethod
    def from_dict(cls, data: dict) -> "BipedConfig":
        return cls(**data)


@dataclass(frozen=True)
class ModelArrays:
    """Constant weight arrays the compiled kernels work on."""

    W: np.ndarray
    inertia: np.ndarray
    mP: np.ndarray
    wc: np.ndarray
    wf: np.ndarray
    wh: np.ndarray
    sign: np.ndarray
    g: float
    baumgarte: float
    tau_lim: np.ndarray
    vel_lim: np.ndarray

    @classmethod
    def from_config(cls, cfg: BipedConfig) -> "ModelArrays":
        L = np.array(cfg.lengths)
        m = np.array(cfg.masses)
        P = np.zeros((N_JOINTS, N_JOINTS))
        for k, path in enumerate(_SEGMENT_PATH):
            for j in path:
                P[k, j] = L[j]
            P[k, k] = cfg.com_offsets[k]
        W = np.einsum("k,ki,kj->ij", m, P, P)
        mP = m @ P
        wf = np.array([L[0], L[1], 0.0, L[3], L[4]])
        wh = np.array([L[0], L[1], 0.0, 0.0, 0.0])
        return cls(W=W, inertia=np.array(cfg.inertias), mP=mP, wc=mP / m.sum(), wf=wf,
                   wh=wh, sign=SEGMENT_SIGN.copy(), g=float(cfg.gravity),
                   baumgarte=float(cfg.baumgarte), tau_lim=np.array(cfg.torque_limits),
                   vel_lim=np.array(cfg.velocity_limits))


@dataclass
class RobotState:
    q: np.ndarray
    dq: np.ndarray
    ddq: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    tau: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    contact: Contact = Contact.SWING_AIRBORNE
    stance_anchor: np.ndarray = field(default_factory=lambda: np.zeros(2))
    swing_anchor: np.ndarray = field(default_factory=lambda: np.zeros(2))
    t: float = 0.0
    t_td: float | None = None
    s_td: float | None = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.dq = np.asarray(self.dq, dtype=float)
        for name in ("q", "dq", "ddq", "tau"):
            if np.shape(getattr(self, name)) != (N_JOINTS,):
                raise ValueError(f"{name} must have shape ({N_JOINTS},)")

    def copy(self) -> "RobotState":
        return replace(self, q=self.q.copy(), dq=self.dq.copy(), ddq=self.ddq.copy(),
                       tau=self.tau.copy(), stance_anchor=self.stance_anchor.copy(),
                       swing_anchor=self.swing_anchor.copy())


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NonPhysicalStateError(f"non-finite {what}")


def mass_matrix(cfg: BipedConfig, q) -> np.ndarray:
    a = cfg.arrays
    return K.mass_matrix(np.asarray(q, float), a.W, a.inertia, a.sign)


def bias_forces(cfg: BipedConfig, q, dq) -> np.ndarray:
    """Coriolis, centrifugal and gravity terms h(q, dq)."""
    a = cfg.arrays
    return K.bias_forces(np.asarray(q, float), np.asarray(dq, float), a.W, a.mP, a.sign, a.g)


def forward_dynamics(cfg: BipedConfig, state: RobotState, tau) -> np.ndarray:
    """Joint accelerations for the given torques under the active contact constraint."""
    tau = np.asarray(tau, float)
    if tau.shape != (N_JOINTS,):
        raise ValueError(f"torque vector must have {N_JOINTS} entries")
    a = cfg.arrays
    M = K.mass_matrix(state.q, a.W, a.inertia, a.sign)
    _check_finite(M, "mass matrix")
    if np.linalg.cond(M) > 1e12:
        raise NonPhysicalStateError("mass matrix is singular")
    ddq = K.forward_dynamics(state.q, state.dq, tau, state.contact.code, state.swing_anchor,
                             a.W, a.inertia, a.mP, a.wf, a.sign, a.g, a.baumgarte)
    _check_finite(ddq, "joint accelerations")
    return ddq


def inverse_dynamics(cfg: BipedConfig, state: RobotState, ddq) -> np.ndarray:
    """Torques realizing ``ddq``; in double support the minimum-norm choice."""
    a = cfg.arrays
    return K.inverse_dynamics(state.q, state.dq, np.asarray(ddq, float), state.contact.code,
                              a.W, a.inertia, a.mP, a.wf, a.sign, a.g)


def gravity_compensation(cfg: BipedConfig, state: RobotState) -> np.ndarray:
    return inverse_dynamics(cfg, state, np.zeros(N_JOINTS))


def step(cfg: BipedConfig, state: RobotState, tau, dt: float | None = None,
         detect_contact: bool = True) -> RobotState:
    """Advance one semi-implicit Euler tick.

    Torques are clamped to the configured limits.  A swing foot crossing the
    ground while moving down welds to the crossing point (interpolated within
    the tick) and the velocities are projected onto the constraint.
    ``detect_contact=False`` disables the ground, for passive-dynamics checks.
    """
    if dt is None:
        dt = cfg.dt
    a = cfg.arrays
    q, dq, ddq, applied, contact, anchor, frac = K.integrate(
        state.q, state.dq, np.asarray(tau, float), state.contact.code, state.swing_anchor,
        float(dt), a.tau_lim, a.vel_lim, a.W, a.inertia, a.mP, a.wf, a.sign, a.g, a.baumgarte, detect_contact)
    new = RobotState(q=q, dq=dq, ddq=ddq, tau=applied,
                     contact=Contact.DOUBLE_SUPPORT if contact == K.DOUBLE else Contact.SWING_AIRBORNE,
                     stance_anchor=state.stance_anchor.copy(), swing_anchor=anchor,
                     t=state.t + dt, t_td=state.t_td, s_td=state.s_td)
    if frac >= 0:
        new.t_td = state.t + frac * dt
        new.s_td = float(anchor[0])
    return new


_POINT_WEIGHTS = {"com": "wc", "swing-foot": "wf", "hip": "wh"}


def _weights(cfg, which):
    try:
        return getattr(cfg.arrays, _POINT_WEIGHTS[which])
    except KeyError:
        raise ValueError(f"unknown point {which!r}; expected one of {sorted(_POINT_WEIGHTS)}") from None


def point_position(cfg: BipedConfig, q, which: str = "com") -> np.ndarray:
    u, _ = K.unit_vectors(np.asarray(q, float), cfg.arrays.sign)
    return K.point(_weights(cfg, which), u)


def point_jacobian(cfg: BipedConfig, state_or_q, which: str = "com") -> np.ndarray:
    q = state_or_q.q if isinstance(state_or_q, RobotState) else np.asarray(state_or_q, float)
    _, du = K.unit_vectors(q, cfg.arrays.sign)
    return K.jacobian(_weights(cfg, which), du)


def point_bias_acceleration(cfg: BipedConfig, state: RobotState, which: str = "com") -> np.ndarray:
    u, _ = K.unit_vectors(state.q, cfg.arrays.sign)
    return K.bias_acceleration(_weights(cfg, which), u, state.dq)


def com_state(cfg: BipedConfig, state: RobotState) -> tuple[np.ndarray, np.ndarray]:
    pos = point_position(cfg, state.q, "com")
    vel = point_jacobian(cfg, state, "com") @ state.dq
    return pos, vel


def swing_foot_state(cfg: BipedConfig, state: RobotState) -> tuple[np.ndarray, np.ndarray]:
    pos = point_position(cfg, state.q, "swing-foot")
    vel = point_jacobian(cfg, state, "swing-foot") @ state.dq
    return pos, vel


def mechanical_energy(cfg: BipedConfig, state: RobotState) -> float:
    M = mass_matrix(cfg, state.q)
    kinetic = 0.5 * state.dq @ M @ state.dq
    potential = cfg.total_mass * cfg.gravity * point_position(cfg, state.q, "com")[1]
    return float(kinetic + potential)


def standing_posture(cfg: BipedConfig) -> np.ndarray:
    """Upright-torso posture with the CoM over the stance foot at ``z_nom``
    and the swing foot hovering above the stance foot."""
    target = np.array([0.0, cfg.z_nom, 0.0, cfg.swing_start_height])

    def residual(q):
        com = point_position(cfg, q, "com")
        foot = point_position(cfg, q, "swing-foot")
        torso = q[0] + q[1] + q[2]
        return np.concatenate([np.r_[com, foot] - target, [torso]])

    guess = np.array([0.15, -0.3, 0.15, 0.15, -0.3])
    sol = optimize.least_squares(residual, guess, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    if not sol.success or np.max(np.abs(sol.fun)) > 1e-9:
        raise ConfigurationError("no standing posture satisfies the CoM height and foot clearance")
    q = sol.x
    # knees must bend the anatomical way for the posture to be meaningful
    if q[1] > 0 or q[4] > 0:
        raise ConfigurationError("standing posture solve converged to a hyperextended knee")
    return q


def init_standing(cfg: BipedConfig, com_velocity: float, posture: np.ndarray | None = None) -> RobotState:
    """Standing state whose CoM moves forward at ``com_velocity``.

    Joint velocities are the minimum-norm solution of
    ``J_com @ dq = (com_velocity, 0)``.
    """
    if com_velocity < 0:
        raise ConfigurationError("initial CoM velocity must be non-negative")
    q = standing_posture(cfg) if posture is None else np.array(posture, float)
    jac = point_jacobian(cfg, q, "com")
    dq = np.linalg.lstsq(jac, np.array([com_velocity, 0.0]), rcond=None)[0]
    return RobotState(q=q, dq=dq)


def check_termination(cfg: BipedConfig, state: RobotState, t: float) -> TerminationStatus:
    at_end = t >= cfg.t_total - 0.5 * cfg.dt
    com_z = point_position(cfg, state.q, "com")[1]
    code = K.termination_code(state.dq, com_z, state.contact.code, at_end,
                              cfg.velocity_threshold, cfg.fall_height, cfg.settle_threshold)
    status = Status.from_code(code)
    return TerminationStatus(status, float(min(t, cfg.t_total)))


def write_log_csv(path, times, q, dq, tau, com, foot) -> None:
    """One row per tick: time, q, dq, tau, CoM (x, z, vx, vz), swing foot (x, z)."""
    header = (["t"] + [f"q_{n}" for n in JOINT_NAMES] + [f"dq_{n}" for n in JOINT_NAMES]
              + [f"tau_{n}" for n in JOINT_NAMES] + ["com_x", "com_z", "com_vx", "com_vz",
                                                     "foot_x", "foot_z"])
    n = len(times)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(n):
            tau_k = tau[k] if k < len(tau) else np.full(N_JOINTS, np.nan)
            w.writerow([repr(float(v)) for v in
                        np.concatenate([[times[k]], q[k], dq[k], tau_k, com[k], foot[k]])])
