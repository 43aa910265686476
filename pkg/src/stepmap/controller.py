"""Prioritized task-space inverse dynamics controller.

Three tasks are stacked lexicographically: the swing foot (replaced by the
contact constraint once the foot is welded), the CoM in its nullspace, and
a joint posture regularizer in whatever freedom remains.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels as K
from .biped import BipedConfig, RobotState, point_jacobian, point_position
from .trajectory import Trajectory

TASKS = ("swing-foot", "com", "posture")


class TaskReference(NamedTuple):
    """Planar (x, z) reference for one task point."""

    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.array([self.position, self.velocity, self.acceleration], dtype=float)


@dataclass(frozen=True)
class ControllerGains:
    kp_swing: float = 100.0
    kd_swing: float = 20.0
    kp_com: float = 100.0
    kd_com: float = 20.0
    kp_posture: float = 100.0
    kd_posture: float = 20.0
    damping: float = 1e-6
    priority: tuple = TASKS

    def __post_init__(self):
        object.__setattr__(self, "priority", tuple(self.priority))
        for name in ("kp_swing", "kd_swing", "kp_com", "kd_com", "kp_posture", "kd_posture"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")
        if sorted(self.priority) != sorted(TASKS):
            raise ValueError(f"priority must order exactly the tasks {TASKS}")
        # the CoM may never outrank the swing foot; stepping stalls otherwise
        if self.priority != TASKS:
            raise ValueError("only the order swing-foot > com > posture is supported")

    def as_array(self) -> np.ndarray:
        return np.array([self.kp_swing, self.kd_swing, self.kp_com, self.kd_com,
                         self.kp_posture, self.kd_posture])

    def to_dict(self) -> dict:
        return {"kp_swing": self.kp_swing, "kd_swing": self.kd_swing, "kp_com": self.kp_com,
                "kd_com": self.kd_com, "kp_posture": self.kp_posture,
                "kd_posture": self.kd_posture, "damping": self.damping,
                "priority": list(self.priority)}

    @classmethod
    def from_dict(cls, data: dict) -> "ControllerGains":
        return cls(**data)


def reference_at(traj: Trajectory, t: float) -> TaskReference:
    """Sample an (x, z) task reference with finite-difference derivatives."""
    k = int(round((t - traj.start_time) / traj.period))
    ref = K.sample_ref(traj.samples, max(k, 0), traj.period)
    return TaskReference(ref[0], ref[1], ref[2])


def _as_reference(ref, t):
    if isinstance(ref, Trajectory):
        return reference_at(ref, t).as_array()
    if isinstance(ref, TaskReference):
        return ref.as_array()
    arr = np.asarray(ref, dtype=float)
    if arr.shape != (3, 2):
        raise ValueError("task reference must be (position, velocity, acceleration) over (x, z)")
    return arr


def solve_with_accelerations(cfg: BipedConfig, gains: ControllerGains, com_ref, swing_ref,
                             t: float, state: RobotState, posture_ref) -> tuple[np.ndarray, np.ndarray]:
    """Like :func:`solve_torques` but also returns the commanded joint accelerations."""
    a = cfg.arrays
    tau, ddq = K.controller(state.q, state.dq, state.contact.code, state.swing_anchor,
                            _as_reference(com_ref, t), _as_reference(swing_ref, t),
                            np.asarray(posture_ref, dtype=float), gains.as_array(),
                            gains.damping, a.tau_lim, a.W, a.inertia, a.mP, a.wc, a.wf,
                            a.sign, a.g, a.baumgarte)
    return tau, ddq


def solve_torques(cfg: BipedConfig, gains: ControllerGains, com_ref, swing_ref, t: float,
                  state: RobotState, posture_ref) -> np.ndarray:
    """Joint torques tracking the CoM and swing-foot references at time ``t``.

    References may be :class:`Trajectory` objects (sampled at ``t``),
    :class:`TaskReference` tuples, or 3x2 arrays.  The result is clamped to
    the torque limits.
    """
    return solve_with_accelerations(cfg, gains, com_ref, swing_ref, t, state, posture_ref)[0]


def task_error(x_ref, v_ref, cfg: BipedConfig, state: RobotState, task: str) -> tuple[np.ndarray, np.ndarray]:
    """World-frame (position, velocity) error ``reference - actual`` for a task point."""
    if task not in ("com", "swing-foot"):
        raise ValueError(f"unknown task {task!r}")
    x = point_position(cfg, state.q, task)
    v = point_jacobian(cfg, state, task) @ state.dq
    return np.asarray(x_ref, float) - x, np.asarray(v_ref, float) - v
