import numpy as np
import pytest

from stepmap.biped import (Contact, RobotState, forward_dynamics, gravity_compensation,
                           point_bias_acceleration, point_jacobian, point_position, step)
from stepmap.controller import ControllerGains, TaskReference, solve_torques, solve_with_accelerations, task_error
from stepmap.trajectory import Trajectory


def _ref(pos, vel=(0.0, 0.0), acc=(0.0, 0.0)):
    return np.array([pos, vel, acc], dtype=float)


def _task_acc(cfg, state, ddq, which):
    return point_jacobian(cfg, state, which) @ ddq + point_bias_acceleration(cfg, state, which)


@pytest.fixture
def moving(cfg, posture, rng):
    return RobotState(q=posture + 0.05 * rng.normal(size=5), dq=0.3 * rng.normal(size=5))


def test_swing_task_met_exactly(cfg, moving):
    g = ControllerGains()
    foot = point_position(cfg, moving.q, "swing-foot")
    com = point_position(cfg, moving.q, "com")
    sref = _ref(foot + [0.02, 0.03], (0.1, 0.0), (0.5, -0.2))
    _, ddq = solve_with_accelerations(cfg, g, _ref(com), sref, 0.0, moving, moving.q)
    v = point_jacobian(cfg, moving, "swing-foot") @ moving.dq
    want = sref[2] + g.kd_swing * (sref[1] - v) + g.kp_swing * (sref[0] - foot)
    # the damped pseudoinverse leaves a relative residual of order the damping
    np.testing.assert_allclose(_task_acc(cfg, moving, ddq, "swing-foot"), want, rtol=1e-5, atol=1e-6)
    # with two tasks of rank two on five joints the CoM task is met as well
    vc = point_jacobian(cfg, moving, "com") @ moving.dq
    want_c = g.kd_com * (0 - vc) + g.kp_com * (com - com)
    np.testing.assert_allclose(_task_acc(cfg, moving, ddq, "com"), want_c, rtol=1e-5, atol=1e-6)


def test_lower_priorities_do_not_disturb_the_swing_task(cfg, moving, rng):
    g = ControllerGains()
    foot = point_position(cfg, moving.q, "swing-foot")
    sref = _ref(foot + [0.05, 0.02])
    base = None
    for _ in range(5):
        cref = _ref(point_position(cfg, moving.q, "com") + rng.normal(scale=0.1, size=2),
                    rng.normal(size=2), rng.normal(size=2))
        post = moving.q + rng.normal(scale=0.3, size=5)
        _, ddq = solve_with_accelerations(cfg, g, cref, sref, 0.0, moving, post)
        a = _task_acc(cfg, moving, ddq, "swing-foot")
        if base is None:
            base = a
        np.testing.assert_allclose(a, base, atol=1e-6)


def test_posture_does_not_disturb_the_com_task(cfg, moving, rng):
    g = ControllerGains()
    sref = _ref(point_position(cfg, moving.q, "swing-foot"))
    cref = _ref(point_position(cfg, moving.q, "com") + [0.03, -0.01])
    accs = []
    for _ in range(4):
        _, ddq = solve_with_accelerations(cfg, g, cref, sref, 0.0, moving,
                                          moving.q + rng.normal(scale=0.3, size=5))
        accs.append(_task_acc(cfg, moving, ddq, "com"))
    np.testing.assert_allclose(accs, np.broadcast_to(accs[0], (4, 2)), atol=1e-6)


def test_double_support_respects_contact(cfg, posture):
    foot = point_position(cfg, posture, "swing-foot")
    s = RobotState(q=posture, dq=np.zeros(5), contact=Contact.DOUBLE_SUPPORT, swing_anchor=foot)
    com = point_position(cfg, posture, "com")
    _, ddq = solve_with_accelerations(cfg, ControllerGains(), _ref(com + [0.02, 0]), _ref(foot + [0.1, 0.1]),
                                      0.0, s, posture)
    # the swing reference is ignored once the foot is welded
    np.testing.assert_allclose(_task_acc(cfg, s, ddq, "swing-foot"), 0.0, atol=1e-6)


def test_holds_still_in_double_support(cfg, posture):
    foot = point_position(cfg, posture, "swing-foot")
    com = point_position(cfg, posture, "com")
    s = RobotState(q=posture.copy(), dq=np.zeros(5), contact=Contact.DOUBLE_SUPPORT, swing_anchor=foot)
    g = ControllerGains()
    worst = 0.0
    for k in range(1000):
        tau = solve_torques(cfg, g, _ref(com), _ref(foot), s.t, s, posture)
        s = step(cfg, s, tau, detect_contact=False)
        worst = max(worst, float(np.linalg.norm(s.dq)))
    assert worst < 0.05
    assert np.linalg.norm(point_position(cfg, s.q, "com") - com) < 1e-3


def test_static_reference_reproduces_gravity_compensation(cfg, posture):
    # at rest on target the commanded acceleration is zero, so torque is pure gravity compensation
    s = RobotState(q=posture, dq=np.zeros(5))
    tau, ddq = solve_with_accelerations(cfg, ControllerGains(),
                                        _ref(point_position(cfg, posture, "com")),
                                        _ref(point_position(cfg, posture, "swing-foot")),
                                        0.0, s, posture)
    np.testing.assert_allclose(ddq, 0.0, atol=1e-9)
    np.testing.assert_allclose(tau, gravity_compensation(cfg, s), atol=1e-7)


def test_torques_are_clamped(cfg, posture):
    s = RobotState(q=posture, dq=np.zeros(5))
    far = _ref(point_position(cfg, posture, "swing-foot") + [5.0, 5.0])
    tau = solve_torques(cfg, ControllerGains(), _ref(point_position(cfg, posture, "com")), far, 0.0, s, posture)
    assert np.all(np.abs(tau) <= np.array(cfg.torque_limits))


def test_unclamped_torques_realize_the_commanded_acceleration(cfg, posture):
    moving = RobotState(q=posture, dq=np.array([0.1, -0.1, 0.05, 0.2, -0.1]))
    sref = _ref(point_position(cfg, moving.q, "swing-foot") + [0.001, 0.001])
    cref = _ref(point_position(cfg, moving.q, "com"))
    tau, ddq = solve_with_accelerations(cfg, ControllerGains(), cref, sref, 0.0, moving, moving.q)
    assert np.all(np.abs(tau) < np.array(cfg.torque_limits))
    np.testing.assert_allclose(forward_dynamics(cfg, moving, tau), ddq, atol=1e-8)


def test_reference_types_agree(cfg, posture):
    s = RobotState(q=posture, dq=np.zeros(5))
    com = point_position(cfg, posture, "com")
    foot = point_position(cfg, posture, "swing-foot")
    arr = solve_torques(cfg, ControllerGains(), _ref(com), _ref(foot), 0.0, s, posture)
    nt = solve_torques(cfg, ControllerGains(), TaskReference(com, np.zeros(2), np.zeros(2)),
                       TaskReference(foot, np.zeros(2), np.zeros(2)), 0.0, s, posture)
    tr_c = Trajectory(1e-3, np.tile([com[0], 0.0, com[1]], (5, 1)))
    tr_f = Trajectory(1e-3, np.tile([foot[0], 0.0, foot[1]], (5, 1)))
    tr = solve_torques(cfg, ControllerGains(), tr_c, tr_f, 0.002, s, posture)
    np.testing.assert_allclose(arr, nt, atol=0)
    np.testing.assert_allclose(arr, tr, atol=1e-12)
    with pytest.raises(ValueError):
        solve_torques(cfg, ControllerGains(), np.zeros(3), _ref(foot), 0.0, s, posture)


def test_task_error(cfg, posture):
    s = RobotState(q=posture, dq=np.zeros(5))
    com = point_position(cfg, posture, "com")
    e, de = task_error(com + [0.1, 0.0], [0.2, 0.0], cfg, s, "com")
    np.testing.assert_allclose(e, [0.1, 0.0], atol=1e-12)
    np.testing.assert_allclose(de, [0.2, 0.0], atol=1e-12)
    with pytest.raises(ValueError):
        task_error(com, com, cfg, s, "knee")


@pytest.mark.parametrize("kw", [{"kp_com": 0.0}, {"damping": -1.0},
                                {"priority": ("com", "swing-foot", "posture")},
                                {"priority": ("com", "posture")}])
def test_gains_validation(kw):
    with pytest.raises(ValueError):
        ControllerGains(**kw)


def test_gains_round_trip():
    g = ControllerGains(kp_com=50.0)
    assert ControllerGains.from_dict(g.to_dict()) == g
