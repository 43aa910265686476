"""Compiled inner loops for the planar biped.

Every link angle is a cumulative sum of the joint coordinates
(stance ankle, stance knee, stance hip, swing hip, swing knee), so a point
fixed on the chain is a weighted sum of segment unit vectors
``u_j = (sin a_j, s_j cos a_j)`` with ``s_j = +1`` for segments pointing up
from their proximal joint and ``-1`` for the hanging swing leg.  All
Jacobians, the mass matrix and the bias forces follow from those weights.
"""
import numpy as np
from numba import njit

SINGLE = 0
DOUBLE = 1

RUNNING = 0
SUCCESS = 1
FELL_VELOCITY = 2
FELL_HEIGHT = 3
TIMEOUT_UNSETTLED = 4

N_JOINTS = 5


@njit(cache=True)
def unit_vectors(q, sign):
    a = np.cumsum(q)
    u = np.empty((2, N_JOINTS))
    du = np.empty((2, N_JOINTS))
    for j in range(N_JOINTS):
        sa = np.sin(a[j])
        ca = np.cos(a[j])
        u[0, j] = sa
        u[1, j] = sign[j] * ca
        du[0, j] = ca
        du[1, j] = -sign[j] * sa
    return u, du


@njit(cache=True)
def point(w, u):
    return u @ w


@njit(cache=True)
def jacobian(w, du):
    jac = np.zeros((2, N_JOINTS))
    acc0 = 0.0
    acc1 = 0.0
    for j in range(N_JOINTS - 1, -1, -1):
        acc0 += w[j] * du[0, j]
        acc1 += w[j] * du[1, j]
        jac[0, j] = acc0
        jac[1, j] = acc1
    return jac


@njit(cache=True)
def bias_acceleration(w, u, dq):
    """Point acceleration at zero joint acceleration (Jdot * qdot)."""
    da = np.cumsum(dq)
    out = np.zeros(2)
    for j in range(N_JOINTS):
        c = w[j] * da[j] * da[j]
        out[0] -= c * u[0, j]
        out[1] -= c * u[1, j]
    return out


@njit(cache=True)
def mass_matrix(q, W, inertia, sign):
    u, du = unit_vectors(q, sign)
    G = du.T @ du
    Mseg = W * G
    for j in range(N_JOINTS):
        Mseg[j, j] += inertia[j]
    A = np.tril(np.ones((N_JOINTS, N_JOINTS)))
    return A.T @ Mseg @ A


@njit(cache=True)
def bias_forces(q, dq, W, mP, sign, g):
    u, du = unit_vectors(q, sign)
    H = du.T @ u
    da = np.cumsum(dq)
    seg = -(W * H) @ (da * da)
    a = np.cumsum(q)
    for j in range(N_JOINTS):
        seg[j] -= g * mP[j] * sign[j] * np.sin(a[j])
    A = np.tril(np.ones((N_JOINTS, N_JOINTS)))
    return A.T @ seg


@njit(cache=True)
def constraint_rhs(wf, u, du, q, dq, anchor, baumgarte):
    jac = jacobian(wf, du)
    err = point(wf, u) - anchor
    derr = jac @ dq
    rhs = -bias_acceleration(wf, u, dq) - 2.0 * baumgarte * derr - baumgarte * baumgarte * err
    return jac, rhs


@njit(cache=True)
def forward_dynamics(q, dq, tau, contact, anchor, W, inertia, mP, wf, sign, g, baumgarte):
    M = mass_matrix(q, W, inertia, sign)
    h = bias_forces(q, dq, W, mP, sign, g)
    if contact == SINGLE:
        return np.linalg.solve(M, tau - h)
    u, du = unit_vectors(q, sign)
    jac, rhs = constraint_rhs(wf, u, du, q, dq, anchor, baumgarte)
    K = np.zeros((N_JOINTS + 2, N_JOINTS + 2))
    K[:N_JOINTS, :N_JOINTS] = M
    K[:N_JOINTS, N_JOINTS:] = -jac.T
    K[N_JOINTS:, :N_JOINTS] = jac
    b = np.zeros(N_JOINTS + 2)
    b[:N_JOINTS] = tau - h
    b[N_JOINTS:] = rhs
    sol = np.linalg.solve(K, b)
    return sol[:N_JOINTS]


@njit(cache=True)
def inverse_dynamics(q, dq, ddq, contact, W, inertia, mP, wf, sign, g):
    M = mass_matrix(q, W, inertia, sign)
    h = bias_forces(q, dq, W, mP, sign, g)
    full = M @ ddq + h
    if contact == SINGLE:
        return full
    # minimum-norm torques: the welded swing foot absorbs what it can
    u, du = unit_vectors(q, sign)
    jac = jacobian(wf, du)
    lam = np.linalg.solve(jac @ jac.T, jac @ full)
    return full - jac.T @ lam


@njit(cache=True)
def impact_projection(q, dq, W, inertia, wf, sign):
    M = mass_matrix(q, W, inertia, sign)
    u, du = unit_vectors(q, sign)
    jac = jacobian(wf, du)
    MinvJt = np.linalg.solve(M, jac.T)
    lam = np.linalg.solve(jac @ MinvJt, jac @ dq)
    return dq - MinvJt @ lam


@njit(cache=True)
def integrate(q, dq, tau, contact, anchor, dt, tau_lim, vel_lim,
              W, inertia, mP, wf, sign, g, baumgarte, detect_contact=True):
    """One semi-implicit Euler tick; returns new state and touchdown data.

    ``td_frac`` is negative when no touchdown happened during the tick,
    otherwise the fraction of ``dt`` at which the swing foot crossed z = 0.
    """
    applied = np.minimum(np.maximum(tau, -tau_lim), tau_lim)
    ddq = forward_dynamics(q, dq, applied, contact, anchor, W, inertia, mP, wf, sign, g, baumgarte)
    u0, _ = unit_vectors(q, sign)
    foot0 = point(wf, u0)
    dq1 = dq + ddq * dt
    dq1 = np.minimum(np.maximum(dq1, -vel_lim), vel_lim)
    q1 = q + dq1 * dt
    new_contact = contact
    new_anchor = anchor.copy()
    td_frac = -1.0
    if contact == SINGLE and detect_contact:
        u1, du1 = unit_vectors(q1, sign)
        foot1 = point(wf, u1)
        vz = (jacobian(wf, du1) @ dq1)[1]
        if foot1[1] <= 0.0 and vz < 0.0:
            dz = foot0[1] - foot1[1]
            td_frac = foot0[1] / dz if dz > 0.0 else 1.0
            td_frac = min(max(td_frac, 0.0), 1.0)
            new_anchor[0] = foot0[0] + td_frac * (foot1[0] - foot0[0])
            new_anchor[1] = 0.0
            new_contact = DOUBLE
            dq1 = impact_projection(q1, dq1, W, inertia, wf, sign)
    return q1, dq1, ddq, applied, new_contact, new_anchor, td_frac


@njit(cache=True)
def damped_pinv(jac, damping):
    m = jac.shape[0]
    JJt = jac @ jac.T
    for i in range(m):
        JJt[i, i] += damping
    return jac.T @ np.linalg.inv(JJt)


@njit(cache=True)
def null_projector(jac, rcond):
    n = jac.shape[1]
    return np.eye(n) - np.linalg.pinv(jac, rcond) @ jac


@njit(cache=True)
def controller(q, dq, contact, anchor, com_ref, swing_ref, posture_ref, gains,
               damping, tau_lim, W, inertia, mP, wc, wf, sign, g, baumgarte):
    """Strict-priority task-space inverse dynamics.

    ``com_ref`` and ``swing_ref`` are 3x2 arrays of (position, velocity,
    acceleration) rows over (x, z).  ``gains`` holds
    (kp_swing, kd_swing, kp_com, kd_com, kp_posture, kd_posture).
    Returns (clamped torques, commanded joint accelerations).
    """
    n = N_JOINTS
    u, du = unit_vectors(q, sign)
    ddq = np.zeros(n)
    N = np.eye(n)

    # level 1: swing foot task, or the contact constraint once welded
    if contact == SINGLE:
        J1 = jacobian(wf, du)
        x1 = point(wf, u)
        v1 = J1 @ dq
        a1 = (swing_ref[2] + gains[1] * (swing_ref[1] - v1)
              + gains[0] * (swing_ref[0] - x1) - bias_acceleration(wf, u, dq))
    else:
        J1, a1 = constraint_rhs(wf, u, du, q, dq, anchor, baumgarte)
    ddq = damped_pinv(J1, damping) @ a1
    N = null_projector(J1, 1e-9)

    # level 2: CoM task in the nullspace of level 1
    J2 = jacobian(wc, du)
    x2 = point(wc, u)
    v2 = J2 @ dq
    a2 = (com_ref[2] + gains[3] * (com_ref[1] - v2)
          + gains[2] * (com_ref[0] - x2) - bias_acceleration(wc, u, dq))
    J2N = J2 @ N
    ddq = ddq + damped_pinv(J2N, damping) @ (a2 - J2 @ ddq)
    N = N @ null_projector(J2N, 1e-9)

    # level 3: joint posture regularization in what is left
    a3 = gains[4] * (posture_ref - q) - gains[5] * dq
    ddq = ddq + N @ (a3 - ddq)

    tau = inverse_dynamics(q, dq, ddq, contact, W, inertia, mP, wf, sign, g)
    tau = np.minimum(np.maximum(tau, -tau_lim), tau_lim)
    return tau, ddq


@njit(cache=True)
def sample_ref(traj, k, dt):
    """(position, velocity, acceleration) over (x, z) at sample k, holding past the end."""
    n = traj.shape[0]
    out = np.zeros((3, 2))
    if k >= n - 1:
        out[0, 0] = traj[n - 1, 0]
        out[0, 1] = traj[n - 1, 2]
        return out
    km = max(k - 1, 0)
    kp = k + 1
    for c in range(2):
        col = 0 if c == 0 else 2
        out[0, c] = traj[k, col]
        out[1, c] = (traj[kp, col] - traj[km, col]) / ((kp - km) * dt)
        if k > 0:
            out[2, c] = (traj[kp, col] - 2.0 * traj[k, col] + traj[km, col]) / (dt * dt)
    return out


@njit(cache=True)
def termination_code(dq, com_z, contact, at_end, vel_threshold, fall_height, settle_threshold):
    speed = np.sqrt(np.sum(dq * dq))
    if not np.isfinite(speed) or speed > vel_threshold:
        return FELL_VELOCITY
    if not np.isfinite(com_z) or com_z < fall_height:
        return FELL_HEIGHT
    if at_end:
        if contact == DOUBLE and speed < settle_threshold:
            return SUCCESS
        return TIMEOUT_UNSETTLED
    return RUNNING


@njit(cache=True)
def simulate(q0, dq0, com_traj, swing_traj, posture_ref, n_steps, dt, gains, damping,
             tau_lim, vel_lim, vel_threshold, fall_height, settle_threshold,
             W, inertia, mP, wc, wf, sign, g, baumgarte):
    """Closed-loop episode.  Logs have n_steps + 1 rows for states, n_steps for torques."""
    n = N_JOINTS
    q_log = np.full((n_steps + 1, n), np.nan)
    dq_log = np.full((n_steps + 1, n), np.nan)
    tau_log = np.zeros((n_steps, n))
    com_log = np.full((n_steps + 1, 4), np.nan)
    foot_log = np.full((n_steps + 1, 2), np.nan)

    q = q0.copy()
    dq = dq0.copy()
    contact = SINGLE
    anchor = np.zeros(2)
    t_td = -1.0
    s_td = np.nan
    status = RUNNING
    k_term = n_steps

    u, du = unit_vectors(q, sign)
    q_log[0] = q
    dq_log[0] = dq
    com_log[0, :2] = point(wc, u)
    com_log[0, 2:] = jacobian(wc, du) @ dq
    foot_log[0] = point(wf, u)

    for k in range(n_steps):
        cref = sample_ref(com_traj, k, dt)
        sref = sample_ref(swing_traj, k, dt)
        tau, _ = controller(q, dq, contact, anchor, cref, sref, posture_ref, gains,
                            damping, tau_lim, W, inertia, mP, wc, wf, sign, g, baumgarte)
        q, dq, _, applied, new_contact, anchor, frac = integrate(
            q, dq, tau, contact, anchor, dt, tau_lim, vel_lim,
            W, inertia, mP, wf, sign, g, baumgarte)
        tau_log[k] = applied
        if frac >= 0.0:
            t_td = (k + frac) * dt
            s_td = anchor[0]
        contact = new_contact

        u, du = unit_vectors(q, sign)
        com = point(wc, u)
        q_log[k + 1] = q
        dq_log[k + 1] = dq
        com_log[k + 1, :2] = com
        com_log[k + 1, 2:] = jacobian(wc, du) @ dq
        foot_log[k + 1] = point(wf, u)

        status = termination_code(dq, com[1], contact, k + 1 == n_steps,
                                  vel_threshold, fall_height, settle_threshold)
        if status != RUNNING:
            k_term = k + 1
            break

    for k in range(k_term, n_steps):
        tau_log[k] = tau_lim
    return q_log, dq_log, tau_log, com_log, foot_log, status, k_term, t_td, s_td
