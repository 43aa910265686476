"""Acceptance gate: one PASS/FAIL line per criterion.

Criterion 10 runs the desk-scale pipeline through the CLI and is shared
with criteria 8 and 12.
"""
import csv
import json
import math
import os
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from stepmap.bayesopt import BOBudget, expected_improvement, gp_fit
from stepmap.biped import (BipedConfig, Contact, RobotState, forward_dynamics, inverse_dynamics,
                           mechanical_energy, point_bias_acceleration, point_jacobian,
                           point_position, standing_posture, step)
from stepmap.cli import FILES, main
from stepmap.config import PipelineConfig
from stepmap.controller import ControllerGains, solve_torques, solve_with_accelerations
from stepmap.episode import EpisodeOutcome, InitialCondition, ObjectiveWeights, objective, torque_integral
from stepmap.maps import (TorqueMap, column_argmins, compare_lipm, fit_step_selector,
                          lipm_predict_step, near_optimal_regions, read_reach_map)
from stepmap.paramgrid import ParamGrid, optimize_pair, query_params
from stepmap.svm import SafeRegionModel, dual_objective, fit_svm, rbf_kernel, smo
from stepmap.trajectory import GaitParams, SwingTrajConfig, com_plan, gen_com_traj, gen_swing_traj, min_jerk

from test_svm import _projected_gradient


def verdict(capsys, num, title, ok, detail, seconds=None, limit=None, blocking=True):
    if limit is not None:
        ok = ok and seconds < limit
    timing = f" [{seconds:.1f} s" + (f" / limit {limit:g} s]" if limit else "]") if seconds is not None else ""
    line = f"ACCEPTANCE {num:>2} {'PASS' if ok else 'FAIL'} {title}: {detail}{timing}"
    with capsys.disabled():
        print("\n" + line)
    if blocking:
        assert ok, line


# ---------------------------------------------------------------- criterion 1

def test_c01_constants(capsys):
    t0 = time.perf_counter()
    c = PipelineConfig()
    w = c.weights
    checks = {
        "weights": (w.w_f, w.w_swing, w.w_x_mid, w.w_z, w.w_tau) == (0.001, 50.0, 1.0, 1.0, 0.0002),
        "bounds": c.bounds == {"t_min": (0.01, 0.99), "s_max": (0.01, 0.99),
                               "t_swing_start": (0.01, 0.08), "s_speed": (0.2, 3.0)},
        "z_nom": c.biped.z_nom == 0.925,
        "z_max": c.swing.z_max == 0.08,
        "dt": c.biped.dt == 1e-3,
        "t_total": c.biped.t_total == 7.0,
        "velocity_threshold": c.biped.velocity_threshold == 1e6,
        "budget": (c.budget.n_random, c.budget.n_bayes) == (100, 70),
        "phase1": (c.phase1.n_v, c.phase1.n_s) == (15, 10),
        "class_weights": c.safe_region.class_weights == (1.0, 14.0),
    }
    bad = [k for k, v in checks.items() if not v]
    verdict(capsys, 1, "constants fidelity", not bad, "all exact" if not bad else f"mismatch {bad}",
            time.perf_counter() - t0, 1)


# ---------------------------------------------------------------- criterion 2

def test_c02_trajectories(capsys):
    t0 = time.perf_counter()
    bc = 0.0
    for s0, s1, T in [(0.0, 1.0, 1.0), (0.2, -0.3, 0.37), (0.01, 0.8, 0.5)]:
        for t, target in ((0.0, s0), (T, s1)):
            p, v, a = min_jerk(s0, s1, T, t)
            bc = max(bc, abs(p - target), abs(v), abs(a))
    p = GaitParams(0.3, 0.6, 0.03, 1.2)
    sw = SwingTrajConfig()
    apex = 0.0
    for s_des in (0.2, 0.36, 0.7):
        # choose dt so that mid-swing falls on a sample
        t_mid = p.t_swing_start + 0.5 * p.swing_duration(s_des)
        tr = gen_swing_traj(s_des, p, sw, dt=t_mid / 400, t_total=2.0)
        apex = max(apex, abs(tr.samples[400, 2] - sw.z_max))
    res = 0.0
    dt = 1e-4
    for v0, s_des in [(0.1, 0.2), (0.3, 0.4), (0.5, 0.8), (0.2, 0.7)]:
        plan = com_plan(v0, p, s_des, 0.925)
        x = gen_com_traj(v0, p, s_des, 0.925, dt=dt, t_total=3.0).samples[:, 0]
        tc = np.arange(1, len(x) - 1) * dt
        acc = (x[2:] - 2 * x[1:-1] + x[:-2]) / dt**2
        piv = np.where(tc <= plan.t_switch, 0.0, plan.pivot)
        ok = (np.abs(tc - plan.t_switch) > 2 * dt) & (tc < plan.t_freeze - 2 * dt)
        res = max(res, np.abs(acc - plan.omega**2 * (x[1:-1] - piv))[ok].max())
    ok = bc < 1e-12 and apex < 1e-9 and res < 1e-6
    verdict(capsys, 2, "trajectory suite",
            ok, f"min-jerk BC err {bc:.1e}, apex err {apex:.1e}, LIPM residual {res:.1e} m/s^2",
            time.perf_counter() - t0, 5)


# ---------------------------------------------------------------- criterion 3

def test_c03_dynamics(capsys):
    t0 = time.perf_counter()
    cfg = BipedConfig()
    rng = np.random.default_rng(0)
    rt = jac = 0.0
    for _ in range(50):
        q = rng.uniform(-1.2, 1.2, 5)
        dq = rng.uniform(-3, 3, 5)
        ddq = rng.uniform(-50, 50, 5)
        s = RobotState(q=q, dq=dq)
        rt = max(rt, np.abs(forward_dynamics(cfg, s, inverse_dynamics(cfg, s, ddq)) - ddq).max())
        for which in ("com", "swing-foot"):
            h = 1e-6
            fd = (point_position(cfg, q + h * dq, which) - point_position(cfg, q - h * dq, which)) / (2 * h)
            jac = max(jac, np.abs(point_jacobian(cfg, q, which) @ dq - fd).max())
    hang = BipedConfig(velocity_limits=(1e9,) * 5)
    q0 = np.array([math.pi - 0.1, 0.05, 0.0, math.pi, 0.05])

    def energy_after(dt_):
        s = RobotState(q=q0, dq=np.zeros(5))
        for _ in range(int(round(1.0 / dt_))):
            s = step(hang, s, np.zeros(5), dt=dt_, detect_contact=False)
        return mechanical_energy(hang, s)

    drift = abs(energy_after(1e-3) - energy_after(1e-5))
    ok = rt < 1e-9 and jac < 1e-6 and drift < 1e-2
    verdict(capsys, 3, "dynamics suite", ok,
            f"ID/FD round trip {rt:.1e} rad/s^2, Jacobian err {jac:.1e} m/s, "
            f"energy drift {drift:.1e} J/s vs dt/100", time.perf_counter() - t0, 30)


# ---------------------------------------------------------------- criterion 4

def test_c04_controller(capsys):
    t0 = time.perf_counter()
    cfg = BipedConfig()
    q0 = standing_posture(cfg)
    rng = np.random.default_rng(1)
    s = RobotState(q=q0 + 0.05 * rng.normal(size=5), dq=0.3 * rng.normal(size=5))
    g = ControllerGains()
    foot = point_position(cfg, s.q, "swing-foot")
    com = point_position(cfg, s.q, "com")
    sref = np.array([foot + [0.05, 0.02], [0.1, 0.0], [0.0, 0.0]])
    accs = []
    for _ in range(10):
        cref = np.array([com + rng.normal(scale=0.1, size=2), rng.normal(size=2), rng.normal(size=2)])
        _, ddq = solve_with_accelerations(cfg, g, cref, sref, 0.0, s, s.q)
        accs.append(point_jacobian(cfg, s, "swing-foot") @ ddq + point_bias_acceleration(cfg, s, "swing-foot"))
    inv = float(np.max(np.abs(np.array(accs) - accs[0])))

    foot0 = point_position(cfg, q0, "swing-foot")
    com0 = point_position(cfg, q0, "com")
    hold = RobotState(q=q0.copy(), dq=np.zeros(5), contact=Contact.DOUBLE_SUPPORT, swing_anchor=foot0)
    ref_c = np.array([com0, [0, 0], [0, 0]])
    ref_f = np.array([foot0, [0, 0], [0, 0]])
    worst = 0.0
    for _ in range(1000):
        hold = step(cfg, hold, solve_torques(cfg, g, ref_c, ref_f, hold.t, hold, q0), detect_contact=False)
        worst = max(worst, float(np.linalg.norm(hold.dq)))
    ok = inv < 1e-6 and worst < 0.05
    verdict(capsys, 4, "controller priority", ok,
            f"swing-foot acceleration spread {inv:.1e} m/s^2, max |dq| in hold {worst:.1e} rad/s",
            time.perf_counter() - t0, 30)


# ---------------------------------------------------------------- criterion 5

def test_c05_objective(capsys):
    t0 = time.perf_counter()
    p = GaitParams(0.3, 0.6, 0.03, 1.2)
    ic = InitialCondition(0.3, 0.4)
    w = ObjectiveWeights()

    def J(**kw):
        base = dict(ic=ic, params=p, status=None, t_term=7.0, t_total=7.0, t_lo=0.03, t_td=0.3,
                    s_td=0.4, s_stance=0.0, x_f=0.2, z_f=0.925, j_tau=0.0)
        base.update(kw)
        return objective(EpisodeOutcome(**base), ic, w, 7.0, 0.925)

    errs = [abs(J(j_tau=10000.0) + 2.0), abs(J(t_term=2.0) + 0.005), abs(J(s_td=0.3, x_f=0.15) + 0.5)]
    tau = np.zeros((1000, 5))
    tau[:, [0, 4]] = 10.0
    ti = torque_integral(tau, 0.0, 0.5, 1e-3)
    ok = max(errs) < 1e-12 and abs(ti - 100.0) < 1e-9
    verdict(capsys, 5, "objective arithmetic", ok,
            f"hand cases max err {max(errs):.1e}, constant-torque integral {ti!r} (expect 100)",
            time.perf_counter() - t0, 1)


# ---------------------------------------------------------------- criterion 6

def test_c06_bayesopt(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    X = rng.random((15, 4))
    y = np.cos(4 * X[:, 0]) + X[:, 1] * X[:, 2]
    ell, noise = 0.5, 1e-4
    gp = gp_fit(X, y, (ell,), (noise,))
    d2 = ((X[:, None] - X[None]) ** 2).sum(-1)
    Kinv = np.linalg.inv(np.exp(-d2 / (2 * ell**2)) + noise * np.eye(15))
    Xq = rng.random((8, 4))
    ks = np.exp(-((Xq[:, None] - X[None]) ** 2).sum(-1) / (2 * ell**2))
    ys = (y - y.mean()) / y.std()
    m_ref = y.mean() + y.std() * ks @ Kinv @ ys
    v_ref = (1 - np.einsum("ij,jk,ik->i", ks, Kinv, ks)) * y.var()
    m, v = gp.predict(Xq)
    gp_err = max(np.abs(m - m_ref).max(), np.abs(v - v_ref).max())

    mc_err = 0.0
    for mu, sd, best in [(0.0, 1.0, 0.0), (1.0, 0.3, 0.2), (-1.0, 2.0, 1.0)]:
        z = np.random.default_rng(9).normal(mu, sd, 1_000_000)
        mc_err = max(mc_err, abs(expected_improvement([mu], [sd * sd], best)[0] - np.maximum(z - best, 0).mean()))

    p0 = np.array([0.3, 0.7, 0.5, 0.2])
    lo = np.array([0.01, 0.01, 0.01, 0.2])
    span = np.array([0.98, 0.98, 0.07, 2.8])
    hits = 0
    for seed in range(10):
        r = optimize_pair(InitialCondition(0.3, 0.4), BOBudget(20, 30), seed=seed,
                          fn=lambda u: -float(np.sum((u - p0) ** 2)))
        hits += np.linalg.norm((r.params.as_array() - lo) / span - p0) < 0.05
    ok = gp_err < 1e-8 and mc_err < 3e-3 and hits >= 9
    verdict(capsys, 6, "BO suite", ok,
            f"GP vs dense solve {gp_err:.1e}, EI vs MC {mc_err:.1e}, synthetic recovery {hits}/10",
            time.perf_counter() - t0, 120)


# ---------------------------------------------------------------- criterion 7

def test_c07_interpolation(capsys):
    t0 = time.perf_counter()
    V = np.array([0.1, 0.2, 0.35, 0.5])
    S = np.array([0.1, 0.4, 0.8])
    P = np.random.default_rng(3).uniform(0.05, 0.9, (4, 3, 4))
    g = ParamGrid(V, S, P, np.zeros((4, 3)))
    q = lambda v, s: query_params(g, InitialCondition(v, s)).as_array()
    node = max(np.abs(q(v, s) - P[i, j]).max() for i, v in enumerate(V) for j, s in enumerate(S))
    center = np.abs(q(0.275, 0.6) - P[1:3, 1:3].mean(axis=(0, 1))).max()
    cont = 0.0
    for vb in V[1:-1]:
        for s in (0.15, 0.5, 0.77):
            cont = max(cont, np.abs(q(np.nextafter(vb, 0), s) - q(vb, s)).max())
    for sb in S[1:-1]:
        for v in (0.12, 0.3, 0.49):
            cont = max(cont, np.abs(q(v, np.nextafter(sb, 0)) - q(v, sb)).max())
    ok = node < 1e-12 and center < 1e-12 and cont < 1e-12
    verdict(capsys, 7, "interpolation", ok,
            f"node err {node:.1e}, cell-centre err {center:.1e}, cross-cell jump {cont:.1e}",
            time.perf_counter() - t0, 1)


# ---------------------------------------------------------------- criterion 9

def test_c09_step_selector(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    V = np.linspace(0.1, 0.5, 5)
    S = np.linspace(0.1, 0.8, 8)
    exact = True
    for _ in range(20):
        J = rng.uniform(100, 1000, (5, 8))
        J[rng.random(J.shape) < 0.3] = np.nan
        J[:, 4] = rng.uniform(100, 1000, 5)
        t = TorqueMap(V, S, J)
        ref = [min((x, j) for j, x in enumerate(row) if math.isfinite(x))[1] for row in J]
        exact &= bool(np.array_equal(column_argmins(t), ref))
    sel = fit_step_selector(t, 4)
    s_opt = S[column_argmins(t)]
    resid = float(np.max(np.abs([sel.poly(v) - s for v, s in zip(V, s_opt)])))
    masks = [near_optimal_regions(t, d) for d in (0.0, 0.05, 0.10, math.inf)]
    nested = all(np.all(a <= b) for a, b in zip(masks, masks[1:])) and np.array_equal(masks[-1], t.present)
    ok = exact and resid < 1e-8 and nested
    verdict(capsys, 9, "step selector", ok,
            f"argmin oracle {'equal' if exact else 'DIFFERS'}, quartic residual {resid:.1e}, "
            f"mask nesting {'holds' if nested else 'BROKEN'}", time.perf_counter() - t0, 10)


# ---------------------------------------------------------------- criterion 11

def test_c11_lipm(capsys):
    t0 = time.perf_counter()
    z, g = 0.925, 9.81
    w = math.sqrt(g / z)
    zero = lipm_predict_step(0.0, z, 0.4, g)
    sol = solve_ivp(lambda t, y: [y[1], w * w * y[0]], (0, 0.3), [0.0, 0.3], rtol=1e-12, atol=1e-14)
    x, xd = sol.y[:, -1]
    cp0 = lipm_predict_step(0.3, z, 0.0, g)
    cp3 = lipm_predict_step(0.3, z, 0.3, g)
    err = max(abs(cp0 - 0.0921), abs(cp3 - (x + xd / w)))
    grid = ParamGrid([0.1, 0.5], [0.1, 0.8], np.tile([0.3, 0.6, 0.03, 1.0], (2, 2, 1)), np.zeros((2, 2)))
    J = np.tile(np.linspace(900, 200, 8), (3, 1))
    rep = compare_lipm(TorqueMap([0.1, 0.25, 0.4], np.linspace(0.1, 0.8, 8), J), None, grid, z, g)
    keys = set(rep.summary())
    fmt = {"mean", "std", "min", "max"} <= keys
    ok = zero == 0.0 and err < 1e-3 and fmt
    verdict(capsys, 11, "LIPM comparison", ok,
            f"cp(0)={zero}, cp(0.3 m/s)={cp0:.4f} m, ODE oracle err {err:.1e}, summary keys {sorted(keys)}",
            time.perf_counter() - t0, 5)


# ------------------------------------------------- criteria 8, 10, 12 (pipeline)

E2E = {"phase1": {"n_v": 5, "n_s": 5}, "phase2": {"n_v": 10, "n_s": 10},
       "budget": {"n_random": 30, "n_bayes": 20},
       "validation": {"n_reach": 200, "n_step": 50}}
PRODUCTS = ("grid", "traces", "reach", "torque", "episodes", "svm", "selector")


def _read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("e2e")
    cfg = root / "e2e.json"
    cfg.write_text(json.dumps(E2E))
    workers = str(min(os.cpu_count() or 1, 8))
    t0 = time.perf_counter()
    codes = {}
    for cmd in (["optimize"], ["map"], ["fit"], ["validate", "--mode", "reach"],
                ["validate", "--mode", "step-select"]):
        codes[" ".join(cmd)] = main(cmd + ["--config", str(cfg), "--out", str(root / "a"),
                                           "--seed", "0", "--workers", workers])
    seconds = time.perf_counter() - t0
    for cmd in (["optimize"], ["map"], ["fit"]):
        codes["rerun " + cmd[0]] = main(cmd + ["--config", str(cfg), "--out", str(root / "b"),
                                               "--seed", "0", "--workers", workers])
    return root, codes, seconds


def test_c08_svm(capsys, pipeline):
    t0 = time.perf_counter()
    Z = np.array([[0.0, 0.0], [1.0, 0.0]])
    K = rbf_kernel(Z, Z, 1.0)
    r = smo(K, np.array([1.0, -1.0]), 1e6, tol=1e-10)
    f = K @ (r.alpha * [1, -1]) + r.bias
    pair_ok = bool(np.allclose(f, [1, -1], atol=1e-9) and np.all(r.alpha > 0))

    rng = np.random.default_rng(5)
    X = np.vstack([rng.normal([0, 0], 0.7, (10, 2)), rng.normal([1.2, 1.0], 0.7, (10, 2))])
    y = np.r_[np.ones(10), -np.ones(10)]
    K = rbf_kernel(X, X, 0.8)
    C = np.where(y > 0, 2.0, 6.0)
    a = smo(K, y, C, tol=1e-6).alpha
    gap = abs(dual_objective(a, y, K) - dual_objective(_projected_gradient((y[:, None] * y) * K, y, C), y, K))
    t_unit = time.perf_counter() - t0

    root = pipeline[0] / "a"
    reach = read_reach_map(root / FILES["reach"])
    model = SafeRegionModel.load(root / FILES["svm"])
    Xr, lab = reach.points()
    recall = float((model.decision_function(Xr[lab]) > 0).mean())
    ok = pair_ok and gap < 1e-3 and recall >= 0.95
    verdict(capsys, 8, "SVM", ok,
            f"separable pair {'ok' if pair_ok else 'WRONG'}, dual gap vs oracle {gap:.1e}, "
            f"reachable recall {recall:.3f} on {lab.sum()}/{lab.size} reachable cells (C={model.C:g})",
            t_unit, 60)


def test_c10_end_to_end(capsys, pipeline):
    root, codes, seconds = pipeline
    a, b = root / "a", root / "b"
    reach = _read_rows(a / "validation_reach.csv")
    stepsel = _read_rows(a / "validation_step-select.csv")
    fr = sum(int(r["reached"]) for r in reach) / len(reach)
    fs = sum(int(r["reached"]) for r in stepsel) / len(stepsel)
    same = all((a / FILES[k]).read_bytes() == (b / FILES[k]).read_bytes() for k in PRODUCTS)
    exits = all(c == 0 for c in codes.values())
    ok = exits and len(reach) == 200 and len(stepsel) == 50 and fr >= 0.95 and fs >= 0.95 and same
    verdict(capsys, 10, "end-to-end pipeline", ok,
            f"exit codes {sorted(set(codes.values()))}, reach {fr:.3f} (n={len(reach)}), "
            f"step-select {fs:.3f} (n={len(stepsel)}), rerun byte-identical: {same}",
            seconds, 1800)


def test_c12_timing_property(capsys, pipeline):
    rows = _read_rows(pipeline[0] / "a" / FILES["timings"])
    rows = [r for r in rows if r["status"] == "ok"]
    v_hi = np.median(sorted({float(r["v0"]) for r in rows}))
    s_hi = np.median(sorted({float(r["s_des"]) for r in rows}))
    quad = [r for r in rows if float(r["v0"]) >= v_hi and float(r["s_des"]) >= s_hi]
    overall = np.mean([float(r["seconds"]) for r in rows])
    q_mean = np.mean([float(r["seconds"]) for r in quad])
    early = np.mean([float(r["early_fraction"]) for r in quad])
    dominated = early > 0.5
    holds = q_mean <= 1.2 * overall
    detail = (f"quadrant mean {q_mean:.2f} s vs overall {overall:.2f} s (ratio {q_mean / overall:.2f}), "
              f"early-termination fraction in quadrant {early:.2f}")
    if not dominated:
        detail += "; early terminations do not dominate this run"
    verdict(capsys, 12, "timing property (informational)", holds, detail,
            blocking=False)
