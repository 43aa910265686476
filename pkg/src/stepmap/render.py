"""Heatmap figures written as SVG and binary PPM."""
from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

from .maps import (ReachMap, StepSelector, TorqueMap, column_argmins,  # noqa: E402
                   near_optimal_regions, select_step)
from .paramgrid import ParamGrid  # noqa: E402
from .svm import SafeRegionModel  # noqa: E402

WHATS = ("reach", "torque", "near-opt", "safe-region", "swing-time")
DPI = 100

plt.rcParams["svg.hashsalt"] = "stepmap"
plt.rcParams["svg.fonttype"] = "path"


def _edges(axis):
    axis = np.asarray(axis, float)
    if len(axis) == 1:
        return np.array([axis[0] - 0.5, axis[0] + 0.5])
    mid = 0.5 * (axis[1:] + axis[:-1])
    return np.concatenate([[2 * axis[0] - mid[0]], mid, [2 * axis[-1] - mid[-1]]])


def _axes(ax, title):
    ax.set_xlabel("initial CoM velocity [m/s]")
    ax.set_ylabel("desired step position [m]")
    ax.set_title(title)


def fig_reach(reach: ReachMap):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.pcolormesh(_edges(reach.velocities), _edges(reach.positions), reach.reachable.T.astype(float),
                  cmap="Greys_r", vmin=0, vmax=1, shading="flat")
    _axes(ax, "reachability (white = reached)")
    return fig


def fig_torque(tmap: TorqueMap, sel: StepSelector | None = None):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    data = np.ma.masked_invalid(tmap.j_tau.T)
    mesh = ax.pcolormesh(_edges(tmap.velocities), _edges(tmap.positions), data, cmap="viridis",
                         shading="flat")
    fig.colorbar(mesh, ax=ax, label="swing torque integral [N^2 m^2 s]")
    k = column_argmins(tmap)
    ax.plot(tmap.velocities, tmap.positions[k], linestyle="none", marker="*", color="red",
            markersize=10, label="column optimum")
    if sel is not None:
        v = np.linspace(*sel.v_range, 200)
        ax.plot(v, [select_step(sel, x) for x in v], color="white", lw=1.5, label="selector")
    ax.legend(loc="upper left", fontsize=8)
    _axes(ax, "measured torque")
    return fig


def fig_near_opt(tmap: TorqueMap, deltas=(0.05, 0.10)):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    layer = np.zeros(tmap.j_tau.shape)
    layer[tmap.present] = 1.0
    for n, d in enumerate(sorted(deltas, reverse=True), start=2):
        layer[near_optimal_regions(tmap, d)] = n
    ax.pcolormesh(_edges(tmap.velocities), _edges(tmap.positions), layer.T, cmap="magma",
                  vmin=0, vmax=len(deltas) + 1, shading="flat")
    k = column_argmins(tmap)
    ax.plot(tmap.velocities, tmap.positions[k], linestyle="none", marker="*", color="cyan",
            markersize=9)
    _axes(ax, "near-optimal regions, delta = " + ", ".join(f"{d:g}" for d in sorted(deltas)))
    return fig


def fig_safe_region(model: SafeRegionModel, reach: ReachMap, factor: int = 4):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    v = np.linspace(reach.velocities[0], reach.velocities[-1], factor * len(reach.velocities))
    s = np.linspace(reach.positions[0], reach.positions[-1], factor * len(reach.positions))
    V, S = np.meshgrid(v, s, indexing="ij")
    safe = model.decision_function(np.column_stack([V.ravel(), S.ravel()])).reshape(V.shape) > 0
    ax.pcolormesh(_edges(v), _edges(s), safe.T.astype(float), vmin=0, vmax=1, shading="flat",
                  cmap=ListedColormap(["#d9d9d9", "#8fd18f"]))
    X, lab = reach.points()
    ax.scatter(X[lab, 0], X[lab, 1], s=8, c="k", marker="o", label="reached")
    ax.scatter(X[~lab, 0], X[~lab, 1], s=12, c="r", marker="x", label="not reached")
    ax.legend(loc="upper left", fontsize=8)
    _axes(ax, "safe stepping region")
    return fig


def fig_swing_time(grid: ParamGrid, sel: StepSelector | None = None):
    fig, (a0, a1) = plt.subplots(1, 2, figsize=(10, 4.5))
    T = grid.params[:, :, 2] + grid.positions[None, :] / grid.params[:, :, 3]
    mesh = a0.pcolormesh(_edges(grid.velocities), _edges(grid.positions), T.T, cmap="plasma",
                         shading="flat")
    fig.colorbar(mesh, ax=a0, label="swing time [s]")
    _axes(a0, "swing time per node")
    if sel is not None:
        from .maps import swing_time_report
        rows = [r for r in swing_time_report(grid, sel) if r["optimal"]]
        a1.plot([r["v0"] for r in rows], [r["swing_time"] for r in rows], marker="o")
    a1.set_xlabel("initial CoM velocity [m/s]")
    a1.set_ylabel("swing time at selected step [s]")
    a1.set_title("optimal-step swing time")
    return fig


def ppm_bytes(fig) -> bytes:
    fig.canvas.draw()
    rgba = np.asarray(fig.canvas.buffer_rgba())
    h, w = rgba.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode() + rgba[:, :, :3].tobytes()


def save_figure(fig, stem) -> tuple[str, str]:
    """Write ``stem.svg`` and ``stem.ppm``; returns both paths."""
    svg, ppm = f"{stem}.svg", f"{stem}.ppm"
    fig.savefig(svg, format="svg", dpi=DPI, metadata={"Date": None})
    fig.set_dpi(DPI)
    with open(ppm, "wb") as fh:
        fh.write(ppm_bytes(fig))
    plt.close(fig)
    return svg, ppm
