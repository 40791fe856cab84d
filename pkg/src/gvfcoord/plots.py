"""Static SVG plots of a run: trajectory projections and error curves.

Output is byte-deterministic for a given trace: the SVG hash salt is pinned
and the date metadata is stripped, so repeated emissions compare equal.
"""

from __future__ import annotations

import os

import matplotlib
import numpy as np
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

from .sim import Scenario, Trace

matplotlib.rcParams["svg.hashsalt"] = "gvfcoord"

_MAX_POINTS = 4000


def _stride(length: int) -> slice:
    if length <= _MAX_POINTS:
        return slice(None)
    return slice(None, None, length // _MAX_POINTS + 1)


def _new_axes(title, xlabel, ylabel):
    fig = Figure(figsize=(6.0, 4.5))
    FigureCanvasSVG(fig)
    ax = fig.add_subplot()
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.4)
    return fig, ax


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})


def _plot_projection(trace: Trace, scenario: Scenario, a: int, b: int, out_path):
    labels = [f"x{q + 1}" for q in range(trace.n)]
    fig, ax = _new_axes(f"trajectories ({labels[a]}-{labels[b]})",
                        labels[a], labels[b])
    sl = _stride(trace.n_records)
    seen = set()
    for path in scenario.paths:
        if id(path) in seen:
            continue
        seen.add(id(path))
        lo, hi = path.window
        w = np.linspace(lo, hi, 600)
        pts = path.evaluate(w)
        ax.plot(pts[a], pts[b], "k--", linewidth=0.9)
    for i in range(trace.n_robots):
        ax.plot(trace.states[sl, i, a], trace.states[sl, i, b], linewidth=0.8)
        ax.plot(trace.states[0, i, a], trace.states[0, i, b], "s", markersize=3)
        ax.plot(trace.states[-1, i, a], trace.states[-1, i, b], "o", markersize=3)
    ax.set_aspect("equal", adjustable="datalim")
    _save(fig, out_path)


def _plot_series(t, series, title, ylabel, out_path):
    fig, ax = _new_axes(title, "t [s]", ylabel)
    sl = _stride(t.size)
    for col in range(series.shape[1]):
        ax.plot(t[sl], series[sl, col], linewidth=0.8)
    _save(fig, out_path)


def emit_plots(trace: Trace, scenario: Scenario, out_dir) -> list:
    """Write the plot set for a trace; returns the created file paths.

    Projections: XY always, plus XZ and YZ for 3D paths.  Error curves:
    per-robot ||Phi_i||(t) and per-edge coordination error; Dubins runs add
    the signed heading angle sigma_i(t).
    """
    os.makedirs(out_dir, exist_ok=True)
    created = []

    projections = [(0, 1, "traj_xy.svg")]
    if trace.n >= 3:
        projections += [(0, 2, "traj_xz.svg"), (1, 2, "traj_yz.svg")]
    for a, b, name in projections:
        path = os.path.join(out_dir, name)
        _plot_projection(trace, scenario, a, b, path)
        created.append(path)

    path = os.path.join(out_dir, "path_error.svg")
    _plot_series(trace.t, trace.phi_norm, "path-following error norms",
                 "||Phi_i||", path)
    created.append(path)

    path = os.path.join(out_dir, "coordination_error.svg")
    if trace.coord_err.shape[1]:
        _plot_series(trace.t, trace.coord_err, "coordination errors",
                     "w_i - w_j - Delta_ij", path)
    else:
        _plot_series(trace.t, np.zeros((trace.n_records, 1)),
                     "coordination errors (no edges)", "w_i - w_j - Delta_ij", path)
    created.append(path)

    if trace.mode == "dubins":
        path = os.path.join(out_dir, "sigma.svg")
        _plot_series(trace.t, trace.sigma, "heading alignment", "sigma_i [rad]", path)
        created.append(path)
    return created
