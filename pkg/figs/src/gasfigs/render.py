"""Deterministic rendering of the three figure families.

Styling follows the source material: reference runs dotted, Euler runs as a
continuous line, hybrid/DSMC runs as a marked line.  Output PNGs carry no
timestamps or version metadata, so identical inputs give identical bytes.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_DPI = 110
_FIGSIZE = (6.4, 4.2)
_SAVE_KW = {"dpi": _DPI, "metadata": {"Software": None}}

_AXIS_LABEL = {"rho": "density", "ux": "velocity", "T": "temperature", "h": "transition function"}

_ROLE_STYLE = {
    "reference": dict(linestyle=":", color="k", linewidth=1.6),
    "euler": dict(linestyle="-", color="tab:blue", linewidth=1.4),
    "hybrid": dict(linestyle="-", marker="o", markersize=2.6, color="tab:red", linewidth=0.9),
}


def _new_axes(xlabel, ylabel, title):
    fig, ax = plt.subplots(figsize=_FIGSIZE, dpi=_DPI)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _fmt_time(t: float) -> str:
    return f"{t:.4f}".rstrip("0").rstrip(".")


def render(spec, out_dir=None) -> list:
    """Render one FigureSpec; returns the written file paths."""
    runs = spec.load()
    out = Path(out_dir if out_dir is not None else spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if spec.kind == "particle-count":
        return [_render_particle_count(runs, out)]
    times = list(spec.times) or runs[0][0].snapshot_times()
    variable = "h" if spec.kind == "transition" else spec.variable
    paths = []
    for t in times:
        paths.append(_render_field(runs, spec.kind, variable, t, out))
    return paths


def _render_field(runs, kind, variable, t, out: Path) -> Path:
    fig, ax = _new_axes("x", _AXIS_LABEL[variable], f"{_AXIS_LABEL[variable]} at t = {_fmt_time(t)}")
    for run, role in runs:
        snap = run.at_time(t)
        style = dict(_ROLE_STYLE[role])
        if kind == "transition":
            style.pop("marker", None)
            style["drawstyle"] = "steps-mid"
        ax.plot(snap.x, snap.columns[variable], label=f"{run.label} ({role})", **style)
    if kind == "transition":
        ax.set_ylim(-0.05, 1.1)
    ax.legend(loc="best", fontsize=8)
    name = f"{'transition' if kind == 'transition' else variable}_t{_fmt_time(t)}.png"
    path = out / name
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def _render_particle_count(runs, out: Path) -> Path:
    fig, ax = _new_axes("time", "total particles", "particle count over time")
    for run, role in runs:
        if run.series.size == 0:
            continue
        style = dict(_ROLE_STYLE[role])
        style.pop("marker", None)
        ax.plot(run.series[:, 1], run.series[:, 3], label=f"{run.label} ({role})", **style)
    ax.set_ylim(bottom=0)
    ax.legend(loc="best", fontsize=8)
    path = out / "particle_count.png"
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path
