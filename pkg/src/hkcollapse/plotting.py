"""PNG figures for the CLI report path (matplotlib, non-interactive backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Polygon as PolygonPatch  # noqa: E402

from .dynamics import Trajectory  # noqa: E402
from .landscape import LandscapeData  # noqa: E402
from .svg import PRE_FILL, REGION_FILLS  # noqa: E402


def plot_landscape(data: LandscapeData, path: str | Path, title: str = "collapse landscape") -> Path:
    fig, ax = plt.subplots(figsize=(5, 5))
    for reg in data.regions:
        label = reg["label"]
        color = PRE_FILL if label in (None, "pre") else REGION_FILLS[int(label) % len(REGION_FILLS)]
        for k, ring in enumerate(reg["polygons"]):
            ax.add_patch(PolygonPatch(ring, closed=True, facecolor=color, edgecolor="none",
                                      label=(label or "region") if k == 0 else None))
    for cone in data.cones:
        for line in cone["polylines"]:
            xs, ts = zip(*line)
            ax.plot(xs, ts, color="#333333", lw=1)
    for mk in data.markers:
        ax.plot(mk["x"], mk["t"], "o", color="#b22222")
        ax.annotate(mk["label"], (mk["x"], mk["t"]), textcoords="offset points", xytext=(5, 5))
    t0, t1, x0, x1 = data.bbox
    ax.set_xlim(x0, x1)
    ax.set_ylim(t0, t1)
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    ax.set_title(title + (" (double-peaked)" if data.double_peaked else ""))
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_populations(traj: Trajectory, path: str | Path, ids: Sequence[str] | None = None,
                     title: str = "square modulus per component") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for cid in ids or sorted(traj.columns):
        ax.plot(traj.times, traj.populations(cid), label=cid, lw=1)
    ax.plot(traj.times, traj.norms(), "k--", lw=1, label="total")
    ax.set_xlabel("t")
    ax.set_ylabel("|amplitude|^2")
    ax.set_title(title)
    ax.legend(fontsize=7)
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_histogram(edges: Sequence[float], counts: Sequence[int], path: str | Path,
                   title: str = "capture times") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.stairs(counts, edges, fill=True, alpha=0.7)
    ax.set_xlabel("trigger time")
    ax.set_ylabel("trials")
    ax.set_title(title)
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
