"""SVG rendering of trajectory CSVs.

Pure presentation: every figure is a function of CSV files already on
disk, and the output is deterministic (fixed hash salt, no timestamps).
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams["svg.hashsalt"] = "risuav"

_NODE_STYLE = {
    "bs": dict(marker="s", color="tab:red", label="BS"),
    "ris": dict(marker="^", color="tab:purple", label="RIS"),
    "start": dict(marker="o", color="black", label="start"),
    "end": dict(marker="X", color="black", label="end"),
}


def _read_csv(path):
    with open(path, newline="", encoding="ascii") as fh:
        return list(csv.DictReader(fh))


def _draw_layout(ax, layout_csv):
    seen_ue = False
    for row in _read_csv(layout_csv):
        name = row["node"]
        x, y = float(row["x"]), float(row["y"])
        if name.startswith("ue"):
            ax.scatter([x], [y], marker="o", color="tab:green", zorder=5,
                       label=None if seen_ue else "UE")
            seen_ue = True
        else:
            style = _NODE_STYLE[name]
            ax.scatter([x], [y], zorder=5, **style)


def _finish(ax, out_svg):
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig = ax.figure
    fig.savefig(out_svg, format="svg", metadata={"Date": None})
    plt.close(fig)


def render_iterates_svg(out_svg, iterates_csv, layout_csv) -> None:
    """Overlay of the accepted trajectory iterates: first lightest, final darkest."""
    by_iter: dict[int, list[tuple[float, float]]] = {}
    for row in _read_csv(iterates_csv):
        by_iter.setdefault(int(row["iteration"]), []).append(
            (float(row["x"]), float(row["y"])))
    fig, ax = plt.subplots(figsize=(6, 6))
    total = max(len(by_iter), 2)
    for j in sorted(by_iter):
        pts = by_iter[j]
        shade = 0.25 + 0.75 * j / (total - 1)
        label = "initial" if j == 0 else ("final" if j == max(by_iter) else None)
        ax.plot([p[0] for p in pts], [p[1] for p in pts],
                color=(0.1, 0.2, 0.6, shade), linewidth=1.5, label=label)
    _draw_layout(ax, layout_csv)
    _finish(ax, out_svg)


def render_overlay_svg(out_svg, labeled_trajectories, layout_csv) -> None:
    """Overlay of final trajectories from several runs (sweep comparison)."""
    fig, ax = plt.subplots(figsize=(6, 6))
    cmap = plt.get_cmap("viridis")
    total = max(len(labeled_trajectories), 2)
    for i, (label, path) in enumerate(labeled_trajectories):
        rows = _read_csv(path)
        ax.plot([float(r["x"]) for r in rows], [float(r["y"]) for r in rows],
                color=cmap(i / (total - 1)), linewidth=1.5, label=label)
    _draw_layout(ax, layout_csv)
    _finish(ax, out_svg)
