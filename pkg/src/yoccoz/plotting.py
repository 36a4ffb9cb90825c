"""Figures for reports: tail curves, per-level maxima, sweeps and grid heatmaps."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .cell_tree import PairTree  # noqa: E402
from .errors import DegenerateCell  # noqa: E402
from .extension.cell_map import YoccozCellMap  # noqa: E402
from .grid_geometry import Grid, build_grid, render_svg  # noqa: E402

STYLE = {"figure.figsize": (6.0, 4.0), "axes.grid": True, "grid.alpha": 0.3, "font.size": 10,
         "savefig.bbox": "tight", "savefig.dpi": 120}


def _save(fig, path, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # PNG text chunks; Software is pinned so reruns write the same bytes
    fig.savefig(path, metadata={"Software": "yoccoz", **{k: str(v) for k, v in (meta or {}).items()}})
    plt.close(fig)
    return path


def plot_tail(est, fit=None, path="tail.png", label: str | None = None, meta: dict | None = None) -> Path:
    """Tail estimate on a log scale with its confidence band and the fitted exponential."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        pos = est.A > 0
        ax.semilogy(est.grid[pos], est.A[pos], "o-", ms=3, label=label or f"{est.direction} estimate")
        lo = np.clip(est.A - est.radius, est.A[pos].min() * 1e-2 if pos.any() else 1e-300, None)
        ax.fill_between(est.grid[pos], lo[pos], (est.A + est.radius)[pos], alpha=0.2)
        if fit is not None and fit.gauge == "david":
            k = np.linspace(*fit.window, 100)
            ax.semilogy(k, fit.A * np.exp(-fit.alpha * k), "--",
                        label=f"A e^(-alpha K), alpha={fit.alpha:.3g}, R2={fit.r2:.3f}")
        ax.set_xlabel("K")
        ax.set_ylabel("area with dilatation >= K")
        ax.legend()
        return _save(fig, path, meta)


def plot_level_kmax(samples, path="levels.png", meta: dict | None = None) -> Path:
    """Per-level maximum and median of the sampled dilatation."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        n = np.arange(samples.depth + 1)
        med = [np.median(samples.K[samples.level == j]) if np.any(samples.level == j) else np.nan for j in n]
        ax.semilogy(n, samples.level_kmax(), "o-", label="max K")
        ax.semilogy(n, med, "s-", label="median K")
        ax.set_xlabel("level")
        ax.set_ylabel("K")
        ax.legend()
        return _save(fig, path, meta)


def plot_sweep(sweep, path="sweep.png") -> Path:
    """Sup dilatation over ``log^2 a`` against ``a``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        a = [r.a for r in sweep.rows]
        ax.semilogx(a, sweep.ratios(), "o-")
        ax.set_xlabel("a")
        ax.set_ylabel("sup K / log^2 a")
        ax.set_title(f"slope {sweep.slope:+.3f}")
        return _save(fig, path)


def plot_spikes(table, path="spikes.png") -> Path:
    """The comparison table: linear extension bound against the Yoccoz dilatation."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        s = [r["spike"] for r in table]
        ax.loglog(s, [r["ba"] for r in table], "o-", label="2 rho (BA bound)")
        ax.loglog(s, [r["yoccoz_order"] for r in table], "s-", label="log^2 a")
        if all("yoccoz_measured" in r for r in table):
            ax.loglog(s, [r["yoccoz_measured"] for r in table], "^-", label="measured sup K")
        ax.set_xlabel("spike a")
        ax.legend()
        return _save(fig, path)


def tree_grid(tree: PairTree, depth: int, side: str = "src") -> Grid:
    """Materialized grid of one side of a pair for levels ``0..depth``."""
    j = 0 if side == "src" else 1
    levels, lengths = [], []
    for n in range(depth + 1):
        nodes = tree.enumerate_level(n)
        levels.append([v.offset[j] for v in nodes])
        lengths.append([(v.src if j == 0 else v.tgt)[1] for v in nodes])
    return build_grid(levels, lengths)


def cell_heat(tree: PairTree, depth: int, samples: int = 60, seed: int = 0) -> dict:
    """Mean ``log K`` per source cell, scaled to [0, 1] by the largest value."""
    vals = {}
    rng = np.random.default_rng(seed)
    for n in range(depth):
        for i, v in enumerate(tree.enumerate_level(n)):
            cp = tree.cells(v)
            try:
                cm = YoccozCellMap(cp.src, cp.tgt)
            except DegenerateCell:
                continue
            x, y = cp.src.sample_uniform(rng, samples)
            z = x + 1j * y
            z = z[cm.seam_distance(z) >= 1e-6 * cm.diameter]
            if len(z):
                vals[(n, i)] = float(np.mean(np.log(cm.dilatation(z, check_seams=False))))
    top = max(vals.values(), default=0.0)
    return {k: (v / top if top > 0 else 0.0) for k, v in vals.items()}


def heatmap_svg(tree: PairTree, depth: int, path="heatmap.svg", samples: int = 60) -> Path:
    """SVG of the source grid to ``depth`` shaded by cell dilatation."""
    depth = max(1, min(depth, 4))
    grid = tree_grid(tree, depth, "src")
    svg = render_svg(grid, depth - 1, cell_heat(tree, depth, samples))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg)
    return path
