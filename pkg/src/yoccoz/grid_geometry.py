"""Grids of polygonal cells built over nested partitions of the circle.

A level-``n`` cell sits over an interval ``I = [t_0, t_k]`` of the level-``n``
partition.  Its top is the segment between the level-``n`` heights at the
endpoints, its bottom the polyline through the level-``(n+1)`` heights at the
subdivision points.  The height at a partition point is half the sum of its two
adjacent interval lengths.

Everything about a cell is determined by the lengths of ``I``, of its two
neighbours, of the children of ``I`` and of the nearest children of the
neighbours, so cells are stored in local coordinates (``t_0 = 0``) together
with an absolute offset.  This lets deep levels be handled by tree descent
without materializing whole partitions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateCell, IndexMismatch

QUAD, TRIANGLE, FLAT = "quad", "triangle", "flat"


@dataclass(frozen=True)
class Cell:
    level: int
    x0: float  # absolute position of t_0
    t: np.ndarray = field(repr=False)  # local base points, t[0] = 0
    y_top: tuple[float, float] = field(repr=False)
    y_bot: np.ndarray = field(repr=False)
    index: int = -1
    kind: str = QUAD

    @classmethod
    def from_lengths(cls, level: int, L: float, children: Sequence[float], R: float,
                     L_last: float, R_first: float, x0: float = 0.0, index: int = -1,
                     I: float | None = None, rtol: float = 1e-12) -> "Cell":
        c = np.asarray(children, dtype=float)
        I = float(c.sum()) if I is None else float(I)
        t = np.concatenate([[0.0], np.cumsum(c)])
        t[-1] = I
        y_top = ((L + I) / 2, (I + R) / 2)
        nb = np.concatenate([[L_last], c, [R_first]])
        y_bot = (nb[:-1] + nb[1:]) / 2
        if min(y_top) <= 0 or y_bot.min() <= 0:
            raise DegenerateCell(f"non-positive height at level {level}")
        tol = rtol * max(y_top)
        left_flat = y_top[0] - y_bot[0] <= tol
        right_flat = y_top[1] - y_bot[-1] <= tol
        if left_flat and right_flat and len(c) == 1:
            kind = FLAT
        elif left_flat or right_flat:
            kind = TRIANGLE
        else:
            kind = QUAD
        return cls(level, float(x0), t, (float(y_top[0]), float(y_top[1])), y_bot, index, kind)

    @property
    def k(self) -> int:
        return len(self.t) - 1

    @property
    def width(self) -> float:
        return float(self.t[-1])

    def g1(self, x):
        """Height of the top segment at local abscissa ``x``."""
        s = np.asarray(x) / self.width
        return self.y_top[0] * (1 - s) + self.y_top[1] * s

    def g2(self, x):
        """Height of the bottom polyline at local abscissa ``x``."""
        return np.interp(x, self.t, self.y_bot)

    def g2_slope(self, x):
        j = np.clip(np.searchsorted(self.t, x, side="right") - 1, 0, self.k - 1)
        return (self.y_bot[j + 1] - self.y_bot[j]) / (self.t[j + 1] - self.t[j])

    def vertices(self, absolute: bool = True) -> np.ndarray:
        """Counterclockwise vertices (bottom left to right, then top right to left)."""
        off = self.x0 if absolute else 0.0
        pts = [complex(off + x, y) for x, y in zip(self.t, self.y_bot)]
        tr = complex(off + self.width, self.y_top[1])
        tl = complex(off, self.y_top[0])
        if abs(tr - pts[-1]) > 0:
            pts.append(tr)
        if abs(tl - pts[0]) > 0:
            pts.append(tl)
        return np.array(pts)

    def area(self) -> float:
        return shoelace(self.vertices(absolute=False))

    def mass_profile(self) -> np.ndarray:
        """Vertical extent ``g1 - g2`` at the base points."""
        return np.maximum(self.g1(self.t) - self.y_bot, 0.0)

    def contains(self, x, y, absolute: bool = False) -> np.ndarray:
        x = np.asarray(x) - (self.x0 if absolute else 0.0)
        return (x >= 0) & (x <= self.width) & (y >= self.g2(x)) & (y <= self.g1(x))

    def sample_uniform(self, rng: np.random.Generator, m: int) -> tuple[np.ndarray, np.ndarray]:
        """``m`` points uniform with respect to area, in local coordinates."""
        h = self.mass_profile()
        dx = np.diff(self.t)
        mass = (h[:-1] + h[1:]) / 2 * dx
        total = mass.sum()
        if total <= 0:
            raise DegenerateCell("cannot sample a cell of zero area")
        piece = rng.choice(len(mass), size=m, p=mass / total)
        ha, hb = h[piece], h[piece + 1]
        u = rng.random(m)
        # inverse CDF of a linear density on [0, 1]
        s = u * (ha + hb) / (ha + np.sqrt(ha * ha + u * (hb * hb - ha * ha)))
        x = self.t[piece] + s * dx[piece]
        lo, hi = self.g2(x), self.g1(x)
        y = lo + rng.random(m) * (hi - lo)
        return x, y

    def inscribed_square_side(self, samples: int = 256) -> float:
        """Side of the largest axis-aligned square found by a sampled window search."""
        xs = np.linspace(0, self.width, samples + 1)
        gap_top, gap_bot = self.g1(xs), self.g2(xs)
        dx = xs[1] - xs[0]

        def fits(w: int) -> bool:
            # some window of w sample steps has vertical room >= its width
            lo = sliding_window_view(gap_top, w + 1).min(axis=1)
            hi = sliding_window_view(gap_bot, w + 1).max(axis=1)
            return bool(np.any(lo - hi >= w * dx))

        a, b = 0, samples
        while a < b:
            m = (a + b + 1) // 2
            if fits(m):
                a = m
            else:
                b = m - 1
        return float(a * dx)

    def geometry_report(self) -> dict:
        v = self.vertices(absolute=False)
        top = abs(complex(self.width, self.y_top[1] - self.y_top[0]))
        left = self.y_top[0] - self.y_bot[0]
        right = self.y_top[1] - self.y_bot[-1]
        sides = [s for s in (top, left, right) if s > 1e-15 * top]
        angles = interior_angles(v)
        n_bot = self.k + 1
        bottom_inner = angles[1:n_bot - 1] if n_bot > 2 else np.array([])
        tl_angle = math.atan2(self.width, self.y_top[1] - self.y_top[0]) if left > 0 else float("nan")
        return {
            "level": self.level,
            "kind": self.kind,
            "top": top,
            "left": left,
            "right": right,
            "side_ratio": max(sides) / min(sides),
            "min_angle": float(angles.min()),
            "max_angle": float(angles.max()),
            "bottom_angle_min": float(bottom_inner.min()) if len(bottom_inner) else float("nan"),
            "bottom_angle_max": float(bottom_inner.max()) if len(bottom_inner) else float("nan"),
            "top_side_angle": tl_angle,
        }

    def to_json(self) -> dict:
        return {
            "level": self.level,
            "index": self.index,
            "base": [self.x0, self.x0 + self.width],
            "vertices": [[float(z.real), float(z.imag)] for z in self.vertices()],
            "kind": self.kind,
            "area": self.area(),
        }


def shoelace(v: np.ndarray) -> float:
    x, y = v.real, v.imag
    return float(0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def interior_angles(v: np.ndarray) -> np.ndarray:
    """Interior angles of a counterclockwise polygon, in ``(0, 2 pi)``."""
    prev = np.roll(v, 1) - v
    nxt = np.roll(v, -1) - v
    ang = np.angle(prev / nxt)  # turn from nxt to prev, counterclockwise positive
    return np.mod(ang, 2 * np.pi)


@dataclass(frozen=True)
class Grid:
    """Cells of levels ``0..N-1`` over one period, built from nested partitions."""

    levels: tuple[np.ndarray, ...] = field(repr=False)  # sorted points per level, points[0] = 0
    lengths: tuple[np.ndarray, ...] = field(repr=False)
    cells: tuple[tuple[Cell, ...], ...] = field(repr=False)
    seed_level: int = 0

    @property
    def depth(self) -> int:
        return len(self.cells)

    def heights(self, n: int) -> np.ndarray:
        L = self.lengths[n]
        return (np.roll(L, 1) + L) / 2

    def all_cells(self):
        for row in self.cells:
            yield from row

    def band_area(self, n: int) -> float:
        """Area between the level-``n`` and level-``n+1`` polylines over one period."""
        return polyline_integral(self.lengths[n]) - polyline_integral(self.lengths[n + 1])


def polyline_integral(lengths: np.ndarray) -> float:
    """Integral over one period of the height polyline of a partition."""
    y = (np.roll(lengths, 1) + lengths) / 2
    return float(np.sum(y * y))


def build_grid(levels: Sequence[Sequence[float]], lengths: Sequence[Sequence[float]] | None = None) -> Grid:
    """Build cells from sorted point sets in ``[0, 1)``, one per level ``0..N``.

    ``lengths`` may supply interval lengths computed at higher precision; it
    defaults to the differences of the points (wrapping at 1).
    """
    pts = [np.asarray(p, dtype=float) for p in levels]
    if lengths is None:
        lens = [np.diff(np.concatenate([p, [1.0 + p[0]]])) for p in pts]
    else:
        lens = [np.asarray(x, dtype=float) for x in lengths]
    for n, (p, L) in enumerate(zip(pts, lens)):
        if len(p) != len(L) or p[0] != 0:
            raise IndexMismatch(f"level {n} partition must start at 0 and match its lengths")
    rows = []
    for n in range(len(pts) - 1):
        P, Q = pts[n], pts[n + 1]
        L, Lc = lens[n], lens[n + 1]
        pos = np.searchsorted(Q, P)
        if not np.allclose(Q[np.minimum(pos, len(Q) - 1)], P, rtol=0, atol=1e-13):
            raise IndexMismatch(f"level {n} points are not all in level {n + 1}")
        row = []
        m = len(P)
        for i in range(m):
            a = pos[i]
            b = pos[i + 1] if i + 1 < m else len(Q)
            children = Lc[a:b]
            cell = Cell.from_lengths(n, L[i - 1], children, L[(i + 1) % m],
                                     Lc[a - 1], Lc[b % len(Q)], x0=float(P[i]), index=i, I=L[i])
            row.append(cell)
        rows.append(tuple(row))
    return Grid(tuple(pts), tuple(lens), tuple(rows))


def grid_report(grid: Grid) -> list[dict]:
    """Per-level extremes of side ratios and angles."""
    out = []
    for n, row in enumerate(grid.cells):
        reps = [c.geometry_report() for c in row if c.kind != FLAT]
        if not reps:
            continue
        bottom = [r["bottom_angle_min"] for r in reps if not math.isnan(r["bottom_angle_min"])]
        bottom_hi = [r["bottom_angle_max"] for r in reps if not math.isnan(r["bottom_angle_max"])]
        out.append({
            "level": n,
            "cells": len(row),
            "side_ratio_max": max(r["side_ratio"] for r in reps),
            "angle_min": min(r["min_angle"] for r in reps),
            "angle_max": max(r["max_angle"] for r in reps),
            "bottom_angle_min": min(bottom) if bottom else float("nan"),
            "bottom_angle_max": max(bottom_hi) if bottom_hi else float("nan"),
            "min_area": min(c.area() for c in row),
            "band_area": grid.band_area(n),
        })
    return out


@dataclass(frozen=True)
class AreaFloorRow:
    level: int
    min_area: float
    floor: float
    ratio: float


def area_floor_check(min_areas: Sequence[float], floors: Sequence[float]) -> tuple[list[AreaFloorRow], bool]:
    """Compare per-level minimal areas with reference floors; PASS iff the ratio stays bounded below.

    The ratio ``min_area / floor`` must not shrink faster than a constant: we
    require ``min ratio >= max ratio * 1e-3`` across the levels as a trend-free check.
    """
    rows = [AreaFloorRow(n, float(a), float(f), float(a / f)) for n, (a, f) in enumerate(zip(min_areas, floors))]
    ratios = [r.ratio for r in rows if r.floor > 0]
    ok = bool(ratios) and min(ratios) > 0 and min(ratios) >= 1e-3 * max(ratios)
    return rows, ok


@dataclass(frozen=True)
class GridPair:
    source: Grid  # critical side
    target: Grid  # rotation side

    def __post_init__(self):
        if self.source.depth != self.target.depth:
            raise IndexMismatch("grids have different depths")
        for a, b in zip(self.source.cells, self.target.cells):
            if len(a) != len(b) or any(x.k != y.k for x, y in zip(a, b)):
                raise IndexMismatch("cell combinatorics differ between the two grids")


def correspond(pair: GridPair, level: int, index: int):
    """Matching target cell and the piecewise-affine map between the boundaries.

    The boundary map sends the ``i``-th vertex of the source polygon to the
    ``i``-th vertex of the target polygon and is affine on each edge.
    """
    try:
        a = pair.source.cells[level][index]
        b = pair.target.cells[level][index]
    except IndexError as exc:
        raise IndexMismatch(f"no cell ({level}, {index})") from exc
    if a.k != b.k:
        raise IndexMismatch(f"bottom vertex counts differ at ({level}, {index})")
    va, vb = _full_vertices(a), _full_vertices(b)

    def boundary_map(edge: int, s: float) -> complex:
        i, j = edge, (edge + 1) % len(vb)
        return vb[i] + s * (vb[j] - vb[i])

    return b, va, vb, boundary_map


def _full_vertices(c: Cell) -> np.ndarray:
    # keep degenerate corners so that vertex lists correspond one to one
    bot = [complex(c.x0 + x, y) for x, y in zip(c.t, c.y_bot)]
    return np.array(bot + [complex(c.x0 + c.width, c.y_top[1]), complex(c.x0, c.y_top[0])])


def render_svg(grid: Grid, depth: int | None = None, colors: dict | None = None,
               size: int = 800, stroke: float = 0.6) -> str:
    """SVG drawing of one period: a frame for the unit period plus cells of levels ``0..depth``.

    ``colors`` maps ``(level, index)`` to a value in [0, 1] drawn as a gray
    heatmap; with no values cells are drawn as outlines only.
    """
    last = grid.depth - 1 if depth is None else min(depth, grid.depth - 1)
    sx = size
    sy = size / 2

    def pt(z):
        return f"{z.real * sx:.4f},{(1.0 - z.imag) * sy + 4:.4f}"

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{sx}" height="{sy + 8:.0f}" '
             f'viewBox="0 0 {sx} {sy + 8:.0f}">',
             f'<rect class="period" x="0" y="4" width="{sx}" height="{sy:.4f}" fill="none" '
             f'stroke="black" stroke-width="{stroke}"/>']
    for n in range(last + 1):
        for c in grid.cells[n]:
            fill = "none"
            if colors and (n, c.index) in colors:
                g = int(255 * (1 - min(max(colors[(n, c.index)], 0.0), 1.0)))
                fill = f"rgb({g},{g},{g})"
            pts = " ".join(pt(z) for z in c.vertices())
            parts.append(f'<polygon data-level="{n}" points="{pts}" fill="{fill}" stroke="black" '
                         f'stroke-width="{stroke}"/>')
    parts.append("</svg>")
    return "\n".join(parts)
