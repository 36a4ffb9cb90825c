"""Stratified Monte Carlo sampling of the dilatation field over the unit square.

Level ``n`` of the grid is the band between the level-``n`` and level-``n+1``
polylines.  Each band gets its own budget; within a band, cells are drawn by
tree descent and points uniformly inside each drawn cell.  Weights are
ratio-normalized so that each band carries exactly its area.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..cell_tree import PairTree, band_areas, level_square_sums
from ..errors import BudgetTooSmall, DegenerateCell
from ..extension.base_map import BasePlaneMap
from ..extension.cell_map import SEAM_TOL, YoccozCellMap
from ..grid_geometry import GridPair, polyline_integral

FORWARD, INVERSE = "fwd", "inv"
MIN_PER_LEVEL = 10


@dataclass
class FieldSamples:
    """Weighted dilatation samples; ``cell`` groups points drawn from the same cell."""

    z: np.ndarray
    level: np.ndarray
    K: np.ndarray
    weight: np.ndarray
    cell: np.ndarray
    direction: str
    depth: int
    band_areas: np.ndarray
    unresolved: float
    cell_area: np.ndarray = field(default=None, repr=False)
    cell_k: np.ndarray = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.K)

    @property
    def total_area(self) -> float:
        return float(self.weight.sum())

    def level_mask(self, n: int) -> np.ndarray:
        return self.level == n

    def level_kmax(self) -> np.ndarray:
        out = np.zeros(self.depth + 1)
        for n in range(self.depth + 1):
            m = self.level == n
            out[n] = self.K[m].max() if np.any(m) else np.nan
        return out

    def to_rows(self) -> list[dict]:
        return [{"x": float(z.real), "y": float(z.imag), "level": int(n), "K": float(k),
                 "weight": float(w), "cell": int(c), "direction": self.direction}
                for z, n, k, w, c in zip(self.z, self.level, self.K, self.weight, self.cell)]


def allocate(bands: np.ndarray, m: int, floor_share: float = 0.5) -> np.ndarray:
    """Per-band budgets: ``floor_share`` of ``m`` split evenly, the rest in proportion to area."""
    live = bands > 0
    nlive = int(live.sum())
    if nlive == 0:
        return np.zeros(len(bands), dtype=int)
    even = floor_share * m / nlive
    prop = (1 - floor_share) * m * bands / bands.sum()
    out = np.where(live, np.floor(even + prop), 0).astype(int)
    if out[live].min() < MIN_PER_LEVEL:
        raise BudgetTooSmall(f"budget {m} leaves fewer than {MIN_PER_LEVEL} samples on some level")
    return out


def _cell_points(cmap: YoccozCellMap, rng, r: int, direction: str):
    """``r`` seam-free points of the cell; returns source-side points and the sampled side's points."""
    cell = cmap.src if direction == FORWARD else cmap.tgt
    got_z, got_w = [], []
    need = r
    for _ in range(4):
        x, y = cell.sample_uniform(rng, need + need // 4 + 2)
        pts = x + 1j * y
        z = pts if direction == FORWARD else cmap.inverse(pts)
        ok = cmap.seam_distance(z) >= SEAM_TOL * cmap.diameter
        got_z.append(z[ok][:need])
        got_w.append(pts[ok][:need])
        need -= len(got_z[-1])
        if need <= 0:
            break
    return np.concatenate(got_z), np.concatenate(got_w)


def sample_field(tree: PairTree, depth: int, budget: int, direction: str = FORWARD, seed: int = 0,
                 per_cell: int = 20, p: BasePlaneMap | None = None, floor_share: float = 0.5,
                 with_jacobian: bool = False) -> FieldSamples:
    """Dilatation samples on levels ``0..depth``.

    Forward samples are uniform in source cells and carry source areas; inverse
    samples are uniform in target cells, evaluated at their preimages (the
    dilatation of the inverse map at ``w`` equals that of the map at its preimage).
    ``with_jacobian`` also stores the Jacobian determinant at each point in
    ``meta["det"]`` (used by ``image_reweighted``).
    """
    if direction not in (FORWARD, INVERSE):
        raise ValueError(f"direction must be {FORWARD!r} or {INVERSE!r}")
    if depth == 0:
        return identity_field(budget, seed, direction)
    side = "src" if direction == FORWARD else "tgt"
    scheme = tree.src if direction == FORWARD else tree.tgt
    bands = band_areas(scheme, depth + 1)
    unresolved = float(level_square_sums(scheme, depth + 1)[-1])  # area below the last polyline
    budgets = allocate(bands, budget, floor_share)
    cols = {k: [] for k in ("z", "level", "K", "weight", "cell", "det")}
    cell_area, cell_k = [], []
    cid = 0
    for n in range(depth + 1):
        if budgets[n] == 0:
            continue
        ncells = max(1, math.ceil(budgets[n] / per_cell))
        r = max(1, budgets[n] // ncells)
        raw, chunks = [], []
        for i in range(ncells):
            rng = np.random.default_rng([seed, n, i])
            node, prob = tree.descend(rng, n, side)
            cp = tree.cells(node)
            try:
                cmap = YoccozCellMap(cp.src, cp.tgt, p)
            except DegenerateCell:
                raw.append(0.0)
                chunks.append(None)
                continue
            cell = cp.src if direction == FORWARD else cp.tgt
            z, w = _cell_points(cmap, rng, r, direction)
            K = cmap.dilatation(z, check_seams=False)
            off = node.offset[0 if direction == FORWARD else 1]
            det = np.linalg.det(cmap.jacobian(z)) if with_jacobian else np.ones(len(z))
            raw.append(cell.area() / prob)
            chunks.append((w + off, K, cell.area(), cell.k, det))
        tot = sum(raw)
        if tot <= 0:
            continue
        for u, ch in zip(raw, chunks):
            if ch is None or len(ch[1]) == 0:
                continue
            pts, K, area, k, det = ch
            cols["z"].append(pts)
            cols["det"].append(det)
            cols["K"].append(K)
            cols["level"].append(np.full(len(K), n))
            cols["weight"].append(np.full(len(K), bands[n] * u / tot / len(K)))
            cols["cell"].append(np.full(len(K), cid))
            cell_area.append(area)
            cell_k.append(k)
            cid += 1
    arr = {k: np.concatenate(v) if v else np.empty(0) for k, v in cols.items()}
    # cells whose points were all rejected leave their share unassigned; renormalize per band
    for n in range(depth + 1):
        m = arr["level"] == n
        s = arr["weight"][m].sum()
        if s > 0:
            arr["weight"][m] *= bands[n] / s
    return FieldSamples(arr["z"].astype(complex), arr["level"].astype(int), arr["K"], arr["weight"],
                        arr["cell"].astype(int), direction, depth, bands, unresolved,
                        np.array(cell_area), np.array(cell_k, dtype=int),
                        {"budget": budget, "seed": seed, "per_cell": per_cell, "floor_share": floor_share,
                         **({"det": arr["det"]} if with_jacobian else {})})


def image_reweighted(samples: FieldSamples, tree: PairTree) -> FieldSamples:
    """Forward samples reweighted by the Jacobian so they estimate areas on the target grid.

    Each band is normalized to the exact target band area, so the result is
    comparable with inverse-direction samples of the same pair.
    """
    if samples.direction != FORWARD or "det" not in samples.meta:
        raise ValueError("needs forward samples taken with_jacobian=True")
    bands = band_areas(tree.tgt, samples.depth + 1)
    w = samples.weight * samples.meta["det"]
    for n in range(samples.depth + 1):
        m = samples.level == n
        s = w[m].sum()
        if s > 0:
            w[m] *= bands[n] / s
    return FieldSamples(samples.z, samples.level, samples.K, w, samples.cell, INVERSE, samples.depth,
                        bands, float(level_square_sums(tree.tgt, samples.depth + 1)[-1]),
                        samples.cell_area, samples.cell_k, {"reweighted": True})


def identity_field(m: int, seed: int = 0, direction: str = FORWARD) -> FieldSamples:
    """Depth 0: the approximant is fixed by the single point of the trivial partition, so the map is the identity."""
    if m < MIN_PER_LEVEL:
        raise BudgetTooSmall(f"budget {m} is below {MIN_PER_LEVEL}")
    rng = np.random.default_rng([seed, 0])
    z = rng.random(m) + 1j * (1.0 - rng.random(m))
    return FieldSamples(z, np.zeros(m, dtype=int), np.ones(m), np.full(m, 1.0 / m), np.zeros(m, dtype=int),
                        direction, 0, np.array([1.0]), 0.0, np.array([1.0]), np.array([1]),
                        {"budget": m, "seed": seed, "identity": True})


def unresolved_bound(tree: PairTree, depth: int, direction: str) -> dict:
    """Area below the deepest sampled level and the bound it must respect.

    Forward: ``C sigma^N`` with ``sigma`` the largest measured band-to-band
    ratio of the remaining area.  Inverse: ``2 / q_N``.
    ``C`` is the smallest constant that makes the geometric envelope hold from level 1 on.
    """
    if depth == 0:
        return {"mass": 0.0, "bound": 0.0, "ok": True, "identity": True}
    scheme = tree.src if direction == FORWARD else tree.tgt
    rest = level_square_sums(scheme, depth + 1)  # area below polyline n
    mass = float(rest[-1])
    N = depth + 1
    if direction == FORWARD:
        # level 0 may carry no area (golden), so rates are read from level 1 on
        live = np.flatnonzero(rest[:-1] > 0)
        live = live[live >= 1] if np.any(live >= 1) else live
        sigma = float((rest[live + 1] / rest[live]).max())
        n = np.arange(len(rest))
        C = float(np.max(rest[1:] / sigma ** n[1:])) if sigma > 0 else 0.0
        bound = C * sigma**N
        return {"mass": mass, "bound": bound, "sigma": sigma, "C": C,
                "ok": bool(sigma < 1 and mass <= bound * (1 + 1e-12))}
    q = scheme.cf.q(N)
    bound = 2.0 / q
    return {"mass": mass, "bound": bound, "q_N": q, "ok": mass <= bound}


def sample_grid_field(pair: GridPair, budget: int, direction: str = FORWARD, seed: int = 0,
                      per_cell: int = 20, p: BasePlaneMap | None = None,
                      floor_share: float = 0.5) -> FieldSamples:
    """Dilatation samples over two materialized grids (the critical tier).

    Levels ``0..depth - 1`` of the grids are sampled; cells are drawn in
    proportion to their area within each band, so every point of a band
    carries the same weight.
    """
    if direction not in (FORWARD, INVERSE):
        raise ValueError(f"direction must be {FORWARD!r} or {INVERSE!r}")
    grid = pair.source if direction == FORWARD else pair.target
    depth = grid.depth - 1
    if depth <= 0:
        return identity_field(budget, seed, direction)
    bands = np.array([grid.band_area(n) for n in range(depth + 1)])
    unresolved = polyline_integral(grid.lengths[depth + 1])
    budgets = allocate(bands, budget, floor_share)
    cols = {k: [] for k in ("z", "level", "K", "cell")}
    cell_area, cell_k = [], []
    cid = 0
    for n in range(depth + 1):
        if budgets[n] == 0:
            continue
        cells = grid.cells[n]
        areas = np.array([c.area() for c in cells])
        rng = np.random.default_rng([seed, n])
        picks = rng.choice(len(cells), size=max(1, math.ceil(budgets[n] / per_cell)), p=areas / areas.sum())
        r = max(1, budgets[n] // len(picks))
        for i, cnt in zip(*np.unique(picks, return_counts=True)):
            a, b = pair.source.cells[n][i], pair.target.cells[n][i]
            try:
                cmap = YoccozCellMap(a, b, p)
            except DegenerateCell:
                continue
            z, w = _cell_points(cmap, rng, r * int(cnt), direction)
            if len(z) == 0:
                continue
            cell = a if direction == FORWARD else b
            cols["z"].append(w + cell.x0)
            cols["K"].append(cmap.dilatation(z, check_seams=False))
            cols["level"].append(np.full(len(z), n))
            cols["cell"].append(np.full(len(z), cid))
            cell_area.append(cell.area())
            cell_k.append(cell.k)
            cid += 1
    arr = {k: np.concatenate(v) if v else np.empty(0) for k, v in cols.items()}
    level = arr["level"].astype(int)
    weight = np.zeros(len(level))
    for n in range(depth + 1):
        m = level == n
        if np.any(m):
            weight[m] = bands[n] / m.sum()
    return FieldSamples(arr["z"].astype(complex), level, arr["K"], weight, arr["cell"].astype(int),
                        direction, depth, bands, unresolved, np.array(cell_area), np.array(cell_k, dtype=int),
                        {"budget": budget, "seed": seed, "per_cell": per_cell, "floor_share": floor_share})
