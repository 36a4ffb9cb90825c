import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yoccoz.cell_tree import (
    PairTree,
    ParabolicScheme,
    RotationScheme,
    band_areas,
    rotation_min_cell_areas,
)
from yoccoz.critical_dynamics import CriticalMap, OrbitCache, partition_critical, tune_parameter
from yoccoz.errors import DegenerateCell, IndexMismatch
from yoccoz.grid_geometry import (
    FLAT,
    QUAD,
    TRIANGLE,
    Cell,
    GridPair,
    build_grid,
    correspond,
    grid_report,
    render_svg,
)
from yoccoz.rotation_side import closest_return_lengths, partition_rotation

G = (5**0.5 - 1) / 2


def rotation_grid(cf, depth):
    rl = closest_return_lengths(cf, depth + 1)
    parts = [partition_rotation(cf, n, rl=rl) for n in range(depth + 1)]
    return build_grid([p.points for p in parts], [p.lengths for p in parts])


@pytest.fixture(scope="module")
def golden_grid():
    return rotation_grid([1] * 16, 13)


def test_unit_square_and_trapezoid():
    sq = Cell(0, 0.0, np.array([0.0, 1.0]), (1.0, 1.0), np.array([0.0, 0.0]))
    assert sq.area() == pytest.approx(1.0)
    rep = sq.geometry_report()
    assert rep["min_angle"] == pytest.approx(np.pi / 2)
    assert rep["max_angle"] == pytest.approx(np.pi / 2)
    assert rep["side_ratio"] == pytest.approx(1.0)
    trap = Cell(0, 0.0, np.array([0.0, 1.0]), (1.0, 1.0), np.array([0.6, 0.4]))
    assert trap.area() == pytest.approx(0.5)


def test_level0_cell():
    g = rotation_grid([3, 2, 2, 2, 2], 2)
    c = g.cells[0][0]
    assert c.y_top == (1.0, 1.0)
    assert c.width == 1.0
    assert c.k == 3


def test_level1_height():
    cf = [3, 2, 2, 2, 2]
    g = rotation_grid(cf, 2)
    L = g.lengths[1]
    assert g.heights(1)[0] == pytest.approx((L[-1] + L[0]) / 2)
    golden = rotation_grid([1] * 8, 4)
    assert golden.heights(1)[0] == pytest.approx(1.0)


def test_cell_counts(golden_grid):
    q = [1, 1, 2, 3, 5, 8, 13, 21, 34, 55, 89, 144, 233]
    assert [len(r) for r in golden_grid.cells] == q[:golden_grid.depth]


def test_band_areas_tile(golden_grid):
    for n, row in enumerate(golden_grid.cells):
        assert sum(c.area() for c in row) == pytest.approx(golden_grid.band_area(n), abs=1e-14)
        assert sum(c.width for c in row) == pytest.approx(1.0, abs=1e-13)


def test_heights_non_increasing():
    for cf in ([1] * 12, [3, 1, 4, 1, 5, 9, 2, 6]):
        g = rotation_grid(cf, len(cf) - 2)
        for n in range(len(g.levels) - 1):
            y_n = g.heights(n)
            idx = np.searchsorted(g.levels[n + 1], g.levels[n])
            y_next = g.heights(n + 1)[idx]
            assert np.all(y_next <= y_n + 1e-15)
            if cf[n] != 1:
                assert np.all(y_next < y_n)


def test_golden_report_trend_free(golden_grid):
    rep = grid_report(golden_grid)
    early = [r for r in rep if 3 <= r["level"] <= 7]
    late = [r for r in rep if r["level"] >= 8]
    for key in ("side_ratio_max", "angle_min", "angle_max"):
        a = max(r[key] for r in early)
        b = max(r[key] for r in late)
        assert b == pytest.approx(a, rel=0.05)
    assert min(r["angle_min"] for r in rep) > 0.3


def test_golden_min_area_scaling(golden_grid):
    mins = [min(c.area() for c in row if c.kind != FLAT) for row in golden_grid.cells[1:]]
    ratio = np.array(mins) / np.array([G ** (2 * n) for n in range(1, golden_grid.depth)])
    assert ratio.max() / ratio.min() < 4


def test_inscribed_square(golden_grid):
    ratios = [c.inscribed_square_side() / c.width for row in golden_grid.cells[2:] for c in row]
    assert min(ratios) > 0.1


def test_triangle_and_flat_kinds():
    tri = Cell.from_lengths(3, 1.0, [1.0], 2.0, 1.0, 1.0)
    assert tri.kind == TRIANGLE
    flat = Cell.from_lengths(3, 1.0, [1.0], 1.0, 1.0, 1.0)
    assert flat.kind == FLAT and flat.area() == 0
    assert len(tri.vertices()) == 3
    with pytest.raises(DegenerateCell):
        Cell.from_lengths(0, -3.0, [1.0], 1.0, 1.0, 1.0)


def test_sample_uniform_is_area_uniform():
    c = Cell.from_lengths(2, 1.0, [0.2, 0.5, 0.3], 0.8, 0.4, 0.2)
    rng = np.random.default_rng(5)
    x, y = c.sample_uniform(rng, 40000)
    assert np.all(c.contains(x, y))
    # fraction in the left half of the base vs exact area of that part
    xs = np.linspace(0, 0.5, 2001)
    exact = np.trapezoid(c.g1(xs) - c.g2(xs), xs) / c.area()
    assert np.mean(x < 0.5) == pytest.approx(exact, abs=0.01)


def test_svg_counts():
    g = rotation_grid([1] * 10, 5)
    svg = render_svg(g, depth=3)
    assert svg.count("<polygon") == 1 + 1 + 2 + 3
    assert render_svg(g, depth=0).count('class="period"') == 1
    heat = render_svg(g, depth=2, colors={})
    assert "rgb(" not in heat


def test_pair_correspondence():
    cf = [1] * 12
    fmap = CriticalMap(tune_parameter(cf, 7).t)
    cache = OrbitCache(fmap)
    crit = [partition_critical(fmap, cf, n, cache) for n in range(7)]
    src = build_grid([[float(x) for x in p.points] for p in crit], [p.lengths() for p in crit])
    tgt = rotation_grid(cf, 6)
    pair = GridPair(src, tgt)
    b, va, vb, bmap = correspond(pair, 0, 0)
    assert b.level == 0 and vb[-1] == pytest.approx(1j)
    for n in range(6):
        for i in range(len(src.cells[n])):
            cell, va, vb, _ = correspond(pair, n, i)
            assert len(va) == len(vb)
    with pytest.raises(IndexMismatch):
        correspond(pair, 2, 99)


def test_tree_matches_materialized():
    cf = [3, 1, 4, 1, 5, 9, 2, 6, 5, 3]
    depth = 6
    g = rotation_grid(cf, depth)
    rs = RotationScheme(cf, depth)
    assert np.allclose(band_areas(rs, depth), [g.band_area(n) for n in range(depth)], atol=1e-15)
    tree = PairTree(ParabolicScheme(rs), rs)
    for n in range(depth):
        a1 = sorted(tree.cells(v).tgt.area() for v in tree.enumerate_level(n))
        a2 = sorted(c.area() for c in g.cells[n])
        assert np.allclose(a1, a2, rtol=1e-9, atol=1e-18)
    mins = rotation_min_cell_areas(rs, depth)
    assert np.allclose(mins, [min(c.area() for c in row if c.area() > 0) for row in g.cells], rtol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 8), min_size=6, max_size=9), st.floats(0, 1))
def test_parabolic_tree_areas(terms, skew):
    depth = 4
    rs = RotationScheme(terms, depth)
    ps = ParabolicScheme(rs, skew)
    tree = PairTree(ps, rs)
    exact = band_areas(ps, depth)
    for n in range(depth):
        cells = [tree.cells(v).src for v in tree.enumerate_level(n)]
        assert sum(c.area() for c in cells) == pytest.approx(exact[n], rel=1e-9, abs=1e-15)
        assert all(c.kind in (QUAD, TRIANGLE, FLAT) for c in cells)
