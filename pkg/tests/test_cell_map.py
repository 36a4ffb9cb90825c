import math

import numpy as np
import pytest

from yoccoz.cell_tree import PairTree, ParabolicScheme, RotationScheme
from yoccoz.critical_dynamics import CriticalMap, OrbitCache, partition_critical, tune_parameter
from yoccoz.errors import DegenerateCell, IndexMismatch, OutsideDomain, SeamProximity
from yoccoz.extension.base_map import p_default_build
from yoccoz.extension.cell_map import (
    AffineBlend,
    FiberAffinePhi,
    YoccozCellMap,
    cell_sup_dilatation,
    dilatation_at,
    edge_compatibility,
    phi_eval,
    phi_inverse,
    sample_targeted,
)
from yoccoz.extension.mobius import dilatation_from_jacobian
from yoccoz.grid_geometry import Cell, build_grid
from yoccoz.rotation_side import closest_return_lengths, partition_rotation


def synthetic_tree(a, skew=0.0):
    rs = RotationScheme([1, 1, a, 1, 1, 1, 1], 4)
    return PairTree(ParabolicScheme(rs, skew), rs)


def widest_pair(tree, level):
    return max((tree.cells(v) for v in tree.enumerate_level(level)), key=lambda cp: cp.src.k)


@pytest.fixture(scope="module")
def big_map():
    cp = widest_pair(synthetic_tree(100), 2)
    return YoccozCellMap(cp.src, cp.tgt)


def interior_points(cell, rng, m):
    x, y = cell.sample_uniform(rng, m)
    return x + 1j * y


def test_phi_square_cell():
    sq = Cell(0, 0.0, np.array([0.0, 1.0]), (1.0, 1.0), np.array([0.0, 0.0]))
    z = np.array([0.25 + 0.5j, 0.9 + 0.1j])
    assert phi_eval(sq, z) == pytest.approx((2 * z.real - 1) + 2j * z.imag)
    with pytest.raises(OutsideDomain):
        phi_eval(sq, np.array([0.5 + 1.5j]))


def test_phi_endpoints_and_round_trip():
    c = Cell.from_lengths(2, 1.0, [0.2, 0.5, 0.3], 0.8, 0.4, 0.2)
    w = c.width
    corners = np.array([0 + 1j * c.g2(0.0), w + 1j * c.g2(w), 0 + 1j * c.y_top[0], w + 1j * c.y_top[1]])
    assert phi_eval(c, corners) == pytest.approx([-1, 1, -1 + 2j, 1 + 2j], abs=1e-14)
    z = interior_points(c, np.random.default_rng(0), 500)
    assert np.abs(phi_inverse(c, phi_eval(c, z)) - z).max() < 1e-12 * w
    phi = FiberAffinePhi(c)
    assert phi.nodes == pytest.approx(2 * c.t / w - 1)


def test_affine_blend_boundary():
    s = np.array([-1, -0.2, 1.0])
    sp = np.array([-1, 0.4, 1.0])
    E = AffineBlend(s, sp)
    assert E.forward(np.array([-0.2 + 0j]))[0] == pytest.approx(0.4)
    top = np.linspace(-1, 1, 7) + 2j
    assert np.allclose(E.forward(top), top)
    Z = np.array([0.1 + 0.5j, -0.7 + 1.2j])
    assert np.allclose(E.inverse(E.forward(Z)), Z)


def test_construction_errors():
    tree = synthetic_tree(10)
    v = tree.enumerate_level(2)
    a, b = tree.cells(v[0]), tree.cells(v[1])
    if a.src.k != b.tgt.k:
        with pytest.raises(IndexMismatch):
            YoccozCellMap(a.src, b.tgt)
    flat = Cell.from_lengths(3, 1.0, [1.0], 1.0, 1.0, 1.0)
    with pytest.raises(DegenerateCell):
        YoccozCellMap(flat, flat)


def test_vertices_follow_boundary_correspondence(big_map):
    src, tgt = big_map.src, big_map.tgt
    zs = src.t + 1j * src.y_bot
    zt = tgt.t + 1j * tgt.y_bot
    assert np.abs(big_map.forward(zs) - zt).max() < 1e-9 * big_map.diameter
    top = np.array([0 + 1j * src.y_top[0], src.width + 1j * src.y_top[1]])
    assert big_map.forward(top) == pytest.approx([1j * tgt.y_top[0], tgt.width + 1j * tgt.y_top[1]])


def test_boundary_is_piecewise_affine(big_map):
    src, tgt = big_map.src, big_map.tgt
    u = (np.arange(20) + 0.5) / 20
    for j in (0, 1, src.k // 2, src.k - 1):
        x = src.t[j] + u * (src.t[j + 1] - src.t[j])
        xt = tgt.t[j] + u * (tgt.t[j + 1] - tgt.t[j])
        out = big_map.forward(x + 1j * src.g2(x))
        assert np.abs(out - (xt + 1j * tgt.g2(xt))).max() < 1e-9 * big_map.diameter


def test_identity_pair_has_unit_dilatation():
    rs = RotationScheme([5, 3, 7, 2, 6, 4], 3)
    tree = PairTree(rs, rs)
    rng = np.random.default_rng(1)
    for v in tree.enumerate_level(0) + tree.enumerate_level(1)[:3]:
        cp = tree.cells(v)
        cm = YoccozCellMap(cp.src, cp.tgt)
        z = interior_points(cp.src, rng, 200)
        z = z[cm.seam_distance(z) > 1e-6 * cm.diameter]
        assert np.abs(cm.forward(z) - z).max() < 1e-9
        assert np.allclose(cm.dilatation(z), 1.0, atol=1e-6)


def test_containment_golden_grids():
    cf = [1] * 12
    depth = 6
    fmap = CriticalMap(tune_parameter(cf, depth + 1).t)
    cache = OrbitCache(fmap)
    crit = [partition_critical(fmap, cf, n, cache) for n in range(depth + 1)]
    src = build_grid([[float(x) for x in p.points] for p in crit], [p.lengths() for p in crit])
    rl = closest_return_lengths(cf, depth + 1)
    rot = [partition_rotation(cf, n, rl=rl) for n in range(depth + 1)]
    tgt = build_grid([p.points for p in rot], [p.lengths for p in rot])
    rng = np.random.default_rng(2)
    for n in range(depth):
        for a, b in zip(src.cells[n], tgt.cells[n]):
            if a.area() <= 0 or b.area() <= 0:
                continue
            cm = YoccozCellMap(a, b)
            z = interior_points(a, rng, 1000)
            w = cm.forward(z)
            tol = 1e-10 * cm.diameter
            inside = (w.real >= -tol) & (w.real <= b.width + tol)
            inside &= (w.imag >= b.g2(w.real) - tol) & (w.imag <= b.g1(w.real) + tol)
            assert inside.all()


def test_containment_and_inverse_large_k(big_map):
    z = interior_points(big_map.src, np.random.default_rng(3), 1000)
    w = big_map.forward(z)
    assert np.all(big_map.tgt.contains(w.real, w.imag) | (big_map.tgt.g2(w.real) - w.imag > -1e-12))
    assert np.abs(big_map.inverse(w) - z).max() < 1e-9 * big_map.diameter


def test_analytic_matches_numeric(big_map):
    rng = np.random.default_rng(4)
    z = interior_points(big_map.src, rng, 10000)
    z = z[big_map.seam_distance(z) > 1e-3 * big_map.diameter][:2000]
    Ka = dilatation_at(big_map, z, "analytic")
    Kn = dilatation_at(big_map, z, "numeric")
    assert np.all(Ka >= 1) and np.all(Kn >= 1)
    assert np.mean(np.abs(Kn - Ka) / Ka <= 1e-2) >= 0.95


def test_seam_points_are_rejected(big_map):
    c = big_map.src
    z = np.array([c.t[3] + 1j * (c.g2(c.t[3]) + 0.5 * (c.g1(c.t[3]) - c.g2(c.t[3])))])
    with pytest.raises(SeamProximity):
        big_map.dilatation(z)


def test_inverse_dilatation_symmetry(big_map):
    z = interior_points(big_map.src, np.random.default_rng(5), 300)
    z = z[big_map.seam_distance(z) > 1e-4 * big_map.diameter]
    K = dilatation_from_jacobian(big_map.jacobian(z))
    Kinv = dilatation_from_jacobian(big_map.inverse_jacobian(big_map.forward(z)))
    assert np.allclose(K, Kinv, rtol=1e-6)


def test_small_b_half_disk_band(big_map):
    # K there is the branch shear for b = 50 or 51 up to bounded factors
    from yoccoz.extension.cell_map import _half_disk_samples

    rng = np.random.default_rng(6)
    w2 = _half_disk_samples(rng, big_map.psi.disk_b, 2000)
    z = big_map.phi.inverse(big_map.p.inverse(big_map.eta.extend_inverse(w2)))
    z = z[big_map.seam_distance(z) > 1e-6 * big_map.diameter]
    K = big_map.dilatation(z, check_seams=False)
    ref = 4 / math.pi**2 * math.log(50) ** 2
    assert np.quantile(K, 0.05) >= ref / 2
    assert np.median(K) <= 8 * ref


def test_small_k_fallback_bounded():
    tree = synthetic_tree(10)
    worst = []
    for v in tree.enumerate_level(3)[:40]:
        cp = tree.cells(v)
        if cp.src.k > 3:
            continue
        try:
            cm = YoccozCellMap(cp.src, cp.tgt)
        except DegenerateCell:
            continue
        assert cm.path == "affine"
        worst.append(cell_sup_dilatation(cm, 400, np.random.default_rng(0)).K_max)
    assert worst and max(worst) < 50


def test_targeted_samples_land_in_cell(big_map):
    z = sample_targeted(big_map, np.random.default_rng(7), 500)
    c = big_map.src
    assert np.all((z.real >= -1e-12) & (z.real <= c.width + 1e-12))
    assert np.all(z.imag >= c.g2(z.real) - 1e-12)


def test_sup_report_scales_with_log_squared():
    ratios = []
    for a in (10, 100, 1000):
        cp = widest_pair(synthetic_tree(a), 2)
        r = cell_sup_dilatation(YoccozCellMap(cp.src, cp.tgt), 4000, np.random.default_rng(8), a_next=a)
        ratios.append(r.ratio)
        assert r.area_fraction > 0
    assert max(ratios) / min(ratios) < 4


@pytest.mark.parametrize("use_default", [False, True])
def test_edge_compatibility(use_default):
    rs = RotationScheme([5, 3, 7, 2, 6, 4, 5, 3, 3], 5)
    tree = PairTree(ParabolicScheme(rs), rs)
    p = p_default_build() if use_default else None
    for n in range(3):
        rep = edge_compatibility(tree, n, 100, p=p)
        assert rep["edges"] > 0
        assert rep["passed"], rep


def test_to_json(big_map):
    d = big_map.to_json()
    assert d["k"] == big_map.k and d["path"] == "mobius"
