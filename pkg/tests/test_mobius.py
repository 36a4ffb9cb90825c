import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yoccoz.errors import NodeMismatch, PoleProximity, SmallK
from yoccoz.extension.mobius import (
    EtaCorrection,
    HalfDisk,
    StripShear,
    dilatation_from_jacobian,
    eta_build,
    eta_extend_dilatation,
    psi_build,
    psi_extend,
    psi_extend_dilatation,
    shear_dilatation,
    zeta_derivative,
    zeta_eval,
    zeta_inverse,
    zeta_property_check,
)


def numeric_jacobian(f, z, h=1e-6):
    dx = (f(z + h) - f(z - h)) / (2 * h)
    dy = (f(z + 1j * h) - f(z - 1j * h)) / (2 * h)
    return np.array([[dx.real, dy.real], [dx.imag, dy.imag]])


def parabolic_nodes(k):
    j = np.arange(1, k + 1)
    w = 1.0 / np.minimum(j, k + 1 - j) ** 2
    t = np.concatenate([[0.0], np.cumsum(w)])
    return 2 * t / t[-1] - 1


def test_zeta_values():
    assert zeta_eval(Fraction(2), Fraction(1, 2)) == Fraction(1, 3)
    assert zeta_inverse(2, zeta_eval(2, 0.3)) == pytest.approx(0.3)
    with pytest.raises(PoleProximity):
        zeta_eval(2.0, 2.0)


@given(st.floats(2, 1e4))
def test_zeta_fixed_points_and_multipliers(a):
    assert zeta_eval(a, 0.0) == 0
    assert zeta_eval(a, 1.0) == pytest.approx(1.0)
    assert zeta_derivative(a, 0.0) == pytest.approx(1 / a)
    assert zeta_derivative(a, 1.0) == pytest.approx(a)
    x = np.linspace(0, 1, 50)
    assert np.all(np.diff(zeta_derivative(a, x)) > 0)


def test_property_check_example():
    v = zeta_property_check(2, 0, Fraction(1, 2))
    assert v.ratio == Fraction(16, 9)
    assert v.passed


@settings(max_examples=1000)
@given(st.integers(2, 1000), st.fractions(0, 1, max_denominator=1000), st.fractions(0, 1, max_denominator=1000))
def test_property_sweep(a, x, e):
    eps = e * (1 - x)
    if eps <= 0:
        return
    assert zeta_property_check(a, x, eps).passed


def test_property_ratio_tends_to_one():
    ratios = [zeta_property_check(50, Fraction(1, 3), Fraction(1, 10**p)).ratio for p in (2, 4, 8)]
    assert all(r > 1 for r in ratios)
    assert ratios[0] > ratios[1] > ratios[2]
    assert float(ratios[-1]) == pytest.approx(1.0, abs=1e-5)


def test_strip_shear_boundary_and_dilatation():
    sh = StripShear(5.0)
    x = np.linspace(-3, 3, 7)
    assert np.allclose(sh(x), x + math.log(5.0))
    assert np.allclose(sh(x + 1j * np.pi / 2), x + 1j * np.pi / 2)
    assert np.allclose(sh.inverse(sh(0.3 + 0.7j)), 0.3 + 0.7j)
    c = math.log(5.0) / math.pi
    expected = (math.sqrt(1 + c * c) + c) / (math.sqrt(1 + c * c) - c)
    assert sh.dilatation == pytest.approx(expected)
    assert dilatation_from_jacobian(sh.jacobian) == pytest.approx(expected)
    assert shear_dilatation(1 / 5.0) == pytest.approx(expected)


def test_shear_dilatation_at_e_pi():
    assert shear_dilatation(math.exp(math.pi)) == pytest.approx(3 + 2 * math.sqrt(2), abs=1e-12)


def test_psi_small_k():
    with pytest.raises(SmallK):
        psi_build(3, 0.0)


@given(st.integers(4, 2000), st.floats(-0.95, 0.95))
def test_psi_fixed_points_and_monotone(k, s):
    psi = psi_build(k, s)
    assert psi(np.array([-1.0, s, 1.0])) == pytest.approx([-1.0, s, 1.0], abs=1e-14)
    x = np.linspace(-1, 1, 401)
    assert np.all(np.diff(psi(x)) > 0)
    assert psi.inverse(psi(x)) == pytest.approx(x, abs=1e-12)


def test_psi_branch_value():
    psi = psi_build(4, 0.0)
    assert psi(-0.5) == pytest.approx(-1 / 3, abs=1e-15)


@pytest.mark.parametrize("k,s", [(4, 0.0), (21, -0.3), (200, 0.4)])
def test_psi_multipliers(k, s):
    psi = psi_build(k, s)
    a, b = k // 2, k - k // 2
    h = 1e-7
    assert (psi(-1 + h) - psi(-1.0)) / h == pytest.approx(a, rel=1e-4)
    assert psi.derivative(-1.0) == pytest.approx(a)
    assert (psi(1.0) - psi(1 - h)) / h == pytest.approx(b, rel=1e-4)
    assert psi.derivative(s - 1e-12) == pytest.approx(1 / a, rel=1e-6)
    assert psi.derivative(s + 1e-12) == pytest.approx(1 / b, rel=1e-6)


def test_psi_extension_outside_disks():
    psi = psi_build(10, 0.1)
    z = np.array([2j, -1.5 + 0.3j, 1.2 + 0.01j, 0.1 + 1.2j])
    assert np.allclose(psi_extend(psi, z), z)
    assert np.allclose(psi_extend_dilatation(psi, z), 1.0)


def test_psi_extension_trace():
    rng = np.random.default_rng(0)
    psi = psi_build(37, -0.2)
    x = rng.uniform(-1, 1, 100)
    assert np.abs(psi_extend(psi, x + 0j) - psi(x)).max() < 1e-12
    assert np.abs(psi_extend(psi, x + 1e-13j) - psi(x)).max() < 1e-11


def test_psi_extension_identity_on_geodesics():
    psi = psi_build(12, 0.2)
    for d in (psi.disk_a, psi.disk_b):
        th = np.linspace(0.05, np.pi - 0.05, 9)
        z = d.center + d.radius * np.exp(1j * th)
        assert np.abs(psi_extend(psi, z * (1 - 1e-12)) - z).max() < 1e-9


def test_psi_extension_dilatation_constant_per_disk():
    k = 2 * 23
    a = k // 2
    psi = psi_build(k, 0.0)
    rng = np.random.default_rng(1)
    for d, mult in ((psi.disk_a, a), (psi.disk_b, k - a)):
        r = d.radius * np.sqrt(rng.uniform(0.01, 0.9, 50))
        z = d.center + r * np.exp(1j * rng.uniform(0.1, np.pi - 0.1, 50))
        K = psi_extend_dilatation(psi, z)
        assert np.allclose(K, shear_dilatation(mult), rtol=1e-9)
        Kn = [dilatation_from_jacobian(numeric_jacobian(psi.extend, zz)) for zz in z[:10]]
        assert np.allclose(Kn, shear_dilatation(mult), rtol=1e-4)


def test_extension_at_e_pi_multiplier():
    lam = math.exp(math.pi)
    d = HalfDisk(-1.0, 0.0, StripShear(lam))
    assert d.shear.dilatation == pytest.approx(3 + 2 * math.sqrt(2), abs=1e-12)
    rng = np.random.default_rng(3)
    for _ in range(5):
        z = d.center + d.radius * rng.uniform(0.2, 0.8) * np.exp(1j * rng.uniform(0.3, 2.8))
        J = numeric_jacobian(lambda v: d._conj(v, d.shear), z, h=1e-6)
        assert dilatation_from_jacobian(J) == pytest.approx(3 + 2 * math.sqrt(2), rel=1e-5)


def test_psi_extension_inverse():
    psi = psi_build(9, 0.3)
    rng = np.random.default_rng(2)
    z = rng.uniform(-1.2, 1.2, 200) + 1j * rng.uniform(0, 1.2, 200)
    assert np.abs(psi.extend_inverse(psi.extend(z)) - z).max() < 1e-12


def test_eta_identity():
    s = np.linspace(-1, 1, 4)
    eta = eta_build(s, s)
    assert np.allclose(eta(np.linspace(-1, 1, 11)), np.linspace(-1, 1, 11))
    assert np.allclose(eta.slope_table(), 1.0)
    assert eta_extend_dilatation(1.0) == 1.0
    assert eta_extend_dilatation(0.5) == pytest.approx(2.0)


def test_eta_node_errors():
    with pytest.raises(NodeMismatch):
        EtaCorrection(np.linspace(-1, 1, 4), np.linspace(-1, 1, 5))
    with pytest.raises(NodeMismatch):
        EtaCorrection(np.array([-1, 0.5, 0.2, 1.0]), np.linspace(-1, 1, 4))


def test_eta_interpolates_psi_nodes():
    k = 20
    s, sp = parabolic_nodes(k), np.linspace(-1, 1, k + 1)
    psi = psi_build(k, sp[k // 2])
    eta = eta_build(s, sp, psi)
    assert eta(s) == pytest.approx(psi(sp), abs=1e-14)
    assert eta.inverse(eta(s)) == pytest.approx(s, abs=1e-12)


def test_eta_slope_band_does_not_grow():
    bands = {}
    for k in (4, 10, 20, 50, 100, 300, 1000):
        sp = np.linspace(-1, 1, k + 1)
        eta = eta_build(parabolic_nodes(k), sp, psi_build(k, sp[k // 2]))
        lo, hi = eta.slope_band()
        bands[k] = max(hi, 1 / lo)
    assert max(bands.values()) < 6
    assert bands[1000] <= 1.1 * bands[100]
