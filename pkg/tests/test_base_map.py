import numpy as np
import pytest

from yoccoz.errors import OutsideDomain, ResolutionInsufficient
from yoccoz.extension.base_map import EllipticBAMap, p_default_build, p_fast_build
from yoccoz.extension.mobius import dilatation_from_jacobian


@pytest.fixture(scope="module", params=["default", "fast"])
def pmap(request):
    return p_default_build() if request.param == "default" else p_fast_build()


def grid50():
    g = (np.arange(50) + 0.5) / 50
    X, Y = np.meshgrid(2 * g - 1, 2 * g)
    return (X + 1j * Y).ravel()


def test_identity_trace(pmap):
    x = np.random.default_rng(0).uniform(-1, 1, 1000)
    assert np.abs(pmap.forward(x + 0j) - x).max() < 1e-8
    # approaching the base from inside
    assert np.abs(pmap.forward(x + 1e-10j) - x).max() < 1e-8


def test_sides_and_top_leave_the_interval(pmap):
    y = np.linspace(0.05, 2, 20)
    for z in (1 + 1j * y, -1 + 1j * y, np.linspace(-1, 1, 20) + 2j):
        w = pmap.forward(z)
        assert np.all((np.abs(w.real) >= 1 - 1e-9) | (w.imag > 0))
        assert np.all(np.abs(w.imag) < 1e-6 * (1 + np.abs(w)))


def test_odd_symmetry(pmap):
    z = grid50()
    assert np.abs(pmap.forward(-z.conjugate()) + pmap.forward(z).conjugate()).max() < 1e-10


def test_round_trip(pmap):
    z = grid50()
    assert np.abs(pmap.inverse(pmap.forward(z)) - z).max() < 1e-8


def test_jacobian_matches_differences(pmap):
    rng = np.random.default_rng(1)
    z = rng.uniform(-0.8, 0.8, 20) + 1j * rng.uniform(0.2, 1.8, 20)
    h = 1e-6
    dx = (pmap.forward(z + h) - pmap.forward(z - h)) / (2 * h)
    dy = (pmap.forward(z + 1j * h) - pmap.forward(z - 1j * h)) / (2 * h)
    J = pmap.jacobian(z)
    assert np.allclose(J[:, 0, 0], dx.real, rtol=1e-5, atol=1e-6)
    assert np.allclose(J[:, 1, 0], dx.imag, rtol=1e-5, atol=1e-6)
    assert np.allclose(J[:, 0, 1], dy.real, rtol=1e-5, atol=1e-6)
    assert np.allclose(J[:, 1, 1], dy.imag, rtol=1e-5, atol=1e-6)


def test_recorded_dilatation_bound(pmap):
    K = dilatation_from_jacobian(pmap.jacobian(grid50()))
    assert np.all(K >= 1)
    assert K.max() <= pmap.dilatation_bound * 1.05
    assert pmap.dilatation_bound < 10


def test_conformal_stage():
    p = p_default_build()
    # p1 sends the corners of the square to +-1 and +-1/sqrt(m)
    corners = p.p1(np.array([-1.0, 1.0, 1 + 2j, -1 + 2j]))
    assert corners.real == pytest.approx([-1, 1, 1 / np.sqrt(p.m), -1 / np.sqrt(p.m)], rel=1e-9)
    z = grid50()
    assert np.abs(p.p1_inverse(p.p1(z)) - z).max() < 1e-10


def test_errors():
    with pytest.raises(OutsideDomain):
        p_fast_build().forward(np.array([1.5 + 0.5j]))
    with pytest.raises(ResolutionInsufficient):
        EllipticBAMap(quad_nodes=4)
