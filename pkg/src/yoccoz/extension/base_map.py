"""Homeomorphisms ``p`` of the square ``S = [-1,1] x [0,2]`` onto the upper half-plane.

Every ``p`` here is the identity on the bottom edge ``[-1, 1]`` and sends the
other three sides onto ``R \\ (-1, 1)`` through infinity.  Two are provided.

``EllipticBAMap`` follows the two-stage recipe: the conformal map ``sn(K z | m)``
with ``K'/K = 2`` carries ``S`` onto the half-plane, and a Beurling-Ahlfors
extension of the boundary correction ``g`` (``g(sn(K x)) = x`` on ``[-1, 1]``)
restores the identity trace.

``LogStretchMap`` is an explicit bounded-distortion map for sampling: in the
coordinates ``W = log((1+z)/(1-z))`` the square becomes a region over the real
axis bounded by a graph of height ``H(xi)``, and ``p`` stretches each vertical
fiber linearly onto ``[0, pi]``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq
from scipy.special import ellipj, ellipk, elliprf

from ..errors import OutsideDomain, ResolutionInsufficient
from .mobius import _cmul_matrix, dilatation_from_jacobian


class BasePlaneMap:
    """Interface: forward, inverse and real Jacobians, plus a recorded dilatation bound."""

    name = "base"
    dilatation_bound: float = float("nan")

    def forward(self, z):
        raise NotImplementedError

    def inverse(self, w):
        raise NotImplementedError

    def jacobian(self, z) -> np.ndarray:
        raise NotImplementedError

    def inverse_jacobian(self, w) -> np.ndarray:
        return np.linalg.inv(self.jacobian(self.inverse(w)))

    def seam_distance(self, z) -> np.ndarray:
        """Distance (in ``S``) to curves where ``p`` is not smooth."""
        return np.full(np.shape(z), np.inf)

    def measure_dilatation(self, n: int = 60) -> float:
        g = (np.arange(n) + 0.5) / n
        X, Y = np.meshgrid(2 * g - 1, 2 * g)
        K = dilatation_from_jacobian(self.jacobian((X + 1j * Y).ravel()))
        return float(K.max())

    def to_json(self) -> dict:
        return {"name": self.name, "dilatation_bound": self.dilatation_bound}


def _upper(w):
    # rounding can leave boundary images a hair below the real axis
    w = np.asarray(w, dtype=complex)
    return w.real + 1j * np.where(w.imag > 0, w.imag, 0.0)


def _check_square(z):
    z = np.asarray(z, dtype=complex)
    tol = 1e-12
    if np.any((np.abs(z.real) > 1 + tol) | (z.imag < -tol) | (z.imag > 2 + tol)):
        raise OutsideDomain("point outside the square [-1,1] x [0,2]")
    return z


# ----------------------------------------------------------------- log stretch

XI_CORNER = math.atanh(1 / 3)  # level curve of Re log((1+z)/(1-z)) through the corner 1 + 2i


def _log_chart(z):
    # the argument is taken in [0, pi] so real points beyond +-1 land on the top line
    z = np.asarray(z, dtype=complex)
    with np.errstate(divide="ignore"):
        mod = np.log(np.abs(1 + z)) - np.log(np.abs(1 - z))
    return mod + 1j * np.arctan2(2 * np.abs(z.imag), 1 - np.abs(z) ** 2)


def _log_chart_inverse(W):
    return np.tanh(W / 2)


def _top_height(xi):
    """Height ``H`` of the square's image over ``xi`` and its derivative ``H'``."""
    xi = np.asarray(xi, dtype=float)
    a = np.abs(xi)
    side = a >= XI_CORNER
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        sig = 2 / np.sqrt(np.expm1(2 * np.where(side, a, 1.0)))
        sh, ch = np.sinh(a), np.cosh(a)
        X = 5 * sh / (ch + np.sqrt(np.maximum(1 - 4 * sh * sh, 0)))
    wb = np.where(side, 1 + 1j * sig, X + 2j)
    # xi = +-inf is the bottom corner itself, where the values are never used
    with np.errstate(divide="ignore", invalid="ignore"):
        H = np.angle((1 + wb) / (1 - wb))
        d = 2 / (1 - wb * wb)
        dH = np.where(side, -d.real / d.imag, d.imag / d.real)
    dH = np.where(np.isfinite(dH), dH, 0.0)
    return H, np.sign(xi) * dH


class LogStretchMap(BasePlaneMap):
    name = "log-stretch"

    def __init__(self, measure: int = 60):
        self.dilatation_bound = self.measure_dilatation(measure)

    def forward(self, z):
        z = _check_square(z)
        W = _log_chart(z)
        H, _ = _top_height(W.real)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = _log_chart_inverse(W.real + 1j * np.pi * W.imag / H)
        # the bottom edge is fixed exactly
        return np.where(z.imag == 0, z, out)

    def inverse(self, w):
        w = _upper(w)
        W = _log_chart(w)
        H, _ = _top_height(W.real)
        out = _log_chart_inverse(W.real + 1j * W.imag * H / np.pi)
        return np.where((w.imag == 0) & (np.abs(w.real) <= 1), w, out)

    def jacobian(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        W = _log_chart(z)
        H, dH = _top_height(W.real)
        T = W.real + 1j * np.pi * W.imag / H
        JT = np.zeros(z.shape + (2, 2))
        JT[..., 0, 0] = 1.0
        JT[..., 1, 0] = -np.pi * W.imag * dH / H**2
        JT[..., 1, 1] = np.pi / H
        t = np.tanh(T / 2)
        return _cmul_matrix((1 - t * t) / 2) @ JT @ _cmul_matrix(2 / (1 - z * z))

    def seam_distance(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        c, r = 3.0, math.sqrt(8.0)
        return np.minimum(np.abs(np.abs(z - c) - r), np.abs(np.abs(z + c) - r))


# ----------------------------------------------------------- elliptic + BA

class EllipticBAMap(BasePlaneMap):
    name = "elliptic-ba"

    def __init__(self, r: float = 2.0, quad_nodes: int = 48, small_y: float = 1e-4,
                 measure: int = 60, trace_tol: float = 1e-8):
        if quad_nodes < 8 or measure < 4:
            raise ResolutionInsufficient("need at least 8 quadrature nodes and a 4 x 4 probe grid")
        self.m = brentq(lambda m: ellipk(1 - m) / ellipk(m) - 2, 1e-6, 0.5, xtol=1e-16)
        self.K = float(ellipk(self.m))
        self.kappa = 1 / (self.K * math.sqrt(1 - self.m))
        self.r = r
        self.small_y = small_y
        t, w = np.polynomial.legendre.leggauss(quad_nodes)
        self._qt, self._qw = (t + 1) / 2, w / 2
        self._G1 = (self.K - self._J(1.0)) / self.K
        xs = np.linspace(-1, 1, 1001)
        err = float(np.abs(self.forward(xs + 0j) - xs).max())
        if err > trace_tol:
            raise ResolutionInsufficient(f"trace error {err:.2e} exceeds {trace_tol:.0e}")
        self.trace_error = err
        self.dilatation_bound = self.measure_dilatation(measure)

    # conformal stage
    def sn(self, u):
        u = np.asarray(u, dtype=complex)
        s, c, d, _ = ellipj(u.real, self.m)
        s1, c1, d1, _ = ellipj(u.imag, 1 - self.m)
        den = c1 * c1 + self.m * s * s * s1 * s1
        with np.errstate(divide="ignore", invalid="ignore"):
            sn = (s * d1 + 1j * c * d * s1 * c1) / den
            cn = (c * c1 - 1j * s * d * s1 * d1) / den
            dn = (d * c1 * d1 - 1j * self.m * s * c * s1) / den
        return sn, cn, dn

    def arcsn(self, w):
        w = np.asarray(w, dtype=complex)
        return w * elliprf(1 - w * w, 1 - self.m * w * w, 1.0)

    def p1(self, z):
        return self.sn(self.K * np.asarray(z, dtype=complex))[0]

    def p1_inverse(self, u):
        return self.arcsn(u) / self.K

    # boundary correction and its antiderivative
    def g(self, u):
        u = np.asarray(u, dtype=float)
        inner = np.abs(u) <= 1
        ui = np.clip(u, -1, 1)
        gin = ui * elliprf(1 - ui * ui, 1 - self.m * ui * ui, 1.0) / self.K
        gout = np.sign(u) * (1 + self.kappa * np.sqrt(np.maximum(u * u - 1, 0)))
        return np.where(inner, gin, gout)

    def g_prime(self, u):
        u = np.asarray(u, dtype=float)
        inner = np.abs(u) < 1
        with np.errstate(divide="ignore", invalid="ignore"):
            gin = 1 / (self.K * np.sqrt((1 - u * u) * (1 - self.m * u * u)))
            gout = self.kappa * np.abs(u) / np.sqrt(u * u - 1)
        return np.where(inner, gin, gout)

    def g_inverse(self, x):
        x = np.asarray(x, dtype=float)
        inner = np.abs(x) <= 1
        s = ellipj(self.K * np.clip(x, -1, 1), self.m)[0]
        out = np.sign(x) * np.sqrt(1 + ((np.abs(x) - 1) / self.kappa) ** 2)
        return np.where(inner, s, out)

    def _J(self, u):
        # int_0^u t dt / sqrt((1 - t^2)(1 - m t^2)) in closed form
        m = self.m
        v = np.asarray(u, dtype=float) ** 2
        Q = np.maximum((1 - v) * (1 - m * v), 0)
        A = -(2 * np.sqrt(m * Q) + 2 * m * v - (1 + m))
        A0 = (1 - math.sqrt(m)) ** 2
        return (np.log(A) - math.log(A0)) / (2 * math.sqrt(m))

    def G(self, u):
        u = np.abs(np.asarray(u, dtype=float))
        ui = np.minimum(u, 1)
        gin = ui * elliprf(1 - ui * ui, 1 - self.m * ui * ui, 1.0) / self.K
        Gin = (ui * gin * self.K - self._J(ui)) / self.K
        uo = np.maximum(u, 1)
        Gout = self._G1 + (uo - 1) + self.kappa / 2 * (uo * np.sqrt(uo * uo - 1) - np.arccosh(uo))
        return np.where(u <= 1, Gin, Gout)

    # Beurling-Ahlfors stage
    def p2(self, z):
        z = np.asarray(z, dtype=complex)
        x, y = z.real, z.imag
        tiny = y < 1e-9
        ys = np.where(tiny, 1.0, y)
        Gp, Gm, G0 = self.G(x + ys), self.G(x - ys), self.G(x)
        U = (Gp - Gm) / (2 * ys)
        V = self.r * (Gp + Gm - 2 * G0) / (2 * ys)
        gx = self.g(x)
        U = np.where(tiny, gx, U)
        V = np.where(tiny, self.r * np.minimum(self.g_prime(x), 1e12) * y / 2, V)
        return U + 1j * V

    def p2_jacobian(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        x, y = z.real, np.maximum(z.imag, 1e-300)
        gp, gm, g0 = self.g(x + y), self.g(x - y), self.g(x)
        Ux = (gp - gm) / (2 * y)
        Vx = self.r * (gp + gm - 2 * g0) / (2 * y)
        Gp, Gm, G0 = self.G(x + y), self.G(x - y), self.G(x)
        Uy = (gp + gm) / (2 * y) - (Gp - Gm) / (2 * y * y)
        Vy = self.r * ((gp - gm) / (2 * y) - (Gp + Gm - 2 * G0) / (2 * y * y))
        small = y < self.small_y
        if np.any(small):
            # the closed forms cancel badly near the axis; integrate g' directly
            xs, ysm = x[small], y[small]
            Ip, Im_ = self._moment(xs, ysm, 1.0), self._moment(xs, ysm, -1.0)
            Uy = np.asarray(Uy, dtype=float).copy()
            Vy = np.asarray(Vy, dtype=float).copy()
            Uy[small] = 0.5 * (Ip - Im_)
            Vy[small] = self.r / 2 * (Ip + Im_)
        J = np.empty(z.shape + (2, 2))
        J[..., 0, 0], J[..., 0, 1] = Ux, Uy
        J[..., 1, 0], J[..., 1, 1] = Vx, Vy
        return J

    def p2_inverse(self, w, tol: float = 1e-14, maxiter: int = 80):
        w = np.asarray(w, dtype=complex)
        shape = w.shape
        w = w.ravel()
        x0 = self.g_inverse(w.real)
        slope = np.clip(self.g_prime(x0), 0.05, 20)
        z = x0 + 1j * np.where(w.imag > 0, w.imag / slope, 0.0)
        scale = 1 + np.abs(w)
        # images of the boundary carry rounding noise in the imaginary part
        on_axis = w.imag <= 1e-13 * scale
        active = ~on_axis
        for _ in range(maxiter):
            if not np.any(active):
                break
            za, wa = z[active], w[active]
            Fa = self.p2(za)
            res = Fa - wa
            err = np.abs(res)
            done = err < tol * scale[active]
            J = self.p2_jacobian(za)
            det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            det = np.where(np.isfinite(det) & (np.abs(det) > 1e-300), det, np.inf)
            dx = (J[:, 1, 1] * res.real - J[:, 0, 1] * res.imag) / det
            dy = (J[:, 0, 0] * res.imag - J[:, 1, 0] * res.real) / det
            dz = np.nan_to_num(dx) + 1j * np.nan_to_num(dy)
            lam = np.ones(len(za))
            new = za - dz
            for _ in range(30):
                bad = (new.imag <= 0) | (np.abs(self.p2(new) - wa) > err)
                bad &= ~done
                if not np.any(bad):
                    break
                lam = np.where(bad, lam / 2, lam)
                new = za - lam * dz
            new = np.where(done, za, new)
            idx = np.flatnonzero(active)
            z[idx] = new
            active[idx[done]] = False
        z[on_axis] = self.g_inverse(w.real[on_axis])
        return z.reshape(shape)

    def _g_prime_near(self, e, delta):
        # g'(e + delta) for e = +-1, written so that tiny offsets keep full precision
        a = np.abs(delta)
        u = e + delta
        inner = delta * e < 0
        with np.errstate(divide="ignore", invalid="ignore"):
            gin = 1 / (self.K * np.sqrt(a * (2 - a) * (1 - self.m * u * u)))
            gout = self.kappa * np.abs(u) / np.sqrt(a * (2 + a))
        return np.where(inner, gin, gout)

    def _moment(self, x, y, sign):
        """``int_0^1 t g'(x + sign t y) dt``, split at the inverse-square-root singularity."""
        ts = np.ones_like(x)
        es = np.zeros_like(x)
        for e in (-1.0, 1.0):
            t = (e - x) / (sign * y)
            hit = (t > 0) & (t < 1)
            ts = np.where(hit, t, ts)
            es = np.where(hit, e, es)
        sig, w = self._qt[None, :], self._qw
        ts, es = ts[:, None], es[:, None]
        xx, yy = x[:, None], y[:, None]
        sing = es != 0
        # t = ts (1 - sig^2) on [0, ts] and t = ts + (1 - ts) sig^2 on [ts, 1]
        t1 = ts * (1 - sig**2)
        d1 = np.where(sing, -(es - xx) * sig**2, 0.0)
        g1 = np.where(sing, self._g_prime_near(np.where(sing, es, 1.0), d1),
                      self.g_prime(xx + sign * t1 * yy))
        f1 = t1 * g1 * 2 * ts * sig
        t2 = ts + (1 - ts) * sig**2
        d2 = sign * (1 - ts) * sig**2 * yy
        g2 = self._g_prime_near(np.where(sing, es, 1.0), d2)
        f2 = np.where(sing, t2 * g2 * 2 * (1 - ts) * sig, 0.0)
        return f1 @ w + f2 @ w

    def forward(self, z):
        z = _check_square(z)
        out = self.p2(self.p1(z))
        return np.where(z.imag == 0, z.real + 0j, out)

    def inverse(self, w):
        w = _upper(w)
        out = self.p1_inverse(self.p2_inverse(w))
        # keep the result on the closed square
        out = np.clip(out.real, -1, 1) + 1j * np.clip(out.imag, 0, 2)
        return np.where(w.imag == 0, np.where(np.abs(w.real) <= 1, w.real + 0j, out), out)

    def jacobian(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        s, c, d = self.sn(self.K * z)
        return self.p2_jacobian(s) @ _cmul_matrix(self.K * c * d)

    def seam_distance(self, z) -> np.ndarray:
        # g' is singular at +-1, so the second derivatives of p2 blow up along
        # the lines x = +-1 and x +- y = +-1 of the intermediate plane
        z = np.asarray(z, dtype=complex)
        s, c, dn = self.sn(self.K * z)
        x, y = s.real, s.imag
        d = np.full(z.shape, np.inf)
        for e in (-1.0, 1.0):
            d = np.minimum(d, np.abs(x - e))
            d = np.minimum(d, np.abs(x + y - e) / math.sqrt(2))
            d = np.minimum(d, np.abs(x - y - e) / math.sqrt(2))
        with np.errstate(divide="ignore", invalid="ignore"):
            return d / np.abs(self.K * c * dn)

    def to_json(self) -> dict:
        return {**super().to_json(), "m": self.m, "r": self.r, "trace_error": self.trace_error}


def p_default_build(quad_nodes: int = 48, measure: int = 60) -> EllipticBAMap:
    return EllipticBAMap(quad_nodes=quad_nodes, measure=measure)


def p_fast_build(measure: int = 60) -> LogStretchMap:
    return LogStretchMap(measure=measure)
