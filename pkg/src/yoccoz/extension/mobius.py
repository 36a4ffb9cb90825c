"""The Möbius family ``zeta_a``, the piecewise Möbius map ``psi`` and its extension.

``zeta_a(z) = z / (a - (a-1) z)`` fixes 0 (attracting, multiplier ``1/a``) and
1 (repelling, multiplier ``a``).  ``psi`` glues two affine conjugates of
``zeta_a`` and ``zeta_b`` on ``[-1, s]`` and ``[s, 1]`` so that ``-1`` and ``1``
are repelling and ``s`` attracting.

Each branch extends to the half-disk over its interval.  A Möbius map ``L``
sends the half-disk to the first quadrant with the branch conjugated to
``w -> lam * w``; in logarithmic coordinates this is a translation by
``log lam`` on the bottom edge of the strip ``0 <= Im W <= pi/2``, and the
strip shear that fixes the top edge interpolates linearly.  The extension is
the identity outside the two half-disks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..errors import NodeMismatch, PoleProximity, SmallK

POLE_TOL = 1e-12


def _zeta_den(a, x):
    d = a - (a - 1) * x
    if isinstance(d, (Fraction, int)):
        bad = d <= 0
    else:
        bad = np.any(np.abs(d) < POLE_TOL)
    if bad:
        raise PoleProximity(f"zeta_{a} evaluated too close to its pole")
    return d


def zeta_eval(a, x):
    """``zeta_a(x)``; exact for ``Fraction`` inputs, elementwise for arrays."""
    return x / _zeta_den(a, x)


def zeta_derivative(a, x):
    return a / _zeta_den(a, x) ** 2


def zeta_inverse(a, y):
    return a * y / (1 + (a - 1) * y)


@dataclass(frozen=True)
class PropertyVerdict:
    a: Fraction
    x: Fraction
    eps: Fraction
    ratio: Fraction
    increment: Fraction
    ratio_ok: bool
    increment_ok: bool

    @property
    def passed(self) -> bool:
        return self.ratio_ok and self.increment_ok


def zeta_property_check(a, x, eps) -> PropertyVerdict:
    """Both two-sided derivative and increment bounds, in exact arithmetic."""
    a, x, eps = Fraction(a), Fraction(x), Fraction(eps)
    if eps <= 0 or x < 0 or x + eps > 1:
        raise ValueError("need eps > 0 and 0 <= x < x + eps <= 1")
    ratio = zeta_derivative(a, x + eps) / zeta_derivative(a, x)
    grow = (1 + eps * a) ** 2
    ratio_ok = 1 < ratio <= grow
    inc = zeta_eval(a, x + eps) - zeta_eval(a, x)
    lo = eps**3 * a / grow / (1 - x) ** 2
    hi = eps * grow / a / (1 - x) ** 2
    return PropertyVerdict(a, x, eps, ratio, inc, ratio_ok, lo <= inc <= hi)


@dataclass(frozen=True)
class StripShear:
    """Shear of the strip ``0 <= Im W <= pi/2``: shift ``log lam`` at the bottom, identity on top."""

    lam: float

    @property
    def shift(self) -> float:
        return math.log(self.lam)

    @property
    def coefficient(self) -> float:
        return 2 * self.shift / math.pi

    def __call__(self, W):
        return W + self.shift * (1 - 2 * np.imag(W) / math.pi)

    def inverse(self, W):
        return W - self.shift * (1 - 2 * np.imag(W) / math.pi)

    @property
    def jacobian(self) -> np.ndarray:
        return np.array([[1.0, -self.coefficient], [0.0, 1.0]])

    @property
    def dilatation(self) -> float:
        return shear_dilatation(self.lam)


def shear_dilatation(lam: float) -> float:
    c = abs(math.log(lam)) / math.pi
    r = math.sqrt(1 + c * c)
    return (r + c) / (r - c)


@dataclass(frozen=True)
class HalfDisk:
    """Half-disk over ``[left, right]`` with the chart ``(z - left)/(right - z)``.

    The chart sends the diameter to the positive reals and the bounding
    geodesic to the positive imaginary axis.
    """

    left: float
    right: float
    shear: StripShear

    @property
    def center(self) -> float:
        return (self.left + self.right) / 2

    @property
    def radius(self) -> float:
        return (self.right - self.left) / 2

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return (np.abs(z - self.center) < self.radius) & (z.imag >= 0)

    def chart(self, z):
        return (z - self.left) / (self.right - z)

    def chart_inverse(self, w):
        return (self.left + self.right * w) / (1 + w)

    def chart_derivative(self, z):
        return (self.right - self.left) / (self.right - z) ** 2

    def _conj(self, z, step):
        z = np.asarray(z, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            W = np.log(self.chart(z))
            out = self.chart_inverse(np.exp(step(W)))
        return out


class PiecewiseMobiusPsi:
    """``psi`` for a cell with ``k = a + b`` children and attracting point ``s``."""

    def __init__(self, k: int, s: float):
        if k <= 3:
            raise SmallK(f"psi needs k >= 4, got {k}")
        if not -1 < s < 1:
            raise ValueError("attracting point must lie in (-1, 1)")
        self.k = k
        self.a = k // 2
        self.b = k - self.a
        self.s = float(s)
        # chart of D_a sends -1 -> 0 and the branch to w -> a w; D_b sends s -> 0 and w -> w / b
        self.disk_a = HalfDisk(-1.0, self.s, StripShear(float(self.a)))
        self.disk_b = HalfDisk(self.s, 1.0, StripShear(1.0 / self.b))

    def __repr__(self):
        return f"PiecewiseMobiusPsi(k={self.k}, a={self.a}, b={self.b}, s={self.s:.6g})"

    # real line
    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        s, a, b = self.s, self.a, self.b
        left = s - (1 + s) * zeta_eval(a, np.clip((s - x) / (1 + s), 0, 1))
        right = s + (1 - s) * zeta_eval(b, np.clip((x - s) / (1 - s), 0, 1))
        out = np.where(x <= s, left, right)
        return np.where((x < -1) | (x > 1), x, out)

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        s, a, b = self.s, self.a, self.b
        left = s - (1 + s) * zeta_inverse(a, np.clip((s - y) / (1 + s), 0, 1))
        right = s + (1 - s) * zeta_inverse(b, np.clip((y - s) / (1 - s), 0, 1))
        out = np.where(y <= s, left, right)
        return np.where((y < -1) | (y > 1), y, out)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        s, a, b = self.s, self.a, self.b
        left = zeta_derivative(a, np.clip((s - x) / (1 + s), 0, 1))
        right = zeta_derivative(b, np.clip((x - s) / (1 - s), 0, 1))
        out = np.where(x <= s, left, right)
        return np.where((x < -1) | (x > 1), 1.0, out)

    # upper half-plane
    def _apply(self, z, forward: bool):
        z = np.asarray(z, dtype=complex)
        out = z.copy()
        for disk in (self.disk_a, self.disk_b):
            inside = disk.contains(z)
            if np.any(inside):
                step = disk.shear if forward else disk.shear.inverse
                out[inside] = disk._conj(z[inside], step)
        # on the line use the branch formulas, which stay finite at the disk endpoints
        line = z.imag == 0
        if np.any(line):
            x = z.real[line]
            out[line] = self(x) if forward else self.inverse(x)
        return out

    def extend(self, z):
        return self._apply(z, True)

    def extend_inverse(self, w):
        return self._apply(w, False)

    def extend_jacobian(self, z, inverse: bool = False) -> np.ndarray:
        """Real 2x2 Jacobians of the extension (or of its inverse) at ``z``, shape ``(..., 2, 2)``."""
        z = np.asarray(z, dtype=complex)
        J = np.zeros(z.shape + (2, 2))
        J[..., 0, 0] = J[..., 1, 1] = 1.0
        for disk in (self.disk_a, self.disk_b):
            inside = disk.contains(z)
            if not np.any(inside):
                continue
            zi = z[inside]
            step = disk.shear.inverse if inverse else disk.shear
            u = disk.chart(zi)
            W = np.log(u)
            W2 = step(W)
            u2 = np.exp(W2)
            w = disk.chart_inverse(u2)
            # d log u / dz and d z / d(exp W) at the image, both holomorphic
            d_in = disk.chart_derivative(zi) / u
            d_out = u2 / disk.chart_derivative(w)
            S = np.linalg.inv(disk.shear.jacobian) if inverse else disk.shear.jacobian
            J[inside] = _cmul_matrix(d_out) @ S @ _cmul_matrix(d_in)
        return J

    def dilatation(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        out = np.ones(z.shape)
        out[self.disk_a.contains(z)] = self.disk_a.shear.dilatation
        out[self.disk_b.contains(z)] = self.disk_b.shear.dilatation
        return out

    def seam_distance(self, z) -> np.ndarray:
        """Distance to the real axis and to the two geodesics bounding the half-disks."""
        z = np.asarray(z, dtype=complex)
        d = np.abs(z.imag)
        for disk in (self.disk_a, self.disk_b):
            d = np.minimum(d, np.abs(np.abs(z - disk.center) - disk.radius))
        return d

    def to_json(self) -> dict:
        return {
            "k": self.k, "a": self.a, "b": self.b, "s_a": self.s,
            "K_a": self.disk_a.shear.dilatation, "K_b": self.disk_b.shear.dilatation,
        }


def psi_build(k: int, s_a: float) -> PiecewiseMobiusPsi:
    return PiecewiseMobiusPsi(k, s_a)


def psi_extend(psi: PiecewiseMobiusPsi, z):
    return psi.extend(z)


def psi_extend_dilatation(psi: PiecewiseMobiusPsi, z):
    return psi.dilatation(z)


def _cmul_matrix(c) -> np.ndarray:
    """Real matrices of multiplication by complex ``c``."""
    c = np.asarray(c, dtype=complex)
    M = np.empty(c.shape + (2, 2))
    M[..., 0, 0] = c.real
    M[..., 0, 1] = -c.imag
    M[..., 1, 0] = c.imag
    M[..., 1, 1] = c.real
    return M


def dilatation_from_jacobian(J: np.ndarray) -> np.ndarray:
    """``sigma_max / sigma_min`` for a stack of real 2x2 Jacobians; rejects reversed orientation."""
    J = np.asarray(J, dtype=float)
    a, b, c, d = J[..., 0, 0], J[..., 0, 1], J[..., 1, 0], J[..., 1, 1]
    det = a * d - b * c
    if np.any(~(det > 0)):
        raise ValueError("Jacobian is not orientation preserving")
    fro = a * a + b * b + c * c + d * d
    # sigma_max/sigma_min + sigma_min/sigma_max = fro / det
    t = fro / det
    return (t + np.sqrt(np.maximum(t * t - 4, 0))) / 2


class PiecewiseAffine:
    """Increasing piecewise-affine map of the line with nodes ``x_j -> y_j``, identity outside."""

    def __init__(self, x, y):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.slopes = np.diff(self.y) / np.diff(self.x)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.where((t < self.x[0]) | (t > self.x[-1]), t, np.interp(t, self.x, self.y))

    def inverse(self, t):
        t = np.asarray(t, dtype=float)
        return np.where((t < self.y[0]) | (t > self.y[-1]), t, np.interp(t, self.y, self.x))

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        j = np.clip(np.searchsorted(self.x, t, side="right") - 1, 0, len(self.slopes) - 1)
        return np.where((t < self.x[0]) | (t > self.x[-1]), 1.0, self.slopes[j])


def node_distance(x, nodes) -> np.ndarray:
    """Distance from each ``x`` to the nearest entry of the sorted array ``nodes``."""
    x = np.asarray(x, dtype=float)
    if len(nodes) == 1:
        return np.abs(x - nodes[0])
    j = np.searchsorted(nodes, x).clip(1, len(nodes) - 1)
    return np.minimum(np.abs(x - nodes[j - 1]), np.abs(x - nodes[j]))


def _check_nodes(s, name):
    s = np.asarray(s, dtype=float)
    if s.ndim != 1 or len(s) < 2 or np.any(np.diff(s) <= 0):
        raise NodeMismatch(f"{name} nodes must be strictly increasing")
    if abs(s[0] + 1) > 1e-12 or abs(s[-1] - 1) > 1e-12:
        raise NodeMismatch(f"{name} nodes must run from -1 to 1")
    s = s.copy()
    s[0], s[-1] = -1.0, 1.0
    return s


class EtaCorrection:
    """``eta = psi o eta2 o eta1`` with ``eta1: s_j -> psi(s'_j)`` and ``eta2: psi(s'_j) -> s'_j``.

    ``psi`` may be ``None`` for the identity.  On the line ``eta`` agrees with
    ``psi`` composed with the affine interpolation ``s_j -> s'_j``; it is
    extended to the half-plane fiberwise, ``eta(x + iy) = eta(x) + iy``.
    """

    def __init__(self, s, s_prime, psi: PiecewiseMobiusPsi | None = None):
        s = _check_nodes(s, "source")
        sp = _check_nodes(s_prime, "target")
        if len(s) != len(sp):
            raise NodeMismatch(f"{len(s)} source nodes vs {len(sp)} target nodes")
        self.s, self.s_prime, self.psi = s, sp, psi
        mid = psi(sp) if psi is not None else sp.copy()
        self.psi_nodes = mid
        self.eta1 = PiecewiseAffine(s, mid)
        self.eta2 = PiecewiseAffine(mid, sp)
        self.affine = PiecewiseAffine(s, sp)

    def __call__(self, x):
        y = self.affine(x)
        return self.psi(y) if self.psi is not None else y

    def inverse(self, y):
        x = self.psi.inverse(y) if self.psi is not None else np.asarray(y, dtype=float)
        return self.affine.inverse(x)

    def derivative(self, x):
        d = self.affine.derivative(x)
        if self.psi is not None:
            d = d * self.psi.derivative(self.affine(x))
        return d

    def slope_table(self) -> np.ndarray:
        """Per-piece ``[min, max]`` of ``eta'``; ``psi'`` is monotone on each piece."""
        A = self.affine.slopes
        if self.psi is None:
            return np.stack([A, A], axis=1)
        dl = self.psi.derivative(self.s_prime[:-1] + 1e-15 * (self.s_prime[1:] - self.s_prime[:-1]))
        dr = self.psi.derivative(self.s_prime[1:] - 1e-15 * (self.s_prime[1:] - self.s_prime[:-1]))
        lo, hi = np.minimum(dl, dr), np.maximum(dl, dr)
        return np.stack([A * lo, A * hi], axis=1)

    def slope_band(self) -> tuple[float, float]:
        t = self.slope_table()
        return float(t[:, 0].min()), float(t[:, 1].max())

    def extend(self, z):
        z = np.asarray(z, dtype=complex)
        return self(z.real) + 1j * z.imag

    def extend_inverse(self, w):
        w = np.asarray(w, dtype=complex)
        return self.inverse(w.real) + 1j * w.imag

    def extend_jacobian(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        J = np.zeros(z.shape + (2, 2))
        J[..., 0, 0] = self.derivative(z.real)
        J[..., 1, 1] = 1.0
        return J

    def seam_distance(self, z) -> np.ndarray:
        """Distance to the vertical fibers over the nodes."""
        z = np.asarray(z, dtype=complex)
        return node_distance(z.real, self.s)


def eta_build(s, s_prime, psi: PiecewiseMobiusPsi | None = None) -> EtaCorrection:
    return EtaCorrection(s, s_prime, psi)


def eta_extend_dilatation(slope) -> np.ndarray:
    m = np.abs(np.asarray(slope, dtype=float))
    return np.maximum(m, 1 / m)
