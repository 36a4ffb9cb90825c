"""Critical circle maps of the sine family and their dynamical partitions.

The lift ``F_t(x) = x + t - sin(2 pi x) / (2 pi)`` has a cubic critical point at
every integer.  Backward orbits are computed with bracketed root finding (no
Newton steps, the derivative vanishes at the critical point) in mpmath.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.optimize import brentq

from .cf_arith import ContinuedFraction
from .errors import (
    InvariantViolation,
    PrecisionExhausted,
    RootBracketFailure,
    TuneDepthUnreachable,
)
from .rotation_side import partition_rotation


def _as_cf(cf) -> ContinuedFraction:
    return cf if isinstance(cf, ContinuedFraction) else ContinuedFraction.from_terms(cf)


@dataclass(frozen=True)
class CriticalMap:
    t: object  # mpf
    prec: int = 256

    def __post_init__(self):
        with mpmath.workprec(self.prec):
            object.__setattr__(self, "t", mpmath.mpf(self.t))

    def evaluate(self, x):
        with mpmath.workprec(self.prec):
            x = mpmath.mpf(x)
            return x + self.t - mpmath.sin(2 * mpmath.pi * x) / (2 * mpmath.pi)

    def derivative(self, x):
        with mpmath.workprec(self.prec):
            return 1 - mpmath.cos(2 * mpmath.pi * mpmath.mpf(x))

    def iterate(self, x, m: int) -> list:
        """Forward lift orbit ``[F^0(x), ..., F^m(x)]``."""
        with mpmath.workprec(self.prec):
            out = [mpmath.mpf(x)]
            two_pi = 2 * mpmath.pi
            for _ in range(m):
                y = out[-1]
                out.append(y + self.t - mpmath.sin(two_pi * y) / two_pi)
            return out

    def inverse_step(self, x, tol=None):
        """Solve ``F(y) = x`` for ``y``; the root is unique since F is increasing."""
        with mpmath.workprec(self.prec):
            x = mpmath.mpf(x)
            tol = tol if tol is not None else mpmath.mpf(2) ** (-(self.prec // 2))
            w = 1 / (2 * mpmath.pi)
            a, b = x - self.t - w, x - self.t + w
            ga, gb = self.evaluate(a) - x, self.evaluate(b) - x
            if ga > 0 or gb < 0:
                raise RootBracketFailure(f"no sign change on [{a}, {b}]")
            if ga == 0:
                return a
            if gb == 0:
                return b
            # float warm start narrows the bracket before the high-precision solve
            xf, tf = float(x), float(self.t)
            y0 = brentq(lambda s: s + tf - math.sin(2 * math.pi * s) / (2 * math.pi) - xf,
                        float(a), float(b), xtol=1e-15)
            d = mpmath.mpf(1e-9) * max(1.0, abs(y0))
            a2, b2 = mpmath.mpf(y0) - d, mpmath.mpf(y0) + d
            if a2 > a and b2 < b and self.evaluate(a2) < x < self.evaluate(b2):
                a, b = a2, b2
            try:
                y = mpmath.findroot(lambda s: self.evaluate(s) - x, (a, b),
                                    solver="secant", tol=tol**2, maxsteps=50)
            except (ValueError, ZeroDivisionError):
                y = None
            if y is None or not (a <= y <= b) or abs(self.evaluate(y) - x) > tol:
                y = _bisect(lambda s: self.evaluate(s) - x, a, b, tol)
            return y


def _bisect(g, a, b, tol):
    for _ in range(4 * mpmath.mp.prec):
        m = (a + b) / 2
        if g(m) < 0:
            a = m
        else:
            b = m
        if b - a < tol:
            break
    return (a + b) / 2


def _inverse_radius(fmap: CriticalMap, y, r):
    """Bound on how far ``F^{-1}`` can move when its argument moves by ``r``."""
    with mpmath.workprec(fmap.prec):
        # F(y+h) - F(y) >= h - sin(pi h)/pi >= pi^2 h^3 / 6 - pi^4 h^5 / 120
        h = mpmath.cbrt(6 * r / mpmath.pi**2) * 2
        lo, hi = y - h, y + h
        if mpmath.floor(lo) == mpmath.floor(hi) and mpmath.floor(hi) != hi:
            k = mpmath.nint(y)
            dist = min(abs(lo - k), abs(hi - k))
            dmin = 1 - mpmath.cos(2 * mpmath.pi * dist)
            if dmin > 0:
                h = min(h, r / dmin)
        return h


def inverse_orbit(fmap: CriticalMap, x0, j: int, with_radius: bool = False):
    """Lift points ``[F^0(x0), F^{-1}(x0), ..., F^{-j}(x0)]``."""
    with mpmath.workprec(fmap.prec):
        tol = mpmath.mpf(2) ** (-(fmap.prec // 2))
        out = [mpmath.mpf(x0)]
        rads = [mpmath.mpf(0)]
        for _ in range(j):
            y = fmap.inverse_step(out[-1], tol)
            out.append(y)
            if with_radius:
                rads.append(_inverse_radius(fmap, y, rads[-1]) + tol if rads[-1] > 0 else tol)
        return (out, rads) if with_radius else out


def rotation_number_estimate(fmap: CriticalMap, m: int) -> tuple[float, float]:
    """Interval ``[(F^m(0) - 1)/m, (F^m(0) + 1)/m]`` containing the rotation number."""
    if m < 1:
        raise ValueError("m must be >= 1")
    x = fmap.iterate(0, m)[-1]
    with mpmath.workprec(fmap.prec):
        return float((x - 1) / m), float((x + 1) / m)


@dataclass(frozen=True)
class TuneResult:
    t: object
    depth: int
    bracket: tuple[object, object]
    steps: int


def _float_orbit(t: float, m: int) -> list[float]:
    out = [0.0]
    x = 0.0
    two_pi = 2 * math.pi
    for _ in range(m):
        x = x + t - math.sin(two_pi * x) / two_pi
        out.append(x)
    return out


def _side_report(fmap: CriticalMap, cf: ContinuedFraction, M_max: int, margin: float = 1e-7) -> int:
    """Return +1 if the rotation number is too small, -1 if too large, 0 if locked.

    A float orbit decides every comparison whose margin exceeds ``margin``; the
    rest are redone at full precision.
    """
    fast = _float_orbit(float(fmap.t), cf.q(M_max))
    orbit = None
    for M in range(1, M_max + 1):
        p, q = cf.p(M), cf.q(M)
        val = fast[q] - p
        if abs(val) <= margin:
            if orbit is None:
                orbit = fmap.iterate(0, cf.q(M_max))
            val = orbit[q] - p
        if M % 2 == 0 and val <= 0:  # need rho > p/q
            return +1
        if M % 2 == 1 and val >= 0:  # need rho < p/q
            return -1
    return 0


def tune_parameter(cf, depth: int, prec: int = 256, extra: int = 2) -> TuneResult:
    """Bisect ``t`` until ``rho(f_t)`` lies on the correct side of every ``p_M/q_M``.

    Convergents up to ``M = depth + 2 + extra`` are used when available.  The
    extra levels keep the result away from the boundary tongue at
    ``p_{depth+2}/q_{depth+2}``, where a sign test alone only gives ``rho >= p/q``.
    """
    cf = _as_cf(cf)
    if len(cf) < depth + 2:
        raise ValueError(f"need {depth + 2} partial quotients for depth {depth}")
    M_max = depth + 2
    while M_max < min(len(cf), depth + 2 + extra) and cf.q(M_max + 1) <= max(cf.q(depth + 2), 10**4):
        M_max += 1
    with mpmath.workprec(prec):
        lo, hi = mpmath.mpf(0), mpmath.mpf(1)
        eps = mpmath.mpf(2) ** (-(prec - 8))
        steps = 0
        while hi - lo > eps:
            mid = (lo + hi) / 2
            steps += 1
            side = _side_report(CriticalMap(mid, prec), cf, M_max) if M_max > 0 else 0
            if side == 0:
                return TuneResult(mid, depth, (lo, hi), steps)
            if side > 0:
                lo = mid
            else:
                hi = mid
    raise TuneDepthUnreachable(f"bisection width reached 2^-{prec - 8} before locking depth {depth}")


@dataclass(frozen=True)
class CriticalPartition:
    """Sorted points ``F^{-j}(0) mod 1`` for ``j < q_n`` (Q) and ``j < q_n + q_{n-1}`` (P)."""

    level: int
    points: tuple = field(repr=False)  # mpf in [0, 1)
    orbit_index: tuple[int, ...] = field(repr=False)
    radius: tuple = field(repr=False)
    kinds: tuple[str, ...] = field(repr=False)
    p_points: tuple = field(repr=False)
    p_orbit_index: tuple[int, ...] = field(repr=False)

    def lengths(self) -> np.ndarray:
        pts = [float(p) for p in self.points] + [1.0 + float(self.points[0])]
        return np.diff(np.array(pts))

    def mp_lengths(self) -> list:
        pts = list(self.points) + [1 + self.points[0]]
        return [b - a for a, b in zip(pts, pts[1:])]

    def __len__(self) -> int:
        return len(self.points)


class OrbitCache:
    """Backward orbit of 0 shared across levels."""

    def __init__(self, fmap: CriticalMap):
        self.fmap = fmap
        self.lift = [mpmath.mpf(0)]
        self.radius = [mpmath.mpf(0)]

    def extend(self, j: int):
        with mpmath.workprec(self.fmap.prec):
            tol = mpmath.mpf(2) ** (-(self.fmap.prec // 2))
            while len(self.lift) <= j:
                y = self.fmap.inverse_step(self.lift[-1], tol)
                r = self.radius[-1]
                self.radius.append((_inverse_radius(self.fmap, y, r) if r > 0 else 0) + tol)
                self.lift.append(y)
        return self


def _sorted_mod1(lift, count):
    with mpmath.workprec(mpmath.mp.prec):
        pts = [(x - mpmath.floor(x), j) for j, x in enumerate(lift[:count])]
    pts.sort(key=lambda pj: pj[0])
    return pts


def partition_critical(fmap: CriticalMap, cf, n: int, cache: OrbitCache | None = None) -> CriticalPartition:
    cf = _as_cf(cf)
    q, q_prev = cf.q(n), cf.q(n - 1) if n >= 1 else 0
    cache = cache or OrbitCache(fmap)
    cache.extend(q + q_prev)
    with mpmath.workprec(fmap.prec):
        Q = _sorted_mod1(cache.lift, q)
        P = _sorted_mod1(cache.lift, q + q_prev)
        gaps = [b[0] - a[0] for a, b in zip(Q, Q[1:])] + [1 + Q[0][0] - Q[-1][0]]
        rmax = max(cache.radius[: q + q_prev])
        if min(gaps) <= 10 * rmax:
            raise PrecisionExhausted(f"level {n}: radius {rmax} vs gap {min(gaps)}")
    rot = partition_rotation(cf, n)
    order = tuple(j for _, j in Q)
    if order != rot.orbit_index:
        raise InvariantViolation(f"level {n}: critical order differs from rotation order")
    return CriticalPartition(n, tuple(x for x, _ in Q), order,
                             tuple(cache.radius[j] for j in order), rot.kinds,
                             tuple(x for x, _ in P), tuple(j for _, j in P))


@dataclass(frozen=True)
class AprioriReport:
    levels: tuple[int, ...]
    adjacent_max: tuple[float, ...]
    max_length: tuple[float, ...]
    return_length: tuple[float, ...]  # |I_n| = |F^{-q_n}(0) + p_n|
    sigma_hat: float
    eps_hat: float
    c_adj: float
    passed: bool


def _adjacent_max(lengths: np.ndarray) -> float:
    nxt = np.roll(lengths, -1)
    r = np.maximum(lengths / nxt, nxt / lengths)
    return float(r.max()) if len(lengths) > 1 else 1.0


def verify_apriori(fmap: CriticalMap, cf, n_max: int, growth_factor: float = 2.0,
                   cache: OrbitCache | None = None) -> AprioriReport:
    """Adjacent ratios per level and slopes of ``log max|I|`` and ``log |I_n|`` in ``n``."""
    cf = _as_cf(cf)
    cache = cache or OrbitCache(fmap)
    levels, adj, mx, ret = [], [], [], []
    for n in range(1, n_max + 1):
        part = partition_critical(fmap, cf, n, cache)
        L = part.lengths()
        levels.append(n)
        adj.append(_adjacent_max(L))
        mx.append(float(L.max()))
        cache.extend(cf.q(n))
        ret.append(abs(float(cache.lift[cf.q(n)] + cf.p(n))))
    lv = np.array(levels, dtype=float)
    if len(lv) >= 2:
        sigma_hat = float(np.exp(np.polyfit(lv, np.log(mx), 1)[0]))
        eps_hat = float(np.exp(np.polyfit(lv, np.log(ret), 1)[0]))
    else:
        sigma_hat = eps_hat = float("nan")
    c_adj = max(adj) if adj else 1.0
    passed = True
    if len(adj) >= 4:
        half = len(adj) // 2
        early, late = max(adj[:half]), max(adj[half:])
        passed = late <= growth_factor * early
    return AprioriReport(tuple(levels), tuple(adj), tuple(mx), tuple(ret),
                         sigma_hat, eps_hat, c_adj, passed)


@dataclass(frozen=True)
class ParabolicReport:
    level: int
    ratios: tuple[tuple[float, ...], ...]  # per parent, r_1..r_k
    band: tuple[float, float]
    c_hat: float
    passed: bool


def normalized_gaps(points: list, total) -> list[float]:
    """``r_j = gap_j * min(j, k+1-j)^2 / total`` for one parent interval."""
    k = len(points) - 1
    out = []
    for j in range(1, k + 1):
        g = points[j] - points[j - 1]
        out.append(float(g * min(j, k + 1 - j) ** 2 / total))
    return out


def verify_almost_parabolic(fmap: CriticalMap, cf, n: int, C: float = 10.0,
                            cache: OrbitCache | None = None) -> ParabolicReport:
    cf = _as_cf(cf)
    cache = cache or OrbitCache(fmap)
    par = partition_critical(fmap, cf, n, cache)
    child = partition_critical(fmap, cf, n + 1, cache)
    cpts = list(child.points) + [1 + child.points[0]]
    with mpmath.workprec(fmap.prec):
        ends = list(par.points) + [1 + par.points[0]]
        ratios = []
        ci = 0
        for i in range(len(par)):
            a, b = ends[i], ends[i + 1]
            while cpts[ci] != a:
                ci += 1
            sub = [cpts[ci]]
            ci2 = ci + 1
            while cpts[ci2] != b:
                sub.append(cpts[ci2])
                ci2 += 1
            sub.append(b)
            ratios.append(tuple(normalized_gaps(sub, b - a)))
            ci = ci2 if ci2 < len(child) else 0
    flat = [r for rs in ratios for r in rs]
    lo, hi = min(flat), max(flat)
    c_hat = max(hi, 1 / lo)
    return ParabolicReport(n, tuple(ratios), (lo, hi), float(c_hat), bool(c_hat <= C))
