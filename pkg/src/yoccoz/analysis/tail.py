"""Tail areas ``A(K) = Area{K_field >= K}`` and their exponential fits under a gauge."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import InsufficientTail
from .field import FieldSamples

Z95 = 1.96
GAUGES = ("david", "sd", "fd")
# late/early decay-rate ratio below which the gauge is judged too weak
FLAT_MIN = 0.85


@dataclass(frozen=True)
class TailEstimate:
    grid: np.ndarray
    A: np.ndarray
    radius: np.ndarray
    unresolved: float
    total_area: float
    direction: str

    @property
    def upper(self) -> np.ndarray:
        """Upper band: estimate plus confidence radius plus all unresolved area."""
        return self.A + self.radius + self.unresolved

    def to_json(self) -> dict:
        return {"grid": self.grid.tolist(), "A": self.A.tolist(), "radius": self.radius.tolist(),
                "unresolved": self.unresolved, "total_area": self.total_area,
                "direction": self.direction}


def default_grid(samples: FieldSamples, n: int = 80) -> np.ndarray:
    """Evenly spaced in ``K``, so an exponential tail is sampled evenly along its decay.

    A field with at most ``n`` distinct values uses those values: the tail is a
    step function and is represented exactly at its jumps.
    """
    u = np.unique(samples.K)
    if 1 < len(u) <= n:
        return u
    top = max(1.0 + 1e-9, float(samples.K.max()) if len(samples) else 1.0)
    return np.linspace(1.0, top, n)


def tail_area(samples: FieldSamples, grid=None) -> TailEstimate:
    """Weighted tail estimate with a cluster-linearized binomial radius per band."""
    if len(samples) == 0:
        raise InsufficientTail("no samples")
    grid = default_grid(samples) if grid is None else np.asarray(grid, dtype=float)
    hit = samples.K[None, :] >= grid[:, None]
    A = (hit * samples.weight[None, :]).sum(axis=1)
    var = np.zeros(len(grid))
    for n in np.unique(samples.level):
        m = samples.level == n
        w = samples.weight[m]
        band = w.sum()
        if band <= 0:
            continue
        cells, inv = np.unique(samples.cell[m], return_inverse=True)
        if np.any(np.bincount(inv, weights=w) <= 0):
            keep = w > 0
            m = m & (samples.weight > 0)
            w = w[keep]
            cells, inv = np.unique(samples.cell[m], return_inverse=True)
        u = np.bincount(inv, weights=w)  # cell weights
        with np.errstate(invalid="ignore", divide="ignore"):
            f = np.stack([np.bincount(inv, weights=w * h) for h in hit[:, m]]) / u  # per-cell hit fraction
        R = np.clip((f * u).sum(axis=1) / band, 0.0, 1.0)
        if len(cells) > 1 and np.all(u > 0):
            v = ((u / band * (f - R[:, None])) ** 2).sum(axis=1) * len(cells) / (len(cells) - 1)
        else:
            v = R * (1 - R) / max(1, m.sum())
        # never report a radius below the binomial floor for the band's point count
        v = np.maximum(v, R * (1 - R) / m.sum())
        var += band**2 * v
    if samples.meta.get("exact"):
        var[:] = 0.0
    A = np.minimum.accumulate(A)  # exact for indicator sums, enforced against rounding
    return TailEstimate(grid, A, Z95 * np.sqrt(var), samples.unresolved, samples.total_area,
                        samples.direction)


def gauge_inverse(gauge: str, K, v: Callable[[float], float] | None = None) -> np.ndarray:
    """The fit abscissa ``f^{-1}(K)`` for the gauge ``f``: identity, ``log`` or ``x v(x)``."""
    K = np.asarray(K, dtype=float)
    if gauge == "david":
        return K
    if gauge == "sd":
        with np.errstate(over="ignore"):
            return np.exp(K)
    if gauge == "fd":
        if v is None:
            raise ValueError("the finite-distortion gauge needs v")
        xs = np.geomspace(1e-6, max(2.0, float(K.max())) * 4, 6000)
        fx = xs * np.array([v(x) for x in xs])
        return np.interp(K, fx, xs)
    raise ValueError(f"unknown gauge {gauge!r}; expected one of {GAUGES}")


@dataclass(frozen=True)
class TailFit:
    gauge: str
    A: float
    alpha: float
    r2: float
    window: tuple[float, float]
    points: int
    alpha_early: float
    alpha_late: float

    @property
    def flattening(self) -> float:
        """Late-window over early-window decay rate; a true exponential gives about 1."""
        return self.alpha_late / self.alpha_early if self.alpha_early > 0 else 0.0

    def passes(self, flat_min: float = FLAT_MIN) -> bool:
        """An exponential upper bound is credible: positive decay that does not die out along the window."""
        return self.alpha > 0 and self.alpha_early > 0 and self.flattening >= flat_min

    def exponential(self, r2_min: float = 0.9) -> bool:
        """Positive decay and goodness of fit at least ``r2_min``."""
        return self.alpha > 0 and self.r2 >= r2_min

    def to_json(self) -> dict:
        return {"gauge": self.gauge, "A": self.A, "alpha": self.alpha, "r2": self.r2,
                "window": list(self.window), "points": self.points,
                "alpha_early": self.alpha_early, "alpha_late": self.alpha_late,
                "flattening": self.flattening}


def _wls(x, y, w):
    W = w.sum()
    xm, ym = (w * x).sum() / W, (w * y).sum() / W
    sxx = (w * (x - xm) ** 2).sum()
    if sxx <= 0:
        return 0.0, ym, 0.0
    b = (w * (x - xm) * (y - ym)).sum() / sxx
    a = ym - b * xm
    ss_res = (w * (y - a - b * x) ** 2).sum()
    ss_tot = (w * (y - ym) ** 2).sum()
    r2 = 1 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return b, a, r2


def window_start(est: TailEstimate, tail_share: float = 0.01) -> float:
    """Smallest grid value whose tail holds at most ``tail_share`` of the sampled area."""
    hit = np.flatnonzero(est.A <= tail_share * est.total_area)
    return float(est.grid[hit[0]]) if len(hit) else float(est.grid[-1])


def fit_tail(est: TailEstimate, gauge: str = "david", v: Callable[[float], float] | None = None,
             k_min: float | None = None, drop_top: float = 0.1, min_points: int = 5) -> TailFit:
    """Weighted least squares of ``log A`` against ``f^{-1}(K)``.

    The window starts at ``k_min`` (default: ``window_start``, which keeps the
    bulk of the field out of the fit) and drops the top ``drop_top`` fraction
    of the grid points that carry a nonzero estimate.
    """
    if k_min is None:
        k_min = window_start(est)
    keep = (est.A > 0) & (est.grid >= k_min)
    idx = np.flatnonzero(keep)
    if len(idx) == 0:
        raise InsufficientTail("no grid point with a nonzero estimate")
    idx = idx[: max(1, int(math.floor(len(idx) * (1 - drop_top))))]
    if len(idx) < min_points:
        raise InsufficientTail(f"only {len(idx)} grid points in the fit window")
    K = est.grid[idx]
    with np.errstate(over="ignore"):
        x = gauge_inverse(gauge, K, v)
    if not np.all(np.isfinite(x)):
        raise InsufficientTail("gauge abscissa overflows on the fit window")
    y = np.log(est.A[idx])
    rel = est.radius[idx] / est.A[idx]
    w = 1.0 / np.maximum(rel, 1e-3) ** 2
    b, a, r2 = _wls(x, y, w)
    # decay rates on the first and last thirds of the window
    h = max(2, len(idx) // 3)
    be = _wls(x[:h], y[:h], w[:h])[0]
    bl = _wls(x[-h:], y[-h:], w[-h:])[0]
    return TailFit(gauge, math.exp(a), -b, r2, (float(K[0]), float(K[-1])), len(idx), -be, -bl)


def gauge_verdict(est: TailEstimate, gauge: str, v: Callable[[float], float] | None = None,
                  flat_min: float = FLAT_MIN, **kw) -> dict:
    """Fit under ``gauge`` and say whether an exponential bound in the gauge variable is credible."""
    try:
        fit = fit_tail(est, gauge, v, **kw)
    except InsufficientTail as exc:
        return {"gauge": gauge, "passed": False, "reason": str(exc), "fit": None}
    return {"gauge": gauge, "passed": bool(fit.passes(flat_min)), "reason": "", "fit": fit.to_json()}


def level_quantiles(samples: FieldSamples, q: float = 0.99) -> np.ndarray:
    """Weighted ``q``-quantile of K on each level (nan where a level has no samples)."""
    out = np.full(samples.depth + 1, np.nan)
    for n in range(samples.depth + 1):
        m = samples.level == n
        if not np.any(m):
            continue
        order = np.argsort(samples.K[m])
        K, w = samples.K[m][order], samples.weight[m][order]
        c = np.cumsum(w)
        out[n] = K[min(np.searchsorted(c, q * c[-1]), len(K) - 1)] if c[-1] > 0 else K[-1]
    return out


def bounded_verdict(samples: FieldSamples, growth: float = 2.0, q: float = 0.99) -> dict:
    """Bounded dilatation: the per-level ``q``-quantiles of the deeper half stay within ``growth`` of the shallower half.

    Quantiles rather than maxima, so that a single near-seam point cannot decide the verdict.
    """
    km = samples.level_kmax()
    kq = level_quantiles(samples, q)
    keep = np.isfinite(kq)
    km, kq = km[keep], kq[keep]
    if len(kq) < 2:
        return {"bounded": True, "K_max": float(km.max()) if len(km) else 1.0, "growth": 1.0}
    h = len(kq) // 2
    ratio = kq[h:].max() / kq[:h].max()
    return {"bounded": bool(ratio <= growth), "K_max": float(km.max()), "growth": float(ratio),
            "per_level": km.tolist(), "per_level_quantile": kq.tolist()}


# ------------------------------------------------------------- synthetic fields

def synthetic_square_field(K_of_xy: Callable, m: int, seed: int = 0, direction: str = "fwd") -> FieldSamples:
    """Uniform samples of a closed-form field on the unit square, one cell per point."""
    rng = np.random.default_rng(seed)
    x, y = rng.random(m), 1.0 - rng.random(m)  # y in (0, 1]
    K = np.asarray(K_of_xy(x, y), dtype=float)
    return FieldSamples(x + 1j * y, np.zeros(m, dtype=int), K, np.full(m, 1.0 / m), np.arange(m),
                        direction, 0, np.array([1.0]), 0.0)


def synthetic_level_field(terms, sigma: float = 0.25, lam: float = 0.2, depth: int | None = None,
                          direction: str = "fwd") -> FieldSamples:
    """Deterministic field with ``K = max(1, log^2 a_{n+1})`` on a fraction ``lam`` of band ``n``.

    Band ``n`` has area ``(1 - sigma) sigma^n``; the rest of the band has ``K = 1``.
    Each band is represented by two exactly weighted atoms.
    """
    terms = list(terms)
    N = len(terms) - 1 if depth is None else min(depth, len(terms) - 1)
    n = np.arange(N + 1)
    bands = (1 - sigma) * sigma**n
    # a_{n+1} is terms[n]
    Kn = np.maximum(1.0, np.array([math.log(terms[j]) ** 2 for j in n]))
    K = np.concatenate([Kn, np.ones(N + 1)])
    w = np.concatenate([lam * bands, (1 - lam) * bands])
    level = np.concatenate([n, n])
    return FieldSamples(np.zeros(2 * (N + 1), dtype=complex), level, K, w, np.arange(2 * (N + 1)),
                        direction, N, bands, float(sigma ** (N + 1)), meta={"exact": True})
