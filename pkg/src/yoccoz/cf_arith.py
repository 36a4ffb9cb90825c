"""Continued fractions of rotation numbers and their arithmetic classes.

All integer arithmetic is exact (Python ints / ``Fraction``); a rotation
number is only ever handled as a rational interval known to contain it.
Indexing follows ``theta = [a_1, a_2, ...]`` with ``p_0/q_0 = 0/1`` and
``p_{-1}/q_{-1} = 1/0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import mpmath
import numpy as np

from .errors import GaugeInvalid, InvariantViolation, PrecisionExhausted

CLASS_IDS = ("BT", "PZ", "PZ_eps", "A", "SD", "SD_inv", "FD", "FD_inv")


@dataclass(frozen=True)
class ThetaInterval:
    """Closed rational interval ``[lo, hi]``."""

    lo: Fraction
    hi: Fraction

    @property
    def mid(self) -> Fraction:
        return (self.lo + self.hi) / 2

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    def __contains__(self, x) -> bool:
        return self.lo <= Fraction(x) <= self.hi

    def to_mpf(self, prec: int = 256):
        with mpmath.workprec(prec):
            return mpmath.mpf(self.mid.numerator) / self.mid.denominator


def convergents(terms: Sequence[int]) -> list[tuple[int, int]]:
    """Exact convergents ``(p_k, q_k)`` for ``k = 1..N``."""
    if len(terms) == 0:
        raise ValueError("need at least one partial quotient")
    p_prev, q_prev = 1, 0
    p, q = 0, 1
    out = []
    for a in terms:
        a = int(a)
        if a < 1:
            raise ValueError(f"partial quotients must be >= 1, got {a}")
        p, p_prev = a * p + p_prev, p
        q, q_prev = a * q + q_prev, q
        out.append((p, q))
    return out


def _cylinder(terms: Sequence[int]) -> ThetaInterval:
    # Irrationals with prefix terms lie between [a_1..a_N] and [a_1..a_N + 1].
    conv = convergents(terms)
    p, q = conv[-1]
    p_prev, q_prev = conv[-2] if len(conv) > 1 else (0, 1)
    x = Fraction(p, q)
    y = Fraction(p + p_prev, q + q_prev)
    return ThetaInterval(min(x, y), max(x, y))


@dataclass(frozen=True)
class ContinuedFraction:
    terms: tuple[int, ...]
    convergents: tuple[tuple[int, int], ...] = field(repr=False)
    value_bounds: ThetaInterval = field(repr=False)

    @classmethod
    def from_terms(cls, terms: Sequence[int]) -> "ContinuedFraction":
        terms = tuple(int(a) for a in terms)
        return cls(terms, tuple(convergents(terms)), _cylinder(terms))

    def __len__(self) -> int:
        return len(self.terms)

    def a(self, n: int) -> int:
        """Partial quotient ``a_n`` (1-based)."""
        return self.terms[n - 1]

    def q(self, n: int) -> int:
        """Denominator ``q_n`` with ``q_0 = 1`` and ``q_{-1} = 0``."""
        if n == 0:
            return 1
        if n == -1:
            return 0
        return self.convergents[n - 1][1]

    def p(self, n: int) -> int:
        if n == 0:
            return 0
        if n == -1:
            return 1
        return self.convergents[n - 1][0]


def _to_interval(x) -> tuple[Fraction, Fraction]:
    if isinstance(x, ThetaInterval):
        return x.lo, x.hi
    if isinstance(x, tuple) and len(x) == 2:
        return Fraction(x[0]), Fraction(x[1])
    if isinstance(x, (Fraction, int)):
        return Fraction(x), Fraction(x)
    if isinstance(x, str):
        # A decimal literal is taken to be exact to half a unit in its last place.
        s = x.strip()
        digits = len(s.split(".")[1]) if "." in s else 0
        centre = Fraction(s)
        half = Fraction(1, 2 * 10**digits)
        return centre - half, centre + half
    if isinstance(x, mpmath.ctx_iv.ivmpf):
        return _mpf_to_fraction(x.a), _mpf_to_fraction(x.b)
    if isinstance(x, mpmath.mpf):
        f = _mpf_to_fraction(x)
        rad = abs(f) * Fraction(1, 2 ** (mpmath.mp.prec - 1))
        return f - rad, f + rad
    if isinstance(x, float):
        f = Fraction(x)
        rad = abs(f) * Fraction(1, 2**52)
        return f - rad, f + rad
    raise TypeError(f"cannot interpret {type(x).__name__} as a real interval")


def _mpf_to_fraction(v) -> Fraction:
    man, exp = mpmath.mpf(v).man_exp
    return Fraction(int(man)) * (Fraction(2) ** int(exp))


def cf_expand(x, n: int) -> ContinuedFraction:
    """First ``n`` partial quotients of ``x`` in (0, 1).

    ``x`` may be a ``Fraction`` (exact), a ``(lo, hi)`` pair, a decimal string
    (exact to half an ulp), an ``mpf`` (exact to the working precision) or an
    mpmath interval.  Raises ``PrecisionExhausted`` when the interval straddles
    a term boundary before ``n`` terms are determined.
    """
    lo, hi = _to_interval(x)
    if not (0 < lo <= hi < 1):
        raise ValueError(f"need an interval inside (0, 1), got [{float(lo)}, {float(hi)}]")
    terms = []
    for i in range(n):
        if lo == 0 or hi == 0:
            raise PrecisionExhausted(f"expansion terminates after {i} terms")
        # x -> 1/x reverses order
        r_lo, r_hi = 1 / hi, 1 / lo
        a_lo, a_hi = math.floor(r_lo), math.floor(r_hi)
        if a_lo != a_hi or (r_lo != r_hi and r_lo == a_lo):
            raise PrecisionExhausted(
                f"term {i + 1} undetermined: 1/x spans [{float(r_lo)}, {float(r_hi)}]"
            )
        terms.append(a_lo)
        lo, hi = r_lo - a_lo, r_hi - a_lo
    cf = ContinuedFraction.from_terms(terms)
    # returned terms must reproduce x within 1/q_n^2
    p, q = cf.convergents[-1]
    x_lo, x_hi = _to_interval(x)
    bound = Fraction(1, q * q)
    if abs(Fraction(p, q) - x_lo) > bound and abs(Fraction(p, q) - x_hi) > bound:
        raise InvariantViolation("convergent error bound violated")
    return cf


def theta_from_cf(cf: ContinuedFraction | Sequence[int], precision: int = 256) -> ThetaInterval:
    """Rational interval containing every theta with the given initial quotients.

    Endpoints are rounded outward to multiples of ``2**-precision``.
    """
    if not isinstance(cf, ContinuedFraction):
        cf = ContinuedFraction.from_terms(cf)
    box = cf.value_bounds
    scale = 2**precision
    lo = Fraction(math.floor(box.lo * scale), scale)
    hi = Fraction(math.ceil(box.hi * scale), scale)
    lo = max(lo, Fraction(0))
    hi = min(hi, Fraction(1))
    if lo >= hi:
        raise PrecisionExhausted("precision too small to separate the cylinder")
    return ThetaInterval(lo, hi)


def _fib(n: int) -> int:
    a, b = 1, 1  # F_0 = F_1 = 1
    for _ in range(n):
        a, b = b, a + b
    return a


def adapted_sequence_b(cf: ContinuedFraction | Sequence[int]) -> list[Fraction]:
    """Sequence ``b_k``: ``a_k`` off runs of ones, ``F_l / F_{l-1}`` on them."""
    terms = cf.terms if isinstance(cf, ContinuedFraction) else tuple(cf)
    out = []
    run = 0
    for a in terms:
        if a != 1:
            run = 0
            out.append(Fraction(a))
        else:
            run += 1
            out.append(Fraction(_fib(run), _fib(run - 1)))
    return out


@dataclass(frozen=True)
class QnBoundRow:
    n: int
    prod_b: Fraction
    q: int
    prod_a1: int

    @property
    def lower_tightness(self) -> float:
        return float(self.prod_b / self.q)

    @property
    def upper_tightness(self) -> float:
        return self.q / self.prod_a1


def check_qn_bounds(cf: ContinuedFraction | Sequence[int]) -> list[QnBoundRow]:
    """Check ``prod b_k <= q_n <= prod (a_k + 1)`` at every ``n``."""
    if not isinstance(cf, ContinuedFraction):
        cf = ContinuedFraction.from_terms(cf)
    rows = []
    pb = Fraction(1)
    pa = 1
    for n, (a, b) in enumerate(zip(cf.terms, adapted_sequence_b(cf)), start=1):
        pb *= b
        pa *= a + 1
        q = cf.q(n)
        if not (pb <= q <= pa):
            raise InvariantViolation(f"q_n bounds fail at n={n}: {pb} <= {q} <= {pa}")
        rows.append(QnBoundRow(n, pb, q, pa))
    return rows


def check_recurrences(cf: ContinuedFraction) -> None:
    """Exact recurrence and determinant identities; raises on failure."""
    p2, q2 = 1, 0
    p1, q1 = 0, 1
    for k, (a, (p, q)) in enumerate(zip(cf.terms, cf.convergents), start=1):
        if q != a * q1 + q2 or p != a * p1 + p2:
            raise InvariantViolation(f"recurrence fails at k={k}")
        if p * q1 - p1 * q != (-1) ** (k + 1):
            raise InvariantViolation(f"determinant identity fails at k={k}")
        if math.gcd(p, q) != 1:
            raise InvariantViolation(f"convergent {k} not in lowest terms")
        p2, q2, p1, q1 = p1, q1, p, q


@dataclass(frozen=True)
class ClassStatistic:
    """Finite-data sup of the ratio defining an arithmetic class.

    ``series`` holds the per-index ratio; ``trend`` is its least-squares slope
    over the trailing window.  Class membership is asymptotic, so any verdict
    drawn from these numbers is heuristic.
    """

    class_id: str
    statistic: float
    witness_index: int
    series: tuple[float, ...] = field(repr=False, default=())
    trend: float = 0.0


def _log(a: int) -> float:
    # exact-enough log for huge ints
    return math.log(a) if a < 2**1000 else float(mpmath.log(a))


def check_gauge(v: Callable[[float], float], n_max: int) -> None:
    xs = np.arange(1, max(n_max, 3) + 1, dtype=float)
    vals = np.array([v(x) for x in xs])
    if np.any(vals <= 0):
        raise GaugeInvalid("gauge must be positive")
    d1 = np.diff(vals)
    if np.any(d1 < -1e-12 * np.abs(vals[1:])):
        raise GaugeInvalid("gauge must be non-decreasing")
    d2 = np.diff(vals, 2)
    if np.any(d2 > 1e-9 * np.abs(vals[2:])):
        raise GaugeInvalid("gauge fails concavity on sampled points")


def class_ratios(terms: Sequence[int], class_id: str, eps: float = 0.0,
                 v: Callable[[float], float] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-index ratios for ``class_id``; returns ``(indices, ratios)``."""
    terms = [int(a) for a in terms]
    N = len(terms)
    logs = np.array([_log(a) for a in terms])
    cum = np.cumsum([_log(a + 1) for a in terms])  # sum_{k<=n} log(a_k+1)
    n = np.arange(1, N + 1, dtype=float)
    if class_id == "BT":
        return n, np.array(terms, dtype=float)
    if class_id == "PZ":
        return n, logs / np.sqrt(n)
    if class_id == "PZ_eps":
        return n, logs / n ** (0.5 + eps)
    if class_id == "A":
        # log^2 a_{n+1} / sum_{k<=n} log(a_k + 1), n = 1..N-1
        return n[1:], logs[1:] ** 2 / cum[:-1]
    if class_id == "SD":
        return n[1:], logs[1:] / np.sqrt(np.log(n[1:]))
    if class_id == "SD_inv":
        # log^2 a_{n+1} / log sum_{k<=n+1} log(a_k+1); witness is n+1
        return n[1:], logs[1:] ** 2 / np.log(cum[1:])
    if class_id in ("FD", "FD_inv"):
        if v is None:
            raise GaugeInvalid("finite-distortion classes need a gauge v")
        if class_id == "FD":
            check_gauge(v, N)
            return n, logs**2 / (n * np.array([v(x) for x in n]))
        check_gauge(v, int(math.ceil(cum[-1])) + 1)
        s = cum[1:]
        return n[1:], logs[1:] ** 2 / (s * np.array([v(x) for x in s]))
    raise ValueError(f"unknown class {class_id!r}; expected one of {CLASS_IDS}")


def classify(cf: ContinuedFraction | Sequence[int], class_id: str, eps: float = 0.0,
             v: Callable[[float], float] | None = None, window: int | None = None) -> ClassStatistic:
    terms = cf.terms if isinstance(cf, ContinuedFraction) else tuple(cf)
    idx, ratios = class_ratios(terms, class_id, eps=eps, v=v)
    if len(ratios) == 0:
        return ClassStatistic(class_id, 0.0, 0)
    j = int(np.argmax(ratios))
    w = len(ratios) if window is None else max(2, min(window, len(ratios)))
    tail_n, tail_r = idx[-w:], ratios[-w:]
    trend = float(np.polyfit(tail_n, tail_r, 1)[0]) if len(tail_r) >= 2 else 0.0
    return ClassStatistic(class_id, float(ratios[j]), int(idx[j]),
                          tuple(float(r) for r in ratios), trend)


def _floor_exp(x: float) -> int:
    """``floor(e**x)`` exactly for moderate ``x``."""
    if x < 30:
        return max(1, math.floor(math.exp(x)))
    with mpmath.workdps(int(x / 2.3) + 30):
        return int(mpmath.floor(mpmath.exp(mpmath.mpf(x))))


def _is_square(n: int) -> bool:
    r = math.isqrt(n)
    return r * r == n


def generate_sequence(kind: str, N: int, c: int = 1, eps: float = 0.0,
                      spike_index: int = 5, spike: int = 50) -> list[int]:
    """Deterministic partial-quotient sequences used throughout the experiments.

    kinds: ``constant`` (all ``c``), ``stretched-exp`` (``floor(e^{n^{1/2+eps}})``),
    ``square-spikes`` (``floor(e^{sqrt(n log n)})`` at perfect squares, else 1),
    ``square-spikes-eps`` (``floor(e^{n^{1/2+eps}})`` at perfect squares, else 1),
    ``spike`` (ones with ``a_{spike_index} = spike``), ``sd`` (``floor(e^{sqrt(log n)})``),
    ``fd-log`` (``floor(e^{sqrt(n log n)})`` everywhere).
    """
    if N < 0:
        raise ValueError("N must be non-negative")
    if kind == "constant":
        if c < 1:
            raise ValueError("constant must be >= 1")
        return [int(c)] * N
    if not 0 <= eps <= 0.5:
        raise ValueError("eps must lie in [0, 1/2]")
    out = []
    for n in range(1, N + 1):
        if kind == "stretched-exp":
            out.append(_floor_exp(n ** (0.5 + eps)))
        elif kind == "square-spikes":
            out.append(_floor_exp(math.sqrt(n * math.log(n))) if _is_square(n) else 1)
        elif kind == "square-spikes-eps":
            out.append(_floor_exp(n ** (0.5 + eps)) if _is_square(n) else 1)
        elif kind == "spike":
            out.append(int(spike) if n == spike_index else 1)
        elif kind == "sd":
            out.append(_floor_exp(math.sqrt(math.log(n))))
        elif kind == "fd-log":
            out.append(_floor_exp(math.sqrt(n * math.log(n))))
        else:
            raise ValueError(f"unknown sequence kind {kind!r}")
    return out
