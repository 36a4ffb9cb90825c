"""Rotation-side partitions and closest-return lengths.

Lengths come from the recurrence ``beta_{k+1} = beta_{k-1} - a_{k+1} beta_k``
evaluated in exact fixed point (big ints scaled by ``2**bits``).  Every value
carries a certified radius in the same units.  The rotation number used is the
concrete irrational obtained by continuing the given partial quotients
periodically with the last one, so constant sequences give the exact quadratic
irrational.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .cf_arith import ContinuedFraction
from .errors import InvariantViolation, PrecisionExhausted

S, U = "S", "U"  # single (n-1)-return, union of n-return and (n-1)-return


def fixed_to_float(v: int, bits: int) -> float:
    """``v / 2**bits`` without overflowing on huge ``v``."""
    shift = max(0, abs(v).bit_length() - 60)
    return math.ldexp(v >> shift, shift - bits)


def _as_cf(cf) -> ContinuedFraction:
    return cf if isinstance(cf, ContinuedFraction) else ContinuedFraction.from_terms(cf)


def working_bits(q: int) -> int:
    return max(128, 4 * max(1, q.bit_length()) + 64)


def theta_fixed(cf, bits: int) -> tuple[int, int]:
    """``(Theta, radius)`` with ``|theta - Theta/2**bits| <= radius/2**bits``."""
    cf = _as_cf(cf)
    N = len(cf)
    a = cf.terms[-1]
    with mpmath.workprec(bits + 32):
        tail = (mpmath.sqrt(a * a + 4) - a) / 2  # [a, a, a, ...]
        pN, qN = cf.p(N), cf.q(N)
        pM, qM = cf.p(N - 1), cf.q(N - 1)
        theta = (pN + tail * pM) / (qN + tail * qM)
        big = int(mpmath.nint(theta * mpmath.mpf(2) ** bits))
    return big, 2


@dataclass(frozen=True)
class ReturnLengths:
    """``beta[k] = |q_k theta - p_k|`` for ``k = -1..n`` as fixed-point ints.

    ``beta_int[0]`` is ``beta_{-1} = 1``.  ``radius_int[k+1]`` bounds the error.
    """

    cf: ContinuedFraction = field(repr=False)
    bits: int
    beta_int: tuple[int, ...] = field(repr=False)
    radius_int: tuple[int, ...] = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.beta_int) - 2

    def beta(self, k: int) -> float:
        return fixed_to_float(self.beta_int[k + 1], self.bits)

    def beta_mpf(self, k: int):
        with mpmath.workprec(self.bits + 16):
            return mpmath.mpf(self.beta_int[k + 1]) / mpmath.mpf(2) ** self.bits

    def radius(self, k: int) -> float:
        return fixed_to_float(self.radius_int[k + 1], self.bits)

    def as_array(self) -> np.ndarray:
        """``[beta_{-1}, ..., beta_n]`` as floats (may underflow for huge q)."""
        return np.array([self.beta(k) for k in range(-1, self.n + 1)])

    def log_beta(self, k: int) -> float:
        return math.log(self.beta_int[k + 1]) - self.bits * math.log(2)


def closest_return_lengths(cf, n: int, bits: int | None = None, check: bool = True) -> ReturnLengths:
    cf = _as_cf(cf)
    if n > len(cf) - 1:
        raise ValueError(f"need at least n+1 = {n + 1} partial quotients, have {len(cf)}")
    if bits is None:
        bits = working_bits(cf.q(min(n + 1, len(cf))))
    T, r = theta_fixed(cf, bits)
    one = 1 << bits
    betas = [one, T]
    rads = [0, r]
    for k in range(1, n + 1):
        b = betas[-2] - cf.a(k) * betas[-1]
        rad = rads[-2] + cf.a(k) * rads[-1]
        if b <= rad:
            raise PrecisionExhausted(f"beta_{k} not certifiably positive at {bits} bits")
        betas.append(b)
        rads.append(rad)
    out = ReturnLengths(cf, bits, tuple(betas), tuple(rads))
    if check:
        for k in range(0, n + 1):
            bk, rk = betas[k + 1], rads[k + 1]
            q1 = cf.q(k + 1)
            # 1/(2 q_{k+1}^2) <= beta_k <= 1/q_{k+1}
            if not (2 * q1 * q1 * (bk + rk) >= one and q1 * (bk - rk) <= one):
                raise InvariantViolation(f"closest-return bounds fail at k={k}")
            if betas[k + 1] >= betas[k]:
                raise InvariantViolation(f"beta not strictly decreasing at k={k}")
    return out


def child_layout(n: int, kind: str, a_next: int) -> list[str]:
    """Kinds of the level-(n+1) intervals inside a level-n interval, left to right."""
    if kind == S:
        k = a_next
    elif kind == U:
        k = a_next + 1
    else:
        raise ValueError(f"unknown kind {kind!r}")
    if n % 2 == 1:
        return [S] * (k - 1) + [U]
    return [U] + [S] * (k - 1)


def level_lengths(rl: ReturnLengths, n: int) -> dict[str, int]:
    """Fixed-point lengths of the two interval kinds at level ``n``."""
    b_prev = rl.beta_int[n]  # beta_{n-1}
    b_n = rl.beta_int[n + 1] if n <= rl.n else 0
    return {S: b_prev, U: b_prev + b_n}


@dataclass(frozen=True)
class RotationPartition:
    """Points ``{-j theta mod 1 : 0 <= j < q_n}`` in sorted order.

    Points and lengths are fixed-point ints scaled by ``2**bits``; ``kinds[i]``
    describes the interval starting at ``points[i]`` (the last one wraps to 1).
    """

    level: int
    bits: int
    points_int: tuple[int, ...] = field(repr=False)
    lengths_int: tuple[int, ...] = field(repr=False)
    kinds: tuple[str, ...] = field(repr=False)
    orbit_index: tuple[int, ...] = field(repr=False)

    @property
    def points(self) -> np.ndarray:
        return np.array([fixed_to_float(p, self.bits) for p in self.points_int])

    @property
    def lengths(self) -> np.ndarray:
        return np.array([fixed_to_float(x, self.bits) for x in self.lengths_int])

    def __len__(self) -> int:
        return len(self.points_int)


def partition_rotation(cf, n: int, cap: int = 10**6, rl: ReturnLengths | None = None) -> RotationPartition:
    """Materialize the level-``n`` rotation partition (requires ``q_n <= cap``)."""
    cf = _as_cf(cf)
    if n < 0:
        raise ValueError("level must be >= 0")
    if rl is None or rl.n < n:
        rl = closest_return_lengths(cf, n, check=False)
    q = cf.q(n)
    if q > cap:
        raise ValueError(f"q_{n} = {q} exceeds the materialization cap {cap}")
    M = 1 << rl.bits
    T = rl.beta_int[1]
    pts = sorted(((-j * T) % M, j) for j in range(q))
    P = [p for p, _ in pts]
    lens = [b - a for a, b in zip(P, P[1:])] + [M - P[-1] + P[0]]
    want = level_lengths(rl, n)
    tol = 4 * q * rl.radius_int[1] + 4
    kinds = []
    for i, L in enumerate(lens):
        if abs(L - want[S]) <= tol:
            kinds.append(S)
        elif abs(L - want[U]) <= tol:
            kinds.append(U)
        else:
            raise InvariantViolation(f"level {n} interval {i} has inadmissible length")
        if L <= tol:
            raise PrecisionExhausted(f"points {i}, {i + 1} not certifiably distinct")
    return RotationPartition(n, rl.bits, tuple(P), tuple(lens), tuple(kinds),
                             tuple(j for _, j in pts))


@dataclass(frozen=True)
class Subdivision:
    points: tuple[float, ...]
    k: int
    ratio_max: float
    ratio_min: float


def subdivision_points(rl: ReturnLengths, n: int, kind: str, start: float = 0.0) -> Subdivision:
    """Level-(n+1) points inside a level-``n`` parent of the given kind."""
    layout = child_layout(n, kind, rl.cf.a(n + 1))
    child = level_lengths(rl, n + 1)
    pieces = [child[c] for c in layout]
    total = sum(pieces)
    if total != level_lengths(rl, n)[kind]:
        raise InvariantViolation("children do not tile the parent")
    k = len(pieces)
    rmax = max(pieces) * k / total
    rmin = min(pieces) * k / total
    if rmax > 2 or rmin < 0.5:
        raise InvariantViolation(f"uniformity ratio outside [1/2, 2] at level {n}")
    scale = 2.0 ** -rl.bits
    pts = [start]
    acc = 0
    for p in pieces:
        acc += p
        pts.append(start + acc * scale)
    return Subdivision(tuple(pts), k, float(rmax), float(rmin))


@dataclass(frozen=True)
class RotationBoundsRow:
    level: int
    min_length: float
    max_length: float
    lower_ratio: float  # min_length / (1/(2 q_{n+1}^2))
    upper_ratio: float  # max_length / (2/q_n)
    adjacent_max: float


def verify_rotation_bounds(cf, n_max: int) -> list[RotationBoundsRow]:
    cf = _as_cf(cf)
    n_max = min(n_max, len(cf) - 1)
    rl = closest_return_lengths(cf, n_max)
    rows = []
    for n in range(1, n_max + 1):
        lens = level_lengths(rl, n)
        lo_i, hi_i = lens[S], lens[U]
        one = 1 << rl.bits
        q, q1 = cf.q(n), cf.q(n + 1)
        if not (2 * q1 * q1 * lo_i >= one and q * hi_i <= 2 * one):
            raise InvariantViolation(f"rotation a priori bounds fail at level {n}")
        lower = float(mpmath.mpf(2 * q1 * q1 * lo_i) / one)
        upper = float(mpmath.mpf(q * hi_i) / (2 * one))
        adj = hi_i / lo_i
        if adj > 2:
            raise InvariantViolation(f"adjacent ratio above 2 at level {n}")
        rows.append(RotationBoundsRow(n, rl.beta(n - 1), rl.beta(n - 1) + rl.beta(n),
                                      lower, upper, float(adj)))
    return rows


def level_counts(cf, n: int) -> dict[str, int]:
    cf = _as_cf(cf)
    return {S: cf.q(n) - cf.q(n - 1), U: cf.q(n - 1)}
