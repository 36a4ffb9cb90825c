"""Tree descent over grid cells for levels too deep to materialize.

Both grids of a pair share one combinatorial tree: the level-``n`` intervals are
tagged S or U and subdivide according to the same layouts.  A scheme assigns
each child a fraction of its parent's length.  The rotation scheme uses the
exact return lengths; the parabolic scheme reweights the same pieces by
``1/min(j, k+1-j)^2`` to imitate the gap profile of a critical map.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

from .cf_arith import ContinuedFraction
from .grid_geometry import Cell
from .rotation_side import S, U, child_layout, closest_return_lengths, level_lengths

KINDS = (S, U)


class KindScheme:
    """Child kinds and length fractions for every ``(level, kind)``."""

    depth: int
    cf: ContinuedFraction

    def layout(self, n: int, kind: str) -> list[str]:
        return child_layout(n, kind, self.cf.a(n + 1))

    def fractions(self, n: int, kind: str) -> np.ndarray:
        raise NotImplementedError


class RotationScheme(KindScheme):
    def __init__(self, cf, depth: int):
        self.cf = cf if isinstance(cf, ContinuedFraction) else ContinuedFraction.from_terms(cf)
        if len(self.cf) < depth + 2:
            raise ValueError(f"need {depth + 2} partial quotients for depth {depth}")
        self.depth = depth
        self.rl = closest_return_lengths(self.cf, depth + 1)
        self._cache: dict = {}

    def fractions(self, n: int, kind: str) -> np.ndarray:
        key = (n, kind)
        if key not in self._cache:
            parent = level_lengths(self.rl, n)[kind]
            child = level_lengths(self.rl, n + 1)
            self._cache[key] = np.array([float(Fraction(child[c], parent)) for c in self.layout(n, kind)])
        return self._cache[key]


class ParabolicScheme(KindScheme):
    """Base fractions reweighted by ``1/min(j, k+1-j)^2``; ``skew`` inflates the first piece."""

    def __init__(self, base: KindScheme, skew: float = 0.0):
        self.base = base
        self.cf = base.cf
        self.depth = base.depth
        self.skew = skew
        self._cache: dict = {}

    def fractions(self, n: int, kind: str) -> np.ndarray:
        key = (n, kind)
        if key not in self._cache:
            f = self.base.fractions(n, kind)
            k = len(f)
            j = np.arange(1, k + 1)
            w = 1.0 / np.minimum(j, k + 1 - j) ** 2
            if k > 1:
                w[0] *= 1 + self.skew
            g = f * w
            self._cache[key] = g / g.sum()
        return self._cache[key]


@dataclass(frozen=True)
class Node:
    """Interval ``I`` at ``level`` with its neighbours, lengths on both sides of a pair."""

    level: int
    kinds: tuple[str, str, str]
    src: tuple[float, float, float]
    tgt: tuple[float, float, float]
    path: tuple[int, ...] = ()
    offset: tuple[float, float] = (0.0, 0.0)  # left endpoint of I on each side


def root() -> Node:
    return Node(0, (S, S, S), (1.0, 1.0, 1.0), (1.0, 1.0, 1.0))


@dataclass(frozen=True)
class CellPair:
    node: Node
    src: Cell
    tgt: Cell


class PairTree:
    def __init__(self, src: KindScheme, tgt: KindScheme):
        if src.cf.terms[: src.depth + 2] != tgt.cf.terms[: src.depth + 2]:
            raise ValueError("schemes must share combinatorics")
        self.src, self.tgt = src, tgt
        self.depth = min(src.depth, tgt.depth)

    def _side(self, scheme: KindScheme, node: Node, lens):
        n = node.level
        kL, kI, kR = node.kinds
        L, I, R = lens
        fL, fI, fR = scheme.fractions(n, kL), scheme.fractions(n, kI), scheme.fractions(n, kR)
        return I * fI, L * fL[-1], R * fR[0]

    def cells(self, node: Node) -> CellPair:
        out = []
        for scheme, lens in ((self.src, node.src), (self.tgt, node.tgt)):
            ch, l_last, r_first = self._side(scheme, node, lens)
            out.append(Cell.from_lengths(node.level, lens[0], ch, lens[2], l_last, r_first, I=lens[1]))
        return CellPair(node, out[0], out[1])

    def children(self, node: Node) -> list[Node]:
        n = node.level
        kL, kI, kR = node.kinds
        lay = self.src.layout(n, kI)
        left_kind = self.src.layout(n, kL)[-1]
        right_kind = self.src.layout(n, kR)[0]
        cs, ls, rs = self._side(self.src, node, node.src)
        ct, lt, rt = self._side(self.tgt, node, node.tgt)
        kinds = [left_kind] + lay + [right_kind]
        src = np.concatenate([[ls], cs, [rs]])
        tgt = np.concatenate([[lt], ct, [rt]])
        xs = node.offset[0] + np.concatenate([[0.0], np.cumsum(cs)])
        xt = node.offset[1] + np.concatenate([[0.0], np.cumsum(ct)])
        out = []
        for j in range(len(lay)):
            out.append(Node(n + 1, (kinds[j], kinds[j + 1], kinds[j + 2]),
                            (float(src[j]), float(src[j + 1]), float(src[j + 2])),
                            (float(tgt[j]), float(tgt[j + 1]), float(tgt[j + 2])),
                            node.path + (j,), (float(xs[j]), float(xt[j]))))
        return out

    def enumerate_level(self, n: int, limit: int = 10**5) -> list[Node]:
        nodes = [root()]
        for _ in range(n):
            nodes = [c for v in nodes for c in self.children(v)]
            if len(nodes) > limit:
                raise ValueError(f"level {n} has more than {limit} cells")
        return nodes

    def descend(self, rng: np.random.Generator, n: int, side: str = "src") -> tuple[Node, float]:
        """Random level-``n`` node chosen with child probability proportional to length squared.

        Returns the node and the probability of the path.
        """
        node, prob = root(), 1.0
        for _ in range(n):
            kids = self.children(node)
            w = np.array([(k.src if side == "src" else k.tgt)[1] ** 2 for k in kids])
            p = w / w.sum()
            j = int(rng.choice(len(kids), p=p)) if len(kids) > 1 else 0
            node, prob = kids[j], prob * float(p[j])
        return node, prob


def level_square_sums(scheme: KindScheme, depth: int) -> np.ndarray:
    """Exact ``S_n = sum_t y_n(t)^2`` for ``n = 0..depth`` by the kind recursion.

    ``S_n`` is the integral of the level-``n`` height polyline over one period,
    so the area between polylines ``n`` and ``n+1`` is ``S_n - S_{n+1}``.
    """
    V = {S: 1.0, U: 0.0}
    X = {(a, b): 0.0 for a, b in product(KINDS, KINDS)}
    X[(S, S)] = 1.0
    out = [(sum(V.values()) + sum(X.values())) / 2]
    for n in range(depth):
        V2 = {S: 0.0, U: 0.0}
        X2 = {key: 0.0 for key in X}
        for kind in KINDS:
            if V[kind] == 0:
                continue
            lay = scheme.layout(n, kind)
            f = scheme.fractions(n, kind)
            for c, fc in zip(lay, f):
                V2[c] += V[kind] * fc * fc
            for j in range(len(lay) - 1):
                X2[(lay[j], lay[j + 1])] += V[kind] * f[j] * f[j + 1]
        for (a, b), x in X.items():
            if x == 0:
                continue
            la, lb = scheme.layout(n, a), scheme.layout(n, b)
            fa, fb = scheme.fractions(n, a), scheme.fractions(n, b)
            X2[(la[-1], lb[0])] += x * fa[-1] * fb[0]
        V, X = V2, X2
        out.append((sum(V.values()) + sum(X.values())) / 2)
    return np.array(out)


def band_areas(scheme: KindScheme, depth: int) -> np.ndarray:
    """Exact areas of the level bands ``0..depth-1``."""
    s = level_square_sums(scheme, depth)
    return s[:-1] - s[1:]


def reachable_triples(scheme: KindScheme, depth: int) -> list[set]:
    """Kind triples ``(L, I, R)`` that occur at each level ``0..depth``."""
    cur = {(S, S, S)}
    out = [cur]
    for n in range(depth):
        nxt = set()
        for kL, kI, kR in cur:
            lay = scheme.layout(n, kI)
            kinds = [scheme.layout(n, kL)[-1]] + lay + [scheme.layout(n, kR)[0]]
            for j in range(len(lay)):
                nxt.add(tuple(kinds[j:j + 3]))
        cur = nxt
        out.append(cur)
    return out


def rotation_min_cell_areas(scheme: RotationScheme, depth: int) -> np.ndarray:
    """Minimal cell area per level ``0..depth-1``; rotation cells depend only on kind triples."""
    rl = scheme.rl
    out = []
    for n, triples in enumerate(reachable_triples(scheme, depth)[:depth]):
        lens = level_lengths(rl, n)
        best = np.inf
        for kL, kI, kR in triples:
            L, I, R = (float(Fraction(lens[k], 1 << rl.bits)) for k in (kL, kI, kR))
            cell = Cell.from_lengths(n, L, I * scheme.fractions(n, kI), R,
                                     L * scheme.fractions(n, kL)[-1],
                                     R * scheme.fractions(n, kR)[0], I=I)
            a = cell.area()
            if a > 0:
                best = min(best, a)
        out.append(best)
    return np.array(out)
