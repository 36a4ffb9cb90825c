"""Quasisymmetry of the piecewise-affine approximants ``h_n`` of the conjugator.

``h_n`` agrees with the conjugator on the level-``n`` partition points and is
affine in between.  Inside an interval with ``k`` subintervals, the
near-parabolic gaps put the midpoint of ``[t_0, t_a]`` (``a = k // 2``) within
a bounded number of pieces from ``t_0``, while the rotation side spreads the
pieces evenly; the ratio of the two image increments then grows like ``k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..cell_tree import Node, PairTree, ParabolicScheme, RotationScheme, root
from ..extension.cell_map import YoccozCellMap, cell_sup_dilatation


def _points(tree: PairTree, node: Node):
    kids = tree.children(node)
    ts = np.array([c.offset[0] for c in kids] + [node.offset[0] + node.src[1]])
    tt = np.array([c.offset[1] for c in kids] + [node.offset[1] + node.tgt[1]])
    return kids, ts, tt


def h_approx(tree: PairTree, node: Node, x: float, n: int) -> float:
    """``h_n(x)`` for ``x`` inside ``node``'s source interval, by descent to level ``n``."""
    while node.level < n:
        kids, ts, tt = _points(tree, node)
        j = int(np.clip(np.searchsorted(ts, x, side="right") - 1, 0, len(kids) - 1))
        if x == ts[j]:
            return float(tt[j])
        node = kids[j]
    u = (x - node.offset[0]) / node.src[1]
    return float(node.offset[1] + u * node.tgt[1])


def qs_witness(ts, tt, h) -> float:
    """The witness ratio ``(h(t+d) - h(t)) / (h(t) - h(t-d))`` with ``t +- d = t_a, t_0``."""
    k = len(ts) - 1
    a = k // 2
    if a < 1:
        return math.nan
    t = 0.5 * (ts[a] + ts[0])
    ht = h(t)
    return float((tt[a] - ht) / (ht - tt[0]))


@dataclass(frozen=True)
class QSRow:
    m: int
    k: int
    a_m: int
    rho: float


@dataclass
class QSReport:
    n: int
    rows: list[QSRow]

    @property
    def rho_hat(self) -> float:
        vals = [r.rho for r in self.rows if math.isfinite(r.rho)]
        return max(vals) if vals else 1.0

    @property
    def max_a(self) -> int:
        return max((r.a_m for r in self.rows), default=1)

    @property
    def normalized(self) -> float:
        return self.rho_hat / self.max_a

    def to_json(self) -> dict:
        return {"n": self.n, "rho_hat": self.rho_hat, "max_a": self.max_a, "normalized": self.normalized,
                "rows": [r.__dict__ for r in self.rows]}


def _widest(tree: PairTree, level: int, limit: int = 2000) -> Node:
    """A level node with the most children; breadth-first with a cap on the frontier."""
    nodes = [root()]
    for _ in range(level):
        nodes = [c for v in nodes for c in tree.children(v)]
        if len(nodes) > limit:
            # keep representatives of every kind triple, widest parents first
            seen, keep = set(), []
            for v in nodes:
                if v.kinds not in seen:
                    seen.add(v.kinds)
                    keep.append(v)
            nodes = keep
    return max(nodes, key=lambda v: len(tree.src.layout(v.level, v.kinds[1])))


def approximant_qs(tree: PairTree, n: int) -> QSReport:
    """The witness ratio of ``h_n`` on the widest interval of each level ``m - 1``, ``m = 1..n``."""
    rows = []
    for m in range(1, n + 1):
        I = _widest(tree, m - 1)
        kids, ts, tt = _points(tree, I)
        rho = qs_witness(ts, tt, lambda x: h_approx(tree, I, x, n))
        rows.append(QSRow(m, len(kids), int(tree.src.cf.a(m)), rho))
    return QSReport(n, rows)


def spike_pair(spike: int, index: int = 5, n: int | None = None, skew: float = 0.0,
               symmetric: bool = False) -> PairTree:
    """Ones with ``a_index = spike``; ``symmetric`` puts rotation points on both sides."""
    depth = (index + 1) if n is None else n
    terms = [1] * (depth + 3)
    terms[index - 1] = int(spike)
    rs = RotationScheme(terms, depth + 1)
    return PairTree(rs if symmetric else ParabolicScheme(rs, skew), rs)


def spike_experiment(spikes=(10, 50, 250, 1250), index: int = 5, skew: float = 0.0) -> dict:
    """``rho_hat`` against the spike size, with the log-log slope of the growth."""
    n = index + 1
    rows = []
    for s in spikes:
        rep = approximant_qs(spike_pair(s, index, n, skew), n)
        rows.append({"spike": int(s), "rho_hat": rep.rho_hat, "c": rep.rho_hat / s})
    x = np.log([r["spike"] for r in rows])
    y = np.log([r["rho_hat"] for r in rows])
    slope = float(np.polyfit(x, y, 1)[0]) if len(rows) >= 2 else math.nan
    return {"rows": rows, "slope": slope, "index": index, "skew": skew}


def _measured_sup(spike: int, index: int, skew: float, samples: int, seed: int) -> float:
    tree = spike_pair(spike, index, index + 1, skew)
    I = _widest(tree, index - 1)
    cp = tree.cells(I)
    rep = cell_sup_dilatation(YoccozCellMap(cp.src, cp.tgt), samples, np.random.default_rng([seed, spike]))
    return rep.K_max


def extension_comparison_report(experiment: dict, measure: bool = True, samples: int = 4000,
                                seed: int = 0) -> list[dict]:
    """Bounds implied by the measured quasisymmetry constant next to the Yoccoz dilatation.

    ``ba`` is the linear bound ``2 rho``; ``de_argument`` the argument
    ``min(rho^{3/2}, 2 rho - 1)`` of the Douady-Earle growth function (the function
    itself is not tabulated).  ``yoccoz_order`` is ``log^2 a``; ``yoccoz_measured``
    the sampled sup dilatation of the spike cell, which carries a bounded factor.
    """
    out = []
    for r in experiment["rows"]:
        rho, s = r["rho_hat"], r["spike"]
        row = {"spike": s, "rho_hat": rho, "ba": 2 * rho,
               "de_argument": min(rho ** 1.5, 2 * rho - 1), "yoccoz_order": math.log(s) ** 2}
        if measure:
            row["yoccoz_measured"] = _measured_sup(s, experiment["index"], experiment["skew"], samples, seed)
        row["ordered"] = row["yoccoz_order"] < row["ba"]
        out.append(row)
    return out


def growth_exponents(table: list[dict]) -> dict:
    """Log-log slopes of each column against the spike size."""
    x = np.log([r["spike"] for r in table])
    out = {}
    for key in ("ba", "yoccoz_order", "yoccoz_measured"):
        if all(key in r for r in table) and len(table) >= 2:
            out[key] = float(np.polyfit(x, np.log([r[key] for r in table]), 1)[0])
    return out
