"""Empirical constants measured once on synthetic cells and then held fixed.

The distortion law only fixes the sup dilatation up to bounded factors, so the
band for ``K_max / log^2 a`` and the area threshold ``log^2 a / C`` are
measured here on synthetic rotation-pair cells with one large partial quotient.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..cell_tree import PairTree, ParabolicScheme, RotationScheme
from ..extension.cell_map import YoccozCellMap, cell_sup_dilatation

CALIBRATION_VERSION = 1
C_GRID = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0)


def synthetic_pair(a: int, skew: float = 0.0, level: int = 2) -> PairTree:
    """Rotation pair whose level-``level`` cells have ``a`` (or ``a + 1``) children."""
    terms = [1] * (level + 5)
    terms[level] = int(a)
    rs = RotationScheme(terms, level + 2)
    return PairTree(ParabolicScheme(rs, skew), rs)


@dataclass(frozen=True)
class SweepRow:
    a: int
    k: int
    K_max: float
    ratio: float
    fractions: dict
    samples: int


@dataclass
class DistortionSweep:
    rows: list[SweepRow]
    slope: float
    skew: float
    samples_per_cell: int

    def ratios(self) -> np.ndarray:
        return np.array([r.ratio for r in self.rows])

    def fractions(self, C: float) -> np.ndarray:
        return np.array([r.fractions[C] for r in self.rows])

    def to_json(self) -> dict:
        return {"rows": [asdict(r) | {"fractions": {str(c): f for c, f in r.fractions.items()}}
                         for r in self.rows],
                "slope": self.slope, "skew": self.skew, "samples_per_cell": self.samples_per_cell}


def distortion_sweep(a_values=(10, 100, 1000, 10000), samples: int = 10000, seed: int = 0,
                     skew: float = 0.0, level: int = 2) -> DistortionSweep:
    """Per-``a`` maximum of the cell sup dilatation over the level's cells, and area fractions.

    The fraction for each ``C`` in ``C_GRID`` is that of the cell with the most children.
    """
    rows = []
    for a in a_values:
        tree = synthetic_pair(a, skew, level)
        best, frac, k_best, n_tot = 0.0, None, 0, 0
        for v in tree.enumerate_level(level):
            cp = tree.cells(v)
            cmap = YoccozCellMap(cp.src, cp.tgt)
            rng = np.random.default_rng([seed, a, len(v.path) and v.path[-1]])
            rep = cell_sup_dilatation(cmap, samples, rng, a_next=a, C_hat=1.0)
            best = max(best, rep.K_max)
            n_tot += rep.samples
            if cmap.k >= k_best:
                k_best = cmap.k
                x, y = cp.src.sample_uniform(np.random.default_rng([seed, a, 7]), samples // 2)
                z = x + 1j * y
                z = z[cmap.seam_distance(z) >= 1e-6 * cmap.diameter]
                K = cmap.dilatation(z, check_seams=False)
                L = math.log(a) ** 2
                frac = {C: float(np.mean(K >= L / C)) for C in C_GRID}
        rows.append(SweepRow(int(a), k_best, best, best / math.log(a) ** 2, frac, n_tot))
    la = np.log([r.a for r in rows])
    lr = np.log([r.ratio for r in rows])
    slope = float(np.polyfit(la, lr, 1)[0]) if len(rows) >= 2 else 0.0
    return DistortionSweep(rows, slope, skew, samples)


@dataclass
class Calibration:
    C_hat: float
    lam_hat: float
    band: tuple[float, float]
    version: int = CALIBRATION_VERSION
    source: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"C_hat": self.C_hat, "lam_hat": self.lam_hat, "band": list(self.band),
                "version": self.version, "source": self.source}

    def id(self) -> str:
        """Short content hash naming this snapshot."""
        body = json.dumps({k: v for k, v in self.to_json().items() if k != "source"}, sort_keys=True)
        return f"cal-v{self.version}-{hashlib.sha256(body.encode()).hexdigest()[:8]}"

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "Calibration":
        with open(path) as fh:
            d = json.load(fh)
        return cls(d["C_hat"], d["lam_hat"], tuple(d["band"]), d["version"], d.get("source", {}))


def calibrate(sweep: DistortionSweep, margin: float = 1.25, lam_share: float = 0.5) -> Calibration:
    """``C_hat``: the threshold constant whose area fractions vary least across ``a``.

    ``lam_hat`` is ``lam_share`` of the smallest such fraction; the sup band is
    the observed ratio range widened by ``margin`` on both sides.
    """
    best, spread = None, np.inf
    for C in C_GRID:
        f = sweep.fractions(C)
        if f.min() <= 0:
            continue
        s = f.max() / f.min()
        if s < spread - 1e-12:
            best, spread = C, s
    if best is None:
        raise ValueError("no threshold constant leaves a positive area fraction for every a")
    r = sweep.ratios()
    lam = lam_share * float(sweep.fractions(best).min())
    return Calibration(best, round(lam, 4), (float(r.min() / margin), float(r.max() * margin)),
                       source={"a": [row.a for row in sweep.rows], "spread": spread,
                               "samples_per_cell": sweep.samples_per_cell, "skew": sweep.skew})


# measured with distortion_sweep(samples=10000, seed=0, skew=0); see tests for the pinned bands
DEFAULT_CALIBRATION = Calibration(1.0, 0.05, (16.4, 51.0))
