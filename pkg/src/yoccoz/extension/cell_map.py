"""The per-cell extension ``phi'^-1 o p^-1 o psi^-1 o eta o p o phi`` and its dilatation.

A cell of the source grid and the matching cell of the target grid are both
uniformized onto the square ``S`` by their fiber-affine maps.  The bottom
vertices become nodes ``s_j`` and ``s'_j`` on ``[-1, 1]``; ``p`` carries ``S``
to the half-plane with identity trace, ``eta`` moves ``s_j`` to ``psi(s'_j)``
and the extension of ``psi^-1`` finishes the job.  On the boundary the
composite is the piecewise-affine vertex correspondence, so neighbouring cell
maps agree on shared edges.

Cells with at most three children and triangles skip the Möbius machinery and
use the affine blend ``X + (A(X) - X)(1 - Y/2) + iY`` on ``S``, where ``A`` is
the piecewise-affine node map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateCell, IndexMismatch, OutsideDomain, SeamProximity, SmallK, StepUnderflow
from ..grid_geometry import FLAT, QUAD, Cell
from .base_map import BasePlaneMap, LogStretchMap
from .mobius import EtaCorrection, PiecewiseAffine, dilatation_from_jacobian, node_distance, psi_build

SEAM_TOL = 1e-6


class FiberAffinePhi:
    """Uniformization of a cell (local coordinates) onto ``[-1,1] x [0,2]``."""

    def __init__(self, cell: Cell):
        self.cell = cell
        self.w = cell.width
        self.nodes = 2 * cell.t / self.w - 1

    def _gap(self, x):
        c = self.cell
        return c.g1(x) - c.g2(x)

    def forward(self, z, check: bool = True):
        z = np.asarray(z, dtype=complex)
        x, y = z.real, z.imag
        if check:
            tol = 1e-9 * max(self.w, max(self.cell.y_top))
            c = self.cell
            out = (x < -tol) | (x > self.w + tol) | (y < c.g2(x) - tol) | (y > c.g1(x) + tol)
            if np.any(out):
                raise OutsideDomain("point outside the cell")
        xc = np.clip(x, 0, self.w)
        g2 = self.cell.g2(xc)
        with np.errstate(divide="ignore", invalid="ignore"):
            Y = 2 * (y - g2) / self._gap(xc)
        Y = np.where(np.isfinite(Y), Y, 0.0)
        return (2 * xc / self.w - 1) + 1j * np.clip(Y, 0, 2)

    def inverse(self, Z):
        Z = np.asarray(Z, dtype=complex)
        x = (np.clip(Z.real, -1, 1) + 1) * self.w / 2
        g2 = self.cell.g2(x)
        return x + 1j * (g2 + np.clip(Z.imag, 0, 2) / 2 * self._gap(x))

    def jacobian(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        x, y = z.real, z.imag
        c = self.cell
        g2 = c.g2(x)
        gap = self._gap(x)
        d2 = c.g2_slope(x)
        d1 = (c.y_top[1] - c.y_top[0]) / self.w
        J = np.zeros(z.shape + (2, 2))
        J[..., 0, 0] = 2 / self.w
        J[..., 1, 0] = 2 * (-d2 * gap - (y - g2) * (d1 - d2)) / gap**2
        J[..., 1, 1] = 2 / gap
        return J

    def seam_distance(self, z) -> np.ndarray:
        """Distance to the vertical fibers over interior base points."""
        z = np.asarray(z, dtype=complex)
        inner = self.cell.t[1:-1]
        if len(inner) == 0:
            return np.full(z.shape, np.inf)
        return node_distance(z.real, inner)


def phi_eval(cell: Cell, z):
    return FiberAffinePhi(cell).forward(z)


def phi_inverse(cell: Cell, w):
    return FiberAffinePhi(cell).inverse(w)


class AffineBlend:
    """``E(X + iY) = X + (A(X) - X)(1 - Y/2) + iY`` on ``S``: node map at the bottom, identity on top."""

    def __init__(self, s, s_prime):
        self.A = PiecewiseAffine(s, s_prime)

    def forward(self, Z):
        Z = np.asarray(Z, dtype=complex)
        X, Y = Z.real, Z.imag
        return X + (self.A(X) - X) * (1 - Y / 2) + 1j * Y

    def inverse(self, Z):
        Z = np.asarray(Z, dtype=complex)
        Xp, Y = Z.real, Z.imag
        lam = (1 - Y / 2)[..., None]
        # for fixed Y the map is piecewise affine in X with these node images
        img = self.A.x * (1 - lam) + self.A.y * lam
        n = len(self.A.x)
        j = (img < Xp[..., None]).sum(axis=-1).clip(1, n - 1)
        lo = np.take_along_axis(img, (j - 1)[..., None], -1)[..., 0]
        hi = np.take_along_axis(img, j[..., None], -1)[..., 0]
        u = (Xp - lo) / (hi - lo)
        return self.A.x[j - 1] + u * (self.A.x[j] - self.A.x[j - 1]) + 1j * Y

    def jacobian(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=complex)
        X, Y = Z.real, Z.imag
        J = np.zeros(Z.shape + (2, 2))
        J[..., 0, 0] = 1 + (self.A.derivative(X) - 1) * (1 - Y / 2)
        J[..., 0, 1] = -(self.A(X) - X) / 2
        J[..., 1, 1] = 1.0
        return J

    def seam_distance(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=complex)
        inner = self.A.x[1:-1]
        if len(inner) == 0:
            return np.full(Z.shape, np.inf)
        return np.abs(Z.real[..., None] - inner).min(axis=-1)


def _opnorm(J) -> np.ndarray:
    return np.linalg.norm(J, ord=2, axis=(-2, -1))


_DEFAULT_P: BasePlaneMap | None = None


def default_base_map() -> BasePlaneMap:
    """Shared fast base map, built once."""
    global _DEFAULT_P
    if _DEFAULT_P is None:
        _DEFAULT_P = LogStretchMap()
    return _DEFAULT_P


def _same_geometry(a: Cell, b: Cell, rtol: float = 1e-12) -> bool:
    scale = max(a.width, max(a.y_top))
    return (len(a.t) == len(b.t) and np.allclose(a.t, b.t, rtol=0, atol=rtol * scale)
            and np.allclose(a.y_bot, b.y_bot, rtol=0, atol=rtol * scale)
            and np.allclose(a.y_top, b.y_top, rtol=0, atol=rtol * scale))


class YoccozCellMap:
    """Extension of the boundary correspondence from ``src`` onto ``tgt`` (local coordinates)."""

    def __init__(self, src: Cell, tgt: Cell, p: BasePlaneMap | None = None):
        if src.k != tgt.k:
            raise IndexMismatch(f"cells have {src.k} and {tgt.k} children")
        if FLAT in (src.kind, tgt.kind) or src.area() <= 0 or tgt.area() <= 0:
            raise DegenerateCell("flat cells carry no extension")
        self.src, self.tgt = src, tgt
        self.p = p if p is not None else default_base_map()
        self.phi, self.phi_t = FiberAffinePhi(src), FiberAffinePhi(tgt)
        self.s, self.s_prime = self.phi.nodes, self.phi_t.nodes
        self.k = src.k
        self.psi = None
        self.eta = None
        self.blend = None
        try:
            if _same_geometry(src, tgt):
                # identity boundary data: the blend with equal nodes is the identity
                self.blend = AffineBlend(self.s, self.s_prime)
                self.path = "identity"
                return self._finish()
            if src.kind != QUAD or tgt.kind != QUAD:
                raise SmallK("triangle cell")
            self.psi = psi_build(self.k, self.s_prime[self.k // 2])
            self.eta = EtaCorrection(self.s, self.s_prime, self.psi)
            self.path = "mobius"
        except SmallK:
            self.blend = AffineBlend(self.s, self.s_prime)
            self.path = "affine"
        self._finish()

    def _finish(self):
        self.diameter = math.hypot(self.src.width, max(self.src.y_top))

    # maps
    def _chain(self, z):
        Z = self.phi.forward(z)
        if self.blend is not None:
            return {"Z": Z, "Zt": self.blend.forward(Z)}
        w = self.p.forward(Z)
        w2 = self.eta.extend(w)
        w3 = self.psi.extend_inverse(w2)
        return {"Z": Z, "w": w, "w2": w2, "w3": w3, "Zt": self.p.inverse(w3)}

    def forward(self, z):
        return self.phi_t.inverse(self._chain(z)["Zt"])

    def inverse(self, zt):
        Zt = self.phi_t.forward(zt)
        if self.blend is not None:
            Z = self.blend.inverse(Zt)
        else:
            w3 = self.p.forward(Zt)
            w = self.eta.extend_inverse(self.psi.extend(w3))
            Z = self.p.inverse(w)
        return self.phi.inverse(Z)

    def jacobian(self, z) -> np.ndarray:
        return self._jacobian_stages(z)[0]

    def _jacobian_stages(self, z):
        z = np.asarray(z, dtype=complex)
        c = self._chain(z)
        zt = self.phi_t.inverse(c["Zt"])
        stages = [self.phi.jacobian(z)]
        if self.blend is not None:
            stages.append(self.blend.jacobian(c["Z"]))
        else:
            stages.append(self.p.jacobian(c["Z"]))
            stages.append(self.eta.extend_jacobian(c["w"]))
            stages.append(self.psi.extend_jacobian(c["w2"], inverse=True))
            stages.append(np.linalg.inv(self.p.jacobian(c["Zt"])))
        stages.append(np.linalg.inv(self.phi_t.jacobian(zt)))
        acc = [stages[0]]
        for J in stages[1:]:
            acc.append(J @ acc[-1])
        return acc[-1], acc, c, zt

    def inverse_jacobian(self, zt) -> np.ndarray:
        return np.linalg.inv(self.jacobian(self.inverse(zt)))

    # dilatation
    def boundary_distance(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        x, y = z.real, z.imag
        c = self.src
        s2 = c.g2_slope(np.clip(x, 0, c.width))
        s1 = (c.y_top[1] - c.y_top[0]) / c.width
        return np.minimum.reduce([x, c.width - x, (y - c.g2(x)) / np.hypot(1, s2),
                                  (c.g1(x) - y) / np.hypot(1, s1)])

    def seam_distance(self, z) -> np.ndarray:
        """Distance (in the cell) to curves where some factor is not smooth, to first order."""
        z = np.asarray(z, dtype=complex)
        _, acc, c, zt = self._jacobian_stages(z)
        d = self.phi.seam_distance(z)
        if self.blend is not None:
            d = np.minimum(d, self.blend.seam_distance(c["Z"]) / _opnorm(acc[0]))
        else:
            d = np.minimum(d, self.p.seam_distance(c["Z"]) / _opnorm(acc[0]))
            d = np.minimum(d, self.eta.seam_distance(c["w"]) / _opnorm(acc[1]))
            geo = np.full(z.shape, np.inf)
            for disk in (self.psi.disk_a, self.psi.disk_b):
                g = np.abs(np.abs(c["w2"] - disk.center) - disk.radius)
                geo = np.minimum(geo, g)
            d = np.minimum(d, geo / _opnorm(acc[2]))
            d = np.minimum(d, self.p.seam_distance(c["Zt"]) / _opnorm(acc[4]))
        d = np.minimum(d, self.phi_t.seam_distance(zt) / _opnorm(acc[-1]))
        return d

    def dilatation(self, z, mode: str = "analytic", check_seams: bool = True) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if check_seams:
            near = self.seam_distance(z) < SEAM_TOL * self.diameter
            if np.any(near):
                raise SeamProximity(f"{int(near.sum())} points within the seam tolerance")
        if mode == "analytic":
            return dilatation_from_jacobian(self.jacobian(z))
        if mode == "numeric":
            return dilatation_from_jacobian(self.numeric_jacobian(z))
        raise ValueError(f"unknown mode {mode!r}")

    def numeric_jacobian(self, z) -> np.ndarray:
        """Central differences with one Richardson step; step ``1e-3`` of the gap to boundary and seams."""
        z = np.asarray(z, dtype=complex)
        h = 1e-3 * np.minimum(self.boundary_distance(z), self.seam_distance(z))
        if np.any(h < 1e-11 * self.diameter):
            raise StepUnderflow("difference step below resolution")

        def diff(step, v):
            return (self.forward(z + v * step) - self.forward(z - v * step)) / (2 * step)

        J = np.empty(z.shape + (2, 2))
        for col, v in enumerate((1.0, 1j)):
            d = (4 * diff(h / 2, v) - diff(h, v)) / 3
            J[..., 0, col] = d.real
            J[..., 1, col] = d.imag
        return J

    def to_json(self) -> dict:
        out = {"k": self.k, "path": self.path, "p": self.p.name, "p_dilatation": self.p.dilatation_bound}
        if self.psi is not None:
            lo, hi = self.eta.slope_band()
            out.update(self.psi.to_json())
            out["eta_slope_band"] = [lo, hi]
        return out


def yoccoz_cell_map(src: Cell, tgt: Cell, p: BasePlaneMap | None = None) -> YoccozCellMap:
    return YoccozCellMap(src, tgt, p)


def dilatation_at(cmap: YoccozCellMap, z, mode: str = "analytic"):
    return cmap.dilatation(z, mode)


@dataclass(frozen=True)
class SupReport:
    k: int
    a_next: int
    path: str
    K_max: float
    quantiles: dict
    threshold: float
    area_fraction: float
    fraction_ci: tuple[float, float]
    samples: int

    @property
    def ratio(self) -> float:
        return self.K_max / math.log(self.a_next) ** 2 if self.a_next > 1 else float("nan")


def _half_disk_samples(rng, disk, m):
    r = disk.radius * np.sqrt(rng.random(m))
    th = np.pi * rng.random(m)
    return disk.center + r * np.exp(1j * th)


def sample_targeted(cmap: YoccozCellMap, rng: np.random.Generator, m: int) -> np.ndarray:
    """Points of the cell whose image under ``eta o p o phi`` lies in the half-disks."""
    if cmap.psi is None:
        return np.empty(0, dtype=complex)
    w2 = np.concatenate([_half_disk_samples(rng, cmap.psi.disk_a, m - m // 2),
                         _half_disk_samples(rng, cmap.psi.disk_b, m // 2)])
    w = cmap.eta.extend_inverse(w2)
    return cmap.phi.inverse(cmap.p.inverse(w))


def _good(cmap, z):
    ok = cmap.seam_distance(z) >= SEAM_TOL * cmap.diameter
    return z[ok]


def wilson_interval(hits: int, n: int, zq: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    p = hits / n
    den = 1 + zq * zq / n
    c = (p + zq * zq / (2 * n)) / den
    r = zq * math.sqrt(p * (1 - p) / n + zq * zq / (4 * n * n)) / den
    return (max(0.0, c - r), min(1.0, c + r))


def cell_sup_dilatation(cmap: YoccozCellMap, m: int, rng: np.random.Generator | None = None,
                        a_next: int | None = None, C_hat: float = 4.0) -> SupReport:
    """Observed sup of K from uniform plus targeted samples; area fraction above ``log^2(a)/C_hat``.

    The area fraction uses the uniform stratum only.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    a_next = cmap.k if a_next is None else a_next
    x, y = cmap.src.sample_uniform(rng, max(1, m - m // 2))
    zu = _good(cmap, x + 1j * y)
    Ku = cmap.dilatation(zu, check_seams=False)
    zt = sample_targeted(cmap, rng, m // 2)
    Kt = cmap.dilatation(_good(cmap, zt), check_seams=False) if len(zt) else np.empty(0)
    allK = np.concatenate([Ku, Kt])
    thr = math.log(a_next) ** 2 / C_hat if a_next > 1 else float("inf")
    hits = int((Ku >= thr).sum())
    qs = {q: float(np.quantile(allK, q)) for q in (0.5, 0.9, 0.99)}
    return SupReport(cmap.k, a_next, cmap.path, float(allK.max()), qs, thr,
                     hits / len(Ku), wilson_interval(hits, len(Ku)), len(allK))


EDGE_TOL = 1e-9


def _try_map(pair, p):
    try:
        return YoccozCellMap(pair.src, pair.tgt, p)
    except DegenerateCell:
        return None


def edge_compatibility(tree, level: int, m: int = 100, p: BasePlaneMap | None = None,
                       max_edges: int | None = None) -> dict:
    """Largest disagreement of neighbouring cell maps on shared edges, relative to cell size.

    Vertical edges join consecutive cells of ``level``; horizontal edges join
    each bottom segment of a ``level`` cell to the top of the matching child.
    """
    nodes = tree.enumerate_level(level)
    maps = [_try_map(tree.cells(v), p) for v in nodes]
    u = (np.arange(m) + 0.5) / m
    worst, count = 0.0, 0
    for A, B in zip(maps, maps[1:]):
        if A is None or B is None:
            continue
        c = A.src
        y = c.g2(c.width) + u * (c.y_top[1] - c.g2(c.width))
        za = A.forward(c.width + 1j * y) - A.tgt.width
        zb = B.forward(0 + 1j * y)
        worst = max(worst, float(np.abs(za - zb).max()) / A.diameter)
        count += 1
        if max_edges is not None and count >= max_edges:
            break
    for v, P in zip(nodes, maps):
        if P is None or (max_edges is not None and count >= max_edges):
            continue
        for j, child in enumerate(tree.children(v)):
            C = _try_map(tree.cells(child), p)
            if C is None:
                continue
            t0, t1 = P.src.t[j], P.src.t[j + 1]
            x = t0 + u * (t1 - t0)
            zp = P.forward(x + 1j * P.src.g2(x)) - P.tgt.t[j]
            xc = u * C.src.width
            zc = C.forward(xc + 1j * C.src.g1(xc))
            worst = max(worst, float(np.abs(zp - zc).max()) / C.diameter)
            count += 1
            if max_edges is not None and count >= max_edges:
                break
    return {"edges": count, "max_error": worst, "tolerance": EDGE_TOL, "passed": worst <= EDGE_TOL}
