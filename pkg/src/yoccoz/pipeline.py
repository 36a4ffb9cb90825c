"""Experiment manifests and the staged pipeline tune -> partition -> grid -> extend -> analyze -> report.

Each stage writes ``stages/<name>.json`` (and the analyze stage a sample
archive) tagged with the manifest hash; a resumed run reuses every stage whose
record carries the same hash.  Reports depend only on persisted stage records,
so a resumed run writes the same bytes as a fresh one.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .analysis.calibration import CALIBRATION_VERSION, DEFAULT_CALIBRATION, Calibration
from .analysis.field import (
    FORWARD,
    INVERSE,
    FieldSamples,
    identity_field,
    sample_field,
    sample_grid_field,
    unresolved_bound,
)
from .analysis.harness import (
    _direction,
    arithmetic_expectation,
    inverse_area_floor,
    level_area_rows,
    log_gauge,
    lower_bound_chain,
    synthetic_pair,
)
from .analysis.tail import gauge_verdict, tail_area
from .cell_tree import band_areas
from .cf_arith import ContinuedFraction, generate_sequence
from .errors import DegenerateCell, ManifestInvalid, StageFailure, YoccozError
from .grid_geometry import GridPair, build_grid, grid_report, render_svg
from .serialize import dumps, plain

TIERS = ("synthetic-rotation", "critical")
GAUGES = ("david", "sd", "fd")
STAGES = ("tune", "partition", "grid", "extend", "analyze", "report")
CAPS = {"depth": 40, "budget": 5_000_000, "critical_q": 5000, "precision_bits": 4096}
NAMED_TERMS = {"golden": [1], "silver": [2]}


@dataclass
class ExperimentManifest:
    """One experiment.  ``cf`` is ``{"terms": [...]}``, ``{"generator": {"kind": ..., ...}}`` or ``{"named": "golden"}``."""

    cf: dict | None = None
    tier: str = "synthetic-rotation"
    depth: int = 10
    budget: int = 10_000
    precision_bits: int = 256
    seed: int = 0
    gauge: str = "david"
    skew: float = 0.0
    per_cell: int = 20
    output: str = "out"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentManifest":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ManifestInvalid(f"unknown manifest fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentManifest":
        text = Path(path).read_text()
        d = yaml.safe_load(text) or {}
        if not isinstance(d, dict):
            raise ManifestInvalid(f"{path}: manifest must be a mapping")
        return cls.from_dict(d)

    def with_overrides(self, **kw) -> "ExperimentManifest":
        """CLI values win over the manifest; ``None`` means not given."""
        d = asdict(self)
        d.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentManifest.from_dict(d)

    def terms(self) -> list[int]:
        """Partial quotients ``a_1..a_{depth+4}`` (tuning and the synthetic tree read past the depth)."""
        if not self.cf:
            raise ManifestInvalid("no rotation number specified")
        need = self.depth + 4
        if "terms" in self.cf:
            t = [int(a) for a in self.cf["terms"]]
            if len(t) < need:
                raise ManifestInvalid(f"cf has {len(t)} terms, depth {self.depth} needs {need}")
            return t
        if "named" in self.cf:
            name = self.cf["named"]
            if name not in NAMED_TERMS:
                raise ManifestInvalid(f"unknown named rotation number {name!r}")
            return NAMED_TERMS[name] * need
        if "generator" in self.cf:
            g = dict(self.cf["generator"])
            kind = g.pop("kind", None)
            if kind is None:
                raise ManifestInvalid("generator spec needs a kind")
            return generate_sequence(kind, max(need, int(g.pop("N", need))), **g)
        raise ManifestInvalid("no rotation number specified")

    def identity(self) -> dict:
        """The fields that determine results (output location excluded)."""
        d = asdict(self)
        d.pop("output")
        return d

    def hash(self) -> str:
        return hashlib.sha256(dumps(self.identity()).encode()).hexdigest()[:16]


def validate_manifest(m: ExperimentManifest | dict) -> list[str]:
    """Every problem with a manifest, as human-readable diagnostics; empty when valid."""
    if isinstance(m, dict):
        try:
            m = ExperimentManifest.from_dict(m)
        except (ManifestInvalid, TypeError) as exc:
            return [str(exc)]
    out = []
    if m.tier not in TIERS:
        out.append(f"tier must be one of {TIERS}, got {m.tier!r}")
    if m.gauge not in GAUGES:
        out.append(f"gauge must be one of {GAUGES}, got {m.gauge!r}")
    if not (0 <= m.depth <= CAPS["depth"]):
        out.append(f"depth {m.depth} outside [0, {CAPS['depth']}]")
    if not (10 <= m.budget <= CAPS["budget"]):
        out.append(f"budget {m.budget} outside [10, {CAPS['budget']}]")
    if not (53 <= m.precision_bits <= CAPS["precision_bits"]):
        out.append(f"precision_bits {m.precision_bits} outside [53, {CAPS['precision_bits']}]")
    if m.per_cell < 1:
        out.append("per_cell must be positive")
    if not (0 <= m.skew < 1):
        out.append("skew must lie in [0, 1)")
    terms = None
    try:
        terms = m.terms()
    except (ManifestInvalid, ValueError, TypeError) as exc:
        out.append(str(exc))
    if terms is not None:
        if any(a < 1 for a in terms):
            out.append("partial quotients must be positive integers")
        elif m.tier == "critical":
            q = ContinuedFraction.from_terms(terms[: m.depth + 1]).q(m.depth + 1)
            if q > CAPS["critical_q"]:
                out.append(f"q_{m.depth + 1} = {q} exceeds the critical-tier cap {CAPS['critical_q']}; "
                           "use tier synthetic-rotation for this depth")
    out.extend(_path_problems(m.output))
    return out


def _path_problems(path) -> list[str]:
    p = Path(path)
    probe = p
    while not probe.exists():
        if probe.parent == probe:
            break
        probe = probe.parent
    if p.exists() and not p.is_dir():
        return [f"output path {p} exists and is not a directory"]
    if not os.access(probe, os.W_OK):
        return [f"output path {p} is not writable"]
    return []


def module_versions() -> dict:
    import matplotlib
    import mpmath
    import scipy

    return {"yoccoz": __version__, "calibration": CALIBRATION_VERSION, "numpy": np.__version__,
            "scipy": scipy.__version__, "mpmath": mpmath.__version__, "matplotlib": matplotlib.__version__}


class _Run:
    def __init__(self, m: ExperimentManifest, resume: bool, cal: Calibration):
        self.m, self.resume, self.cal = m, resume, cal
        self.out = Path(m.output)
        self.stage_dir = self.out / "stages"
        self.hash = m.hash()
        self.terms = m.terms()
        self.stamp = {"manifest_hash": self.hash, "calibration_id": cal.id(), "versions": module_versions()}
        self.cache = {}

    def path(self, stage: str) -> Path:
        return self.stage_dir / f"{stage}.json"

    def load(self, stage: str):
        p = self.path(stage)
        if self.resume and p.exists():
            rec = json.loads(p.read_text())
            if rec.get("manifest_hash") == self.hash:
                return rec
        return None

    def save(self, stage: str, body: dict) -> dict:
        rec = {"stage": stage, **self.stamp, **plain(body)}
        self.stage_dir.mkdir(parents=True, exist_ok=True)
        self.path(stage).write_text(dumps(rec, indent=1))
        # reload so that fresh and resumed runs see the same JSON-normalized values
        return json.loads(self.path(stage).read_text())

    # contexts rebuilt on demand; not persisted

    def tree(self):
        if "tree" not in self.cache:
            self.cache["tree"] = synthetic_pair(self.terms, max(self.m.depth, 1), self.m.skew)
        return self.cache["tree"]

    def grids(self, part: dict) -> GridPair:
        if "grids" not in self.cache:
            src = build_grid(part["critical"]["points"], part["critical"]["lengths"])
            tgt = build_grid(part["rotation"]["points"], part["rotation"]["lengths"])
            self.cache["grids"] = GridPair(src, tgt)
        return self.cache["grids"]


def _stage_tune(run: _Run) -> dict:
    m = run.m
    if m.tier != "critical" or m.depth == 0:
        return {"skipped": True}
    from .critical_dynamics import tune_parameter

    res = tune_parameter(run.terms[: m.depth + 4], m.depth + 2, prec=m.precision_bits)
    return {"t": str(res.t), "depth": res.depth, "steps": res.steps,
            "bracket": [str(x) for x in res.bracket]}


def _stage_partition(run: _Run, tune: dict) -> dict:
    m = run.m
    if m.tier != "critical" or m.depth == 0:
        from .rotation_side import level_counts

        return {"counts": [level_counts(run.terms, n) for n in range(m.depth + 2)]}
    import mpmath

    from .critical_dynamics import CriticalMap, OrbitCache, partition_critical
    from .rotation_side import closest_return_lengths, partition_rotation

    cf = run.terms[: m.depth + 3]
    with mpmath.workprec(m.precision_bits):
        fmap = CriticalMap(mpmath.mpf(tune["t"]), m.precision_bits)
        cache = OrbitCache(fmap)
        crit = [partition_critical(fmap, cf, n, cache) for n in range(m.depth + 2)]
        rl = closest_return_lengths(cf, m.depth + 2)
        rot = [partition_rotation(cf, n, rl=rl) for n in range(m.depth + 2)]
    order_ok = all(list(c.kinds) == list(r.kinds) for c, r in zip(crit, rot))
    return {"order_matches": order_ok,
            "critical": {"points": [[float(x) for x in p.points] for p in crit],
                         "lengths": [[float(x) for x in p.lengths()] for p in crit]},
            "rotation": {"points": [[float(x) for x in p.points] for p in rot],
                         "lengths": [[float(x) for x in p.lengths] for p in rot]}}


def _stage_grid(run: _Run, part: dict) -> dict:
    m = run.m
    if m.depth == 0:
        return {"levels": [{"level": 0, "cells": 1, "area": 1.0}]}
    if m.tier == "critical":
        pair = run.grids(part)
        rep = grid_report(pair.source)
        return {"levels": [{"level": n, "cells": len(pair.source.cells[n]),
                            "area_src": pair.source.band_area(n), "area_tgt": pair.target.band_area(n)}
                           for n in range(pair.source.depth)], "source_report": rep}
    tree = run.tree()
    src, tgt = band_areas(tree.src, m.depth + 1), band_areas(tree.tgt, m.depth + 1)
    return {"levels": [{"level": n, "cells": int(sum(part["counts"][n].values())), "area_src": float(src[n]),
                        "area_tgt": float(tgt[n])} for n in range(m.depth + 1)]}


def _stage_extend(run: _Run, part: dict) -> dict:
    """Per-level cell-map summary and edge compatibility on the shallow levels."""
    m = run.m
    if m.depth == 0:
        return {"levels": [], "edges": {"edges": 0, "passed": True}}
    from .extension.cell_map import YoccozCellMap, edge_compatibility

    def path_of(a, b) -> str:
        try:
            return YoccozCellMap(a, b).path
        except DegenerateCell:
            return "degenerate"

    rows = []
    if m.tier == "critical":
        pair = run.grids(part)
        for n in range(min(pair.source.depth, 4)):
            paths = {}
            for a, b in zip(pair.source.cells[n], pair.target.cells[n]):
                if a.area() <= 0 or b.area() <= 0:
                    continue
                path = path_of(a, b)
                paths[path] = paths.get(path, 0) + 1
            rows.append({"level": n, "paths": paths})
        return {"levels": rows, "edges": None}
    tree = run.tree()
    edges = {"edges": 0, "passed": True, "max_error": 0.0}
    for n in range(min(m.depth, 3)):
        paths = {}
        for v in tree.enumerate_level(n):
            cp = tree.cells(v)
            path = path_of(cp.src, cp.tgt)
            paths[path] = paths.get(path, 0) + 1
        rows.append({"level": n, "paths": paths})
        e = edge_compatibility(tree, n, 40)
        edges["edges"] += e["edges"]
        edges["passed"] = edges["passed"] and bool(e["passed"])
        edges["max_error"] = max(edges["max_error"], float(e.get("max_error", 0.0)))
    return {"levels": rows, "edges": edges}


def _save_samples(path: Path, s: FieldSamples):
    np.savez(path, z=s.z, level=s.level, K=s.K, weight=s.weight, cell=s.cell, band_areas=s.band_areas,
             unresolved=np.array(s.unresolved), depth=np.array(s.depth))


def _load_samples(path: Path, direction: str) -> FieldSamples:
    d = np.load(path)
    return FieldSamples(d["z"], d["level"], d["K"], d["weight"], d["cell"], direction, int(d["depth"]),
                        d["band_areas"], float(d["unresolved"]))


def _verdict(fwd: dict, inv: dict, depth: int) -> str:
    if depth == 0:
        return "identity"
    if fwd["observed"] == "bounded" and inv["observed"] == "bounded":
        return "BT"
    if fwd["observed"] == "david" and inv["observed"] in ("david", "bounded"):
        return "biDavid"
    if fwd["observed"] == "david":
        return "David"
    return "non-David"


def _consistent(exp: dict, fwd: dict, inv: dict) -> bool:
    if exp["bounded_type"]:
        return fwd["observed"] == "bounded" and inv["observed"] == "bounded"
    if exp["pz"]:
        return fwd["observed"] == "david"
    return fwd["observed"] != "david"


def _stage_analyze(run: _Run, part: dict) -> dict:
    m = run.m
    if m.depth == 0:
        fs, is_ = identity_field(m.budget, m.seed, FORWARD), identity_field(m.budget, m.seed, INVERSE)
    elif m.tier == "critical":
        pair = run.grids(part)
        fs = sample_grid_field(pair, m.budget, FORWARD, m.seed, m.per_cell)
        is_ = sample_grid_field(pair, m.budget, INVERSE, m.seed, m.per_cell)
    else:
        tree = run.tree()
        fs = sample_field(tree, m.depth, m.budget, FORWARD, m.seed, m.per_cell)
        is_ = sample_field(tree, m.depth, m.budget, INVERSE, m.seed, m.per_cell)
    run.stage_dir.mkdir(parents=True, exist_ok=True)
    _save_samples(run.stage_dir / "fwd.npz", fs)
    _save_samples(run.stage_dir / "inv.npz", is_)
    fwd, inv = _direction(fs, 0.9), _direction(is_, 0.9)
    exp = arithmetic_expectation(run.terms[: m.depth + 2])
    body = {"expectation": exp, "verdict": _verdict(fwd, inv, m.depth),
            "consistent": True if m.depth == 0 else _consistent(exp, fwd, inv)}
    for key, d in (("forward", fwd), ("inverse", inv)):
        body[key] = {"observed": d["observed"], "bounded": d["bounded"], "exponential": d["exponential"],
                     "fit": d["fit_json"], "tail": d["estimate"].to_json()}
        if m.gauge != "david":
            try:
                body[key]["gauge"] = gauge_verdict(d["estimate"], m.gauge, log_gauge if m.gauge == "fd" else None)
            except YoccozError as exc:
                body[key]["gauge"] = {"passed": False, "error": str(exc)}
    if m.tier == "synthetic-rotation" and m.depth > 0:
        tree = run.tree()
        rows = level_area_rows(fs, run.terms, run.cal)
        body["level_rows"] = rows
        body["chain"] = lower_bound_chain(rows, fs, fwd["fit"], run.cal) if fwd["fit"] else {"ok": None}
        body["inverse_floor"] = inverse_area_floor(tree, m.depth)
        body["unresolved"] = {"fwd": unresolved_bound(tree, m.depth, FORWARD),
                              "inv": unresolved_bound(tree, m.depth, INVERSE)}
    else:
        body["unresolved"] = {"fwd": {"mass": fs.unresolved}, "inv": {"mass": is_.unresolved}}
    if m.tier == "critical" and m.depth > 0:
        body["order_matches"] = part["order_matches"]
        body["consistent"] = body["consistent"] and part["order_matches"]
    return body


def _write_csv(path: Path, samples: list[FieldSamples], stamp: dict):
    with open(path, "w", newline="") as fh:
        fh.write(f"# manifest_hash={stamp['manifest_hash']} calibration_id={stamp['calibration_id']} "
                 + " ".join(f"{k}={v}" for k, v in sorted(stamp["versions"].items())) + "\n")
        w = csv.writer(fh)
        w.writerow(["direction", "level", "cell", "x", "y", "K", "weight"])
        for s in samples:
            for z, n, c, k, wt in zip(s.z, s.level, s.cell, s.K, s.weight):
                w.writerow([s.direction, int(n), int(c), repr(float(z.real)), repr(float(z.imag)),
                            repr(float(k)), repr(float(wt))])


def _stage_report(run: _Run, recs: dict) -> dict:
    from . import plotting

    m, out = run.m, run.out
    out.mkdir(parents=True, exist_ok=True)
    an = recs["analyze"]
    fs = _load_samples(run.stage_dir / "fwd.npz", FORWARD)
    is_ = _load_samples(run.stage_dir / "inv.npz", INVERSE)
    files = {"report": "report.json", "samples": "samples.csv", "calibration": "calibration.json",
             "heatmap": "heatmap.svg", "tail_fwd": "tail_fwd.png", "tail_inv": "tail_inv.png",
             "levels": "levels.png"}
    _write_csv(out / files["samples"], [fs, is_], run.stamp)
    (out / files["calibration"]).write_text(dumps({**run.stamp, **run.cal.to_json()}, indent=1))
    if m.depth == 0:
        svg = render_svg(build_grid([[0.0], [0.0]], [[1.0], [1.0]]), 0)
    elif m.tier == "critical":
        pair = run.grids(recs["partition"])
        svg = render_svg(pair.source, min(pair.source.depth - 1, 5))
    else:
        svg = None
        plotting.heatmap_svg(run.tree(), m.depth, out / files["heatmap"])
    if svg is not None:
        (out / files["heatmap"]).write_text(svg)
    svgtext = (out / files["heatmap"]).read_text()
    tag = (f'<svg data-manifest-hash="{run.hash}" data-calibration-id="{run.stamp["calibration_id"]}" '
           f'data-versions="{dumps(run.stamp["versions"]).replace(chr(34), "&quot;")}" ')
    (out / files["heatmap"]).write_text(svgtext.replace("<svg ", tag, 1))
    meta = {"manifest_hash": run.hash, "calibration_id": run.stamp["calibration_id"],
            "versions": dumps(run.stamp["versions"])}
    for key, s in (("tail_fwd", fs), ("tail_inv", is_)):
        plotting.plot_tail(tail_area(s), None, out / files[key], label=f"{s.direction} estimate [{run.hash}]",
                           meta=meta)
    if m.depth > 0:
        plotting.plot_level_kmax(fs, out / files["levels"], meta=meta)
    else:
        files.pop("levels")
    report = {**run.stamp, "manifest": m.identity(), "terms": run.terms[: m.depth + 2],
              "verdict": an["verdict"], "consistent": an["consistent"],
              "estimates": {"fwd": an["forward"]["tail"], "inv": an["inverse"]["tail"]},
              "fit": {"fwd": an["forward"]["fit"], "inv": an["inverse"]["fit"]},
              "verdicts": {k: an[k] for k in ("expectation", "forward", "inverse", "unresolved",
                                              "level_rows", "chain", "inverse_floor", "order_matches")
                           if k in an},
              "calibration": run.cal.to_json(), "files": files}
    for k in ("forward", "inverse"):
        report["verdicts"][k] = {kk: vv for kk, vv in report["verdicts"][k].items() if kk not in ("tail", "fit")}
    report["extend"] = {"levels": recs["extend"]["levels"], "edges": recs["extend"]["edges"]}
    report["grid"] = recs["grid"]["levels"]
    (out / files["report"]).write_text(dumps(plain(report), indent=1))
    return {"files": files}


def run_pipeline(manifest: ExperimentManifest | dict, resume: bool = False,
                 cal: Calibration = DEFAULT_CALIBRATION) -> dict:
    """Run every stage and return the report bundle (the report dict plus output paths)."""
    m = manifest if isinstance(manifest, ExperimentManifest) else ExperimentManifest.from_dict(manifest)
    diag = validate_manifest(m)
    if diag:
        raise ManifestInvalid("; ".join(diag))
    run = _Run(m, resume, cal)
    recs = {}
    steps = {
        "tune": lambda: _stage_tune(run),
        "partition": lambda: _stage_partition(run, recs["tune"]),
        "grid": lambda: _stage_grid(run, recs["partition"]),
        "extend": lambda: _stage_extend(run, recs["partition"]),
        "analyze": lambda: _stage_analyze(run, recs["partition"]),
        "report": lambda: _stage_report(run, recs),
    }
    for stage in STAGES:
        rec = run.load(stage)
        if stage == "analyze" and rec is not None:
            if not ((run.stage_dir / "fwd.npz").exists() and (run.stage_dir / "inv.npz").exists()):
                rec = None
        if rec is None:
            try:
                rec = run.save(stage, steps[stage]())
            except StageFailure:
                raise
            except Exception as exc:
                raise StageFailure(stage, exc) from exc
        recs[stage] = rec
    report = json.loads((run.out / "report.json").read_text())
    return {"report": report, "out": str(run.out),
            "paths": {k: str(run.out / v) for k, v in recs["report"]["files"].items()}}


def passed(bundle: dict) -> bool:
    return bool(bundle["report"]["consistent"])
