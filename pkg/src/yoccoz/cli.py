"""Command-line entry point: ``yoccoz <cf|rot|dyn|grid|ext|analyze|run> ...``.

Exit codes: 0 pass, 1 verdict fail, 2 error.  Flags given on the command
line win over manifest values, which win over defaults.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import yaml

from .errors import YoccozError
from .serialize import dumps, plain

OK, FAIL, ERROR = 0, 1, 2


class _Fail(Exception):
    """A check ran and its verdict is negative."""

    def __init__(self, payload):
        super().__init__("verdict fail")
        self.payload = payload


# ------------------------------------------------------------------ helpers

def read_terms(path) -> list[int]:
    """Partial quotients from a file: a YAML/JSON list, a manifest-style ``cf`` mapping, or whitespace/comma separated ints."""
    text = Path(path).read_text()
    data = yaml.safe_load(text)
    if isinstance(data, list):
        return [int(a) for a in data]
    if isinstance(data, dict):
        from .pipeline import ExperimentManifest

        cf = data.get("cf", data)
        N = int(data.get("N", cf.get("N", 0) if isinstance(cf, dict) else 0))
        m = ExperimentManifest(cf=cf, depth=max(N - 4, 0))
        return m.terms()
    return [int(tok) for tok in text.replace(",", " ").split()]


def _params(items) -> dict:
    out = {}
    for it in items or []:
        if "=" not in it:
            raise ValueError(f"parameter {it!r} is not key=value")
        k, v = it.split("=", 1)
        out[k] = yaml.safe_load(v)
    return out


def _emit(args, payload, rows: list[dict] | None = None, svg: str | None = None):
    fmt = args.emit or "json"
    if fmt == "csv":
        if rows is None:
            raise ValueError("this command has no CSV form")
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else [], lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(plain(r))
        text = buf.getvalue()
    elif fmt == "svg":
        if svg is None:
            raise ValueError("this command has no SVG form")
        text = svg
    else:
        text = dumps(plain(payload), indent=1) + "\n"
    if args.output:
        target = Path(args.output)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text)
    else:
        sys.stdout.write(text)


def _cf_from(args) -> list[int]:
    if getattr(args, "cf_file", None):
        return read_terms(args.cf_file)
    if getattr(args, "terms", None):
        return [int(t) for t in args.terms.replace(",", " ").split()]
    raise ValueError("no rotation number specified (use --cf-file or --terms)")


# ------------------------------------------------------------------ commands

def cmd_cf(args):
    from .cf_arith import check_qn_bounds, classify, cf_expand, generate_sequence

    if args.action == "expand":
        cf = cf_expand(args.value, args.terms)
        payload = {"terms": list(cf.terms), "convergents": [list(c) for c in cf.convergents]}
        rows = [{"n": n, "a": a, "p": p, "q": q} for n, (a, (p, q)) in enumerate(zip(cf.terms, cf.convergents), 1)]
        return _emit(args, payload, rows)
    if args.action == "classify":
        terms = read_terms(args.terms_file)
        st = classify(terms, args.class_id, eps=args.eps)
        from .analysis.harness import arithmetic_expectation

        payload = {"class": st.class_id, "statistic": st.statistic, "witness_index": st.witness_index,
                   "trend": st.trend, "qn_bounds_ok": all(r.prod_b <= r.q <= r.prod_a1 for r in check_qn_bounds(terms)),
                   "reading": arithmetic_expectation(terms)}
        rows = [{"n": i + 1, "ratio": r} for i, r in enumerate(st.series)]
        return _emit(args, payload, rows)
    kw = _params(args.params)
    N = int(kw.pop("N", args.N))
    terms = generate_sequence(args.spec, N, **kw)
    return _emit(args, {"kind": args.spec, "N": N, "terms": terms},
                 [{"n": i + 1, "a": a} for i, a in enumerate(terms)])


def cmd_rot(args):
    from .rotation_side import partition_rotation, verify_rotation_bounds

    terms = _cf_from(args)
    if args.action == "partition":
        part = partition_rotation(terms, args.level)
        rows = [{"index": i, "point": repr(float(p)), "length": repr(float(L)), "kind": k}
                for i, (p, L, k) in enumerate(zip(part.points, part.lengths, part.kinds))]
        return _emit(args, {"level": args.level, "count": len(part), "rows": rows}, rows)
    rows = [plain(r) | {"ok": r.lower_ratio >= 1 and r.upper_ratio <= 1}
            for r in verify_rotation_bounds(terms, args.level)]
    ok = all(r["ok"] for r in rows)
    _emit(args, {"rows": rows, "passed": ok}, rows)
    if not ok:
        raise _Fail(rows)


def _critical_map(terms, depth, prec):
    from .critical_dynamics import CriticalMap, tune_parameter

    res = tune_parameter(terms, depth, prec=prec)
    return CriticalMap(res.t, prec), res


def cmd_dyn(args):
    from .critical_dynamics import partition_critical, verify_almost_parabolic, verify_apriori

    terms = _cf_from(args)
    prec = args.precision_bits or 256
    if args.action == "tune":
        _, res = _critical_map(terms, args.depth, prec)
        return _emit(args, {"t": str(res.t), "depth": res.depth, "steps": res.steps,
                            "bracket": [str(x) for x in res.bracket]})
    if args.action == "partition":
        fmap, _ = _critical_map(terms, args.level + 1, prec)
        part = partition_critical(fmap, terms, args.level)
        rows = [{"index": i, "point": str(p), "length": repr(float(L)), "kind": k}
                for i, (p, L, k) in enumerate(zip(part.points, part.lengths(), part.kinds))]
        return _emit(args, {"level": args.level, "count": len(part), "rows": rows}, rows)
    fmap, _ = _critical_map(terms, args.depth + 1, prec)
    if args.check == "apriori":
        rep = verify_apriori(fmap, terms, args.depth)
    else:
        rep = verify_almost_parabolic(fmap, terms, args.depth)
    payload = plain(rep)
    _emit(args, payload)
    if not rep.passed:
        raise _Fail(payload)


def _grids(args):
    """Source and target grids to ``--depth`` for the chosen tier."""
    from .analysis.harness import synthetic_pair
    from .grid_geometry import GridPair, build_grid
    from .plotting import tree_grid

    terms = _cf_from(args)
    d = args.depth
    if args.tier == "critical":
        from .critical_dynamics import OrbitCache, partition_critical
        from .rotation_side import closest_return_lengths, partition_rotation

        fmap, _ = _critical_map(terms, d + 1, args.precision_bits or 256)
        cache = OrbitCache(fmap)
        crit = [partition_critical(fmap, terms, n, cache) for n in range(d + 1)]
        rl = closest_return_lengths(terms, d + 1)
        rot = [partition_rotation(terms, n, rl=rl) for n in range(d + 1)]
        return GridPair(build_grid([[float(x) for x in p.points] for p in crit], [p.lengths() for p in crit]),
                        build_grid([p.points for p in rot], [p.lengths for p in rot]))
    tree = synthetic_pair(terms, d, args.skew)
    return GridPair(tree_grid(tree, d, "src"), tree_grid(tree, d, "tgt"))


def cmd_grid(args):
    from .grid_geometry import grid_report, render_svg

    pair = _grids(args)
    grid = pair.source if args.side == "src" else pair.target
    if args.action == "render":
        args.emit = args.emit or "svg"
        return _emit(args, {}, svg=render_svg(grid, args.render_depth))
    if args.action == "report":
        rows = grid_report(grid)
        return _emit(args, {"side": args.side, "levels": rows}, rows)
    rows = [{"level": n, "cells": len(grid.cells[n]), "band_area": grid.band_area(n),
             "min_cell_area": min(c.area() for c in grid.cells[n])} for n in range(grid.depth)]
    return _emit(args, {"side": args.side, "depth": grid.depth, "levels": rows}, rows)


def cmd_ext(args):
    from .analysis.calibration import distortion_sweep

    if args.action == "sweep":
        a_values = [int(a) for a in args.a_values.replace(",", " ").split()]
        sweep = distortion_sweep(a_values, args.samples, args.seed or 0, args.skew)
        rows = [{"a": r.a, "k": r.k, "K_max": r.K_max, "ratio": r.ratio} for r in sweep.rows]
        if args.figure:
            from .plotting import plot_sweep

            plot_sweep(sweep, args.figure)
        return _emit(args, sweep.to_json(), rows)
    import numpy as np

    from .analysis.harness import synthetic_pair
    from .extension.cell_map import YoccozCellMap

    terms = _cf_from(args)
    level, index = (int(s) for s in args.cell.split(":"))
    tree = synthetic_pair(terms, level + 1, args.skew)
    nodes = tree.enumerate_level(level)
    if not 0 <= index < len(nodes):
        raise ValueError(f"level {level} has {len(nodes)} cells")
    cp = tree.cells(nodes[index])
    cm = YoccozCellMap(cp.src, cp.tgt)
    x, y = (float(s) for s in args.point.split(","))
    z = np.array([complex(x, y)])
    w = cm.forward(z)[0]
    payload = {"cell": cm.to_json(), "point": [x, y], "image": [w.real, w.imag],
               "K": float(cm.dilatation(z)[0])}
    return _emit(args, payload, [{"x": x, "y": y, "u": w.real, "v": w.imag, "K": payload["K"]}])


def cmd_analyze(args):
    from .analysis.calibration import DEFAULT_CALIBRATION
    from .analysis.field import sample_field
    from .analysis.harness import arithmetic_expectation, log_gauge, synthetic_pair
    from .analysis.tail import bounded_verdict, fit_tail, gauge_verdict, tail_area
    from .errors import InsufficientTail
    from .plotting import heatmap_svg, plot_tail

    terms = _cf_from(args)
    seed = args.seed or 0
    tree = synthetic_pair(terms, max(args.depth, 1), args.skew)
    s = sample_field(tree, args.depth, args.budget, args.direction, seed)
    est = tail_area(s)
    v = log_gauge if args.gauge == "fd" else None
    try:
        fit = fit_tail(est, args.gauge, v)
        fit_json = fit.to_json()
    except InsufficientTail as exc:
        fit, fit_json = None, {"error": str(exc)}
    bnd = bounded_verdict(s)
    verdicts = {"bounded": bnd, "gauge": gauge_verdict(est, args.gauge, v) if fit else {"passed": False},
                "exponential": bool(fit and fit.exponential()), "expectation": arithmetic_expectation(terms[: args.depth + 2])}
    payload = {"direction": args.direction, "depth": args.depth, "budget": args.budget, "seed": seed,
               "gauge": args.gauge, "estimates": est.to_json(), "fit": fit_json, "verdicts": verdicts,
               "calibration": DEFAULT_CALIBRATION.to_json() | {"id": DEFAULT_CALIBRATION.id()}}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "tail.json").write_text(dumps(plain(payload), indent=1))
        rows = s.to_rows()
        with open(out / "samples.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        heatmap_svg(tree, max(args.depth, 1), out / "heatmap.svg")
        plot_tail(est, fit, out / "tail.png")
        payload["files"] = ["tail.json", "samples.csv", "heatmap.svg", "tail.png"]
    sys.stdout.write(dumps(plain(payload), indent=1) + "\n")
    passed = bnd["bounded"] or verdicts["gauge"]["passed"]
    if not passed:
        raise _Fail(payload)


def cmd_run(args):
    from .pipeline import ExperimentManifest, passed, run_pipeline

    m = ExperimentManifest.load(args.manifest) if args.manifest else ExperimentManifest()
    m = m.with_overrides(seed=args.seed, precision_bits=args.precision_bits, depth=args.depth,
                         budget=args.budget, gauge=args.gauge, tier=args.tier, output=args.out)
    bundle = run_pipeline(m, resume=args.resume)
    r = bundle["report"]
    sys.stdout.write(dumps({"verdict": r["verdict"], "consistent": r["consistent"],
                            "manifest_hash": r["manifest_hash"], "paths": bundle["paths"]}, indent=1) + "\n")
    if not passed(bundle):
        raise _Fail(r)


# ------------------------------------------------------------------ parser

def _global_flags(default) -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--seed", type=int, default=default)
    g.add_argument("--precision-bits", type=int, default=default)
    g.add_argument("--emit", choices=("json", "csv", "svg"), default=default)
    g.add_argument("--output", "-o", default=default, help="write the emitted text to this file")
    return g


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand; SUPPRESS keeps the later copy from
    # overwriting a value given earlier
    common = _global_flags(argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="yoccoz", description=__doc__.splitlines()[0], parents=[_global_flags(None)])
    sub = p.add_subparsers(dest="command", required=True)

    def cf_source(sp):
        sp.add_argument("--cf-file")
        sp.add_argument("--terms", help="partial quotients, comma or space separated")

    cf = sub.add_parser("cf", help="continued fractions").add_subparsers(dest="action", required=True)
    e = cf.add_parser("expand", parents=[common])
    e.add_argument("--value", required=True, help="decimal string or p/q")
    e.add_argument("--terms", type=int, default=10)
    c = cf.add_parser("classify", parents=[common])
    c.add_argument("--class", dest="class_id", required=True)
    c.add_argument("--terms-file", required=True)
    c.add_argument("--eps", type=float, default=0.0)
    g = cf.add_parser("generate", parents=[common])
    g.add_argument("--spec", required=True, help="sequence kind, e.g. stretched-exp")
    g.add_argument("--params", nargs="*", help="key=value generator parameters")
    g.add_argument("--N", type=int, default=30)

    rot = sub.add_parser("rot", help="rotation side").add_subparsers(dest="action", required=True)
    for name in ("partition", "bounds"):
        r = rot.add_parser(name, parents=[common])
        cf_source(r)
        r.add_argument("--level", type=int, required=True)

    dyn = sub.add_parser("dyn", help="critical circle map").add_subparsers(dest="action", required=True)
    t = dyn.add_parser("tune", parents=[common])
    cf_source(t)
    t.add_argument("--depth", type=int, required=True)
    d = dyn.add_parser("partition", parents=[common])
    cf_source(d)
    d.add_argument("--level", type=int, required=True)
    v = dyn.add_parser("verify", parents=[common])
    cf_source(v)
    v.add_argument("--check", choices=("apriori", "parabolic"), required=True)
    v.add_argument("--depth", type=int, default=6)

    grid = sub.add_parser("grid", help="grids and cells").add_subparsers(dest="action", required=True)
    for name in ("build", "report", "render"):
        gp = grid.add_parser(name, parents=[common])
        cf_source(gp)
        gp.add_argument("--depth", type=int, default=4)
        gp.add_argument("--tier", choices=("synthetic-rotation", "critical"), default="synthetic-rotation")
        gp.add_argument("--side", choices=("src", "tgt"), default="src")
        gp.add_argument("--skew", type=float, default=0.0)
        gp.add_argument("--render-depth", type=int, default=None)

    ext = sub.add_parser("ext", help="cell extension").add_subparsers(dest="action", required=True)
    ev = ext.add_parser("eval", parents=[common])
    cf_source(ev)
    ev.add_argument("--cell", required=True, help="level:index")
    ev.add_argument("--point", required=True, help="x,y in cell coordinates")
    ev.add_argument("--skew", type=float, default=0.0)
    sw = ext.add_parser("sweep", parents=[common])
    sw.add_argument("--a-values", default="10,100,1000,10000")
    sw.add_argument("--samples", type=int, default=10000)
    sw.add_argument("--skew", type=float, default=0.0)
    sw.add_argument("--figure", default=None, help="PNG path for the sweep plot")

    an = sub.add_parser("analyze", help="dilatation tails").add_subparsers(dest="action", required=True)
    ta = an.add_parser("tail", parents=[common])
    cf_source(ta)
    ta.add_argument("--direction", choices=("fwd", "inv"), default="fwd")
    ta.add_argument("--depth", type=int, default=10)
    ta.add_argument("--budget", type=int, default=10000)
    ta.add_argument("--gauge", choices=("david", "sd", "fd"), default="david")
    ta.add_argument("--skew", type=float, default=0.0)
    ta.add_argument("--out", default=None, help="directory for JSON, CSV, SVG and PNG outputs")

    run = sub.add_parser("run", help="full pipeline from a manifest", parents=[common])
    run.add_argument("--manifest", default=None)
    run.add_argument("--out", default=None, help="output directory (overrides the manifest)")
    run.add_argument("--resume", action="store_true")
    run.add_argument("--depth", type=int, default=None)
    run.add_argument("--budget", type=int, default=None)
    run.add_argument("--gauge", default=None)
    run.add_argument("--tier", default=None)
    return p


COMMANDS = {"cf": cmd_cf, "rot": cmd_rot, "dyn": cmd_dyn, "grid": cmd_grid, "ext": cmd_ext,
            "analyze": cmd_analyze, "run": cmd_run}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return ERROR if exc.code else OK
    try:
        COMMANDS[args.command](args)
    except _Fail:
        return FAIL
    except (YoccozError, ValueError, OSError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ERROR
    return OK


if __name__ == "__main__":
    sys.exit(main())
