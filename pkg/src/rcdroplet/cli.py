"""Command-line entry point.

Every subcommand writes its outputs into ``--out`` (a directory) and prints a
JSON summary.  Options may also come from a JSON file given with
``--config``; keys are option names (``n_list`` or ``n-list``) and explicit
flags take precedence.  Exit codes: 0 success, 2 input error, 3 infeasible or
exhausted, 4 internal invariant violation.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .circuit import droplet_stats, outermost_area, stats_to_csv
from .conditioned import ConditionSpec, enclosed_area
from .errors import InfeasibleError, InputError, InvariantError
from .harness import (
    ScanPlan, dumps, emit_plots, fit_scaling, read_rows, run_chain, run_scan, scan_csvs,
    scan_wulff, subcritical_default_p, tail_report, map_ordered, default_half_width,
)
from .lattice import BoxGeom, box_region, read_snapshot, write_snapshot
from .model import RcParams, exact_distribution, sample_fk
from .rng import make_rng
from .surgery import (
    DEFAULT_SWEEPS, gac_report, outermost_sector_path, sector_storage_replace,
    storage_shift_replace,
)
from .wulff import WulffShape, estimate_xi, wulff_with_constants

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_INVARIANT = 0, 2, 3, 4

AREA_EQ_POINTER = ("fixed-area conditioning (enclosed area exactly n^2) is not supported: the "
                   "sampler conditions on the monotone event 'enclosed area >= n^2' only; see "
                   "the README section 'Conditioning'")

GLOBAL_DEFAULTS = {"seed": 0, "threads": 1, "out": "."}
PARAM_DEFAULTS = {"p": None, "beta": None, "q": 1.0, "bc": "free"}

DEFAULTS = {
    "sample": {**PARAM_DEFAULTS, "L": 4, "sweeps": 1000},
    "exact-enum": {**PARAM_DEFAULTS, "L": 1, "full": False},
    "condition": {**PARAM_DEFAULTS, "n": None, "L": None, "sweeps": 200, "thin": 10,
                  "chains": 1, "burn_in": 200, "constraint": "area_ge", "wulff": "disc",
                  "wulff_samples": 4000},
    "measure": {"snapshot": None, "n": None, "wulff": "disc", "wulff_samples": 4000},
    "wulff-estimate": {**PARAM_DEFAULTS, "dirs": 256, "kmax": 16, "samples": 2000},
    "surgery": {"snapshot": None, "op": None, "x": None, "y": None, "F": None, "G": None,
                "shift": None, "eps": 0.1, "q0": 0.39269908169872414, "sweeps": DEFAULT_SWEEPS},
    "scan": {**PARAM_DEFAULTS, "n_list": "12,16,24,32", "samples": 200, "thin": 20, "chains": 4,
             "burn_in": 1000, "L": None, "wulff": "estimate", "wulff_samples": 4000},
    "fit": {"csv": None, "scan": None, "statistic": "mlr"},
    "report": {"csv": None, "scan": None, "n": None, "bins": 20},
}


def _add_params(sp):
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--p", type=float, help="edge parameter")
    g.add_argument("--beta", type=float, help="inverse temperature, p = 1 - exp(-2 beta)")
    sp.add_argument("--q", type=float, help="cluster weight (>= 1)")
    sp.add_argument("--bc", choices=["free", "wired"], help="boundary condition")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--threads", type=int, help="worker processes for chain fan-out")
    common.add_argument("--out", help="output directory (default .)")
    common.add_argument("--config", help="JSON file of options; flags override it")
    ap = argparse.ArgumentParser(prog="rcdroplet", argument_default=argparse.SUPPRESS,
                                 description="Random-cluster droplet laboratory")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_,
                              argument_default=argparse.SUPPRESS)

    sp = add("sample", "heat-bath sample on a box, written as a snapshot")
    _add_params(sp)
    sp.add_argument("--L", type=int, help="box half-width")
    sp.add_argument("--sweeps", type=int)

    sp = add("exact-enum", "exact law on a tiny box")
    _add_params(sp)
    sp.add_argument("--L", type=int)
    sp.add_argument("--full", action="store_true", help="also write every probability")

    sp = add("condition", "conditioned chains: per-chain CSV plus manifest")
    _add_params(sp)
    sp.add_argument("--n", type=int)
    sp.add_argument("--L", type=int, help="box half-width (default ceil(1.2 n) + 6)")
    sp.add_argument("--sweeps", type=int, help="recorded sweeps per chain")
    sp.add_argument("--thin", type=int)
    sp.add_argument("--chains", type=int)
    sp.add_argument("--burn-in", dest="burn_in", type=int)
    sp.add_argument("--constraint", help="area_ge (area_eq is rejected)")
    sp.add_argument("--wulff", help="disc, estimate, or a WulffShape JSON file")
    sp.add_argument("--wulff-samples", dest="wulff_samples", type=int)

    sp = add("measure", "droplet statistics of a snapshot")
    sp.add_argument("--snapshot")
    sp.add_argument("--n", type=int)
    sp.add_argument("--wulff")
    sp.add_argument("--wulff-samples", dest="wulff_samples", type=int)

    sp = add("wulff-estimate", "decay rates, Wulff shape and angular constants")
    _add_params(sp)
    sp.add_argument("--dirs", type=int)
    sp.add_argument("--kmax", type=int)
    sp.add_argument("--samples", type=int)

    sp = add("surgery", "apply a storage-and-replacement operation to a snapshot")
    sp.add_argument("--snapshot")
    sp.add_argument("--op", choices=["sector", "shift"])
    sp.add_argument("--x", help="vertex 'a,b'")
    sp.add_argument("--y", help="vertex 'a,b'")
    sp.add_argument("--F", help="box 'x0,y0,x1,y1'")
    sp.add_argument("--G", help="box 'x0,y0,x1,y1'")
    sp.add_argument("--shift", help="vector 'dx,dy'")
    sp.add_argument("--eps", type=float)
    sp.add_argument("--q0", type=float)
    sp.add_argument("--sweeps", type=int)

    sp = add("scan", "conditioned scan over n")
    _add_params(sp)
    sp.add_argument("--n-list", dest="n_list", help="comma-separated increasing n values")
    sp.add_argument("--samples", type=int, help="rows per n")
    sp.add_argument("--thin", type=int)
    sp.add_argument("--chains", type=int)
    sp.add_argument("--burn-in", dest="burn_in", type=int)
    sp.add_argument("--L", type=int, help="fixed box half-width (default grows with n)")
    sp.add_argument("--wulff")
    sp.add_argument("--wulff-samples", dest="wulff_samples", type=int)

    sp = add("fit", "scaling fit of a statistic against n")
    sp.add_argument("--csv", nargs="+")
    sp.add_argument("--scan", help="scan output directory")
    sp.add_argument("--statistic", choices=["mlr", "mfl"])

    sp = add("report", "fits, excess-area tail and SVG plots")
    sp.add_argument("--csv", nargs="+")
    sp.add_argument("--scan")
    sp.add_argument("--n", type=int, help="size for the tail report")
    sp.add_argument("--bins", type=int)
    return ap


def resolve_options(ns: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    given = vars(ns).copy()
    cmd = given.pop("command")
    opts = {**GLOBAL_DEFAULTS, **DEFAULTS[cmd]}
    path = given.pop("config", None)
    if path is not None:
        try:
            with open(path) as fh:
                conf = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from None
        if not isinstance(conf, dict):
            raise InputError("config must be a JSON object")
        for k, v in conf.items():
            key = k.replace("-", "_")
            if key not in opts:
                raise InputError(f"unknown option {k!r} for {cmd}")
            opts[key] = v
    opts.update(given)
    if "p" in given and opts.get("beta") is not None and "beta" not in given:
        opts["beta"] = None
    if "beta" in given and opts.get("p") is not None and "p" not in given:
        opts["p"] = None
    opts["command"] = cmd
    return opts


def _params(o: dict, default_fraction: float | None = None) -> RcParams:
    q, bc = float(o["q"]), o["bc"]
    if o.get("p") is not None and o.get("beta") is not None:
        raise InputError("--p and --beta are mutually exclusive")
    if o.get("beta") is not None:
        return RcParams.from_beta(float(o["beta"]), q, bc)
    if o.get("p") is not None:
        return RcParams(float(o["p"]), q, bc)
    if default_fraction is None:
        raise InputError("one of --p or --beta is required")
    return RcParams(subcritical_default_p(q, default_fraction), q, bc)


def _pair(text, name: str, size: int = 2) -> tuple[int, ...]:
    if text is None:
        raise InputError(f"--{name} is required")
    if isinstance(text, (list, tuple)):
        vals = list(text)
    else:
        vals = str(text).split(",")
    try:
        out = tuple(int(v) for v in vals)
    except ValueError:
        raise InputError(f"--{name} must be {size} comma-separated integers") from None
    if len(out) != size:
        raise InputError(f"--{name} must be {size} comma-separated integers")
    return out


def _need(o: dict, key: str):
    if o.get(key) is None:
        raise InputError(f"--{key.replace('_', '-')} is required")
    return o[key]


def _write(out: str, name: str, text: str) -> str:
    path = os.path.join(out, name)
    with open(path, "w") as fh:
        fh.write(text)
    return path


def _wulff(o: dict, params: RcParams | None, seed: int, out: str) -> WulffShape:
    src = o["wulff"]
    if src in ("disc", "estimate"):
        if src == "estimate" and params is None:
            raise InputError("--wulff estimate needs model parameters; pass a shape file")
        return scan_wulff(params, src, int(o["wulff_samples"]), seed=seed,
                          cache_dir=os.path.join(out, "cache"))
    try:
        with open(src) as fh:
            return WulffShape.from_json(fh.read())
    except OSError as exc:
        raise InputError(f"cannot read Wulff shape {src}: {exc}") from None


def _read_snapshot(path):
    if path is None:
        raise InputError("--snapshot is required")
    try:
        with open(path) as fh:
            return read_snapshot(fh.read())
    except OSError as exc:
        raise InputError(f"cannot read snapshot {path}: {exc}") from None


# ---------------------------------------------------------------------------
# Subcommands


def cmd_sample(o):
    params = _params(o)
    geom = BoxGeom(int(o["L"]))
    cfg = sample_fk(geom, params, int(o["sweeps"]), make_rng(o["seed"]))
    _write(o["out"], "sample.rcgrid", write_snapshot(cfg, params.p, params.q, params.bc, o["seed"]))
    meta = {"params": params.metadata(), "L": geom.half_width, "sweeps": int(o["sweeps"]),
            "seed": o["seed"], "open_edges": int(cfg.states.sum()),
            "enclosed_area": outermost_area(cfg)}
    _write(o["out"], "sample.json", dumps(meta))
    return meta


def cmd_exact_enum(o):
    params = _params(o)
    geom = BoxGeom(int(o["L"]))
    table = exact_distribution(geom, params)
    P = table.probs
    nz = P[P > 0]
    meta = {"params": params.metadata(), "L": geom.half_width, "edges": geom.n_edges,
            "configurations": int(len(P)),
            "mean_open_edges": float(P @ table.states.sum(axis=1)),
            "edge_marginals": (P @ table.states).tolist(),
            "entropy": float(-(nz * np.log(nz)).sum()),
            "max_probability": float(P.max())}
    _write(o["out"], "exact.json", dumps(meta))
    if o["full"]:
        _write(o["out"], "exact_probs.json", dumps(P.tolist()))
    return {k: meta[k] for k in ("edges", "configurations", "mean_open_edges", "entropy")}


def cmd_condition(o):
    if o["constraint"] != "area_ge":
        raise InputError(AREA_EQ_POINTER)
    params = _params(o, 0.7)
    n = int(_need(o, "n"))
    L = int(o["L"]) if o["L"] is not None else default_half_width(n)
    ConditionSpec(n).check_box(BoxGeom(L))
    sweeps, thin, chains = int(o["sweeps"]), int(o["thin"]), int(o["chains"])
    if thin < 1 or chains < 1 or sweeps < 0 or int(o["burn_in"]) < 0:
        raise InputError("thin and chains must be >= 1, sweeps and burn-in >= 0")
    w = _wulff(o, params, o["seed"], o["out"])
    t0 = time.perf_counter()
    items = [(n, c, params, o["seed"], L, int(o["burn_in"]), sweeps, thin, w.boundary, w.q0, w.c0)
             for c in range(chains)]
    runs = map_ordered(_run_chain_tuple, items, o["threads"])
    manifest = {"version": __version__, "command": "condition", "params": params.metadata(),
                "n": n, "L": L, "sweeps": sweeps, "thin": thin, "burn_in": int(o["burn_in"]),
                "wulff": {"source": o["wulff"], "q0": w.q0, "c0": w.c0},
                "assumptions": ["single-edge dynamics restricted to the area event is assumed "
                                "irreducible (probed, not proved)"],
                "chains": []}
    for r in runs:
        name = f"chain{r.chain}.csv"
        _write(o["out"], name, stats_to_csv(r.rows))
        manifest["chains"].append({"chain": r.chain, "seed": o["seed"], "stream": r.stream,
                                   "csv": name, "rows": len(r.rows), **r.counters})
    _write(o["out"], "manifest.json", dumps(manifest))
    _write(o["out"], "timings.json",
           dumps({"wall_clock_seconds": time.perf_counter() - t0,
                  "chains": [r.seconds for r in runs]}))
    return {"n": n, "rows": sum(len(r.rows) for r in runs),
            "acceptance": [r.counters["acceptance"] for r in runs]}


def _run_chain_tuple(args):
    return run_chain(*args)


def cmd_measure(o):
    snap = _read_snapshot(o["snapshot"])
    n = int(_need(o, "n"))
    params = RcParams(snap.p, snap.q, snap.bc) if o["wulff"] == "estimate" else None
    w = _wulff(o, params, o["seed"], o["out"])
    if enclosed_area(snap.cfg) == 0:
        raise InfeasibleError("the origin is not enclosed by an open circuit in this snapshot")
    row = droplet_stats(snap.cfg, n, w.boundary, w.q0, w.c0, snap.seed, 0, 0)
    _write(o["out"], "measure.csv", stats_to_csv([row]))
    return {"area": row.area, "exc": row.exc, "mlr": row.mlr, "mfl": row.mfl, "gd": row.gd}


def cmd_wulff_estimate(o):
    params = _params(o)
    xi = estimate_xi(params, dirs=int(o["dirs"]), kmax=int(o["kmax"]),
                     samples=int(o["samples"]), seed=o["seed"])
    w = wulff_with_constants(xi)
    _write(o["out"], "xi.json", xi.to_json())
    _write(o["out"], "wulff.json", w.to_json())
    return {"q0": w.q0, "c0": w.c0, "xi_min": float(np.min(xi.xi)), "xi_max": float(np.max(xi.xi)),
            "flagged_directions": int(np.sum(xi.flagged))}


def _path_summary(cfg, x, y, eps, q0):
    path = outermost_sector_path(cfg, x, y)
    rep = gac_report(cfg, x, y, eps, q0)
    return {"sector_path": path is not None, "sector_path_length": 0 if path is None else len(path) - 1,
            "gac": rep.holds, "connected": rep.connected, "confined": rep.confined,
            "diameter_ok": rep.diameter_ok, "area_ok": rep.area_ok,
            "captured_area": rep.captured_area, "required_area": rep.required_area}


def cmd_surgery(o):
    snap = _read_snapshot(o["snapshot"])
    params = RcParams(snap.p, snap.q, snap.bc)
    cfg, geom = snap.cfg, snap.cfg.geom
    rng = make_rng(o["seed"])
    sweeps, eps, q0 = int(o["sweeps"]), float(o["eps"]), float(o["q0"])
    op = _need(o, "op")
    verdict = {"op": op, "seed": o["seed"], "sweeps": sweeps, "eps": eps, "q0": q0}
    x = _pair(o["x"], "x") if o["x"] is not None else None
    y = _pair(o["y"], "y") if o["y"] is not None else None
    if op == "sector":
        if x is None or y is None:
            raise InputError("--op sector needs --x and --y")
        res = sector_storage_replace(cfg, x, y, params, rng, sweeps)
        keep = np.ones(geom.n_edges, dtype=bool)
        keep[res.resampled_edges] = False
        verdict["complement_unchanged"] = bool(np.array_equal(res.full.states[keep], cfg.states[keep]))
    elif op == "shift":
        F = box_region(geom, *_split_box(_pair(o["F"], "F", 4)))
        G = box_region(geom, *_split_box(_pair(o["G"], "G", 4)))
        shift = _pair(o["shift"], "shift")
        res = storage_shift_replace(cfg, F, G, shift, params, rng, sweeps)
        verdict["F_preserved"] = bool(np.array_equal(res.full.states[F.edge_ids], cfg.states[F.edge_ids]))
        verdict["G_copied"] = bool(np.array_equal(res.full.states[G.shift_map(shift)],
                                                  cfg.states[G.edge_ids]))
    else:
        raise InputError("--op must be sector or shift")
    verdict.update({"label": res.label, "stored_edges": int(len(res.stored_edges)),
                    "resampled_edges": int(len(res.resampled_edges)), "rng": res.rng_info})
    if x is not None and y is not None:
        verdict["before"] = _path_summary(cfg, x, y, eps, q0)
        verdict["after"] = _path_summary(res.full, x, y, eps, q0)
    _write(o["out"], "surgery.rcgrid", write_snapshot(res.full, snap.p, snap.q, snap.bc, o["seed"]))
    _write(o["out"], "stored.json", dumps({"edges": res.stored_edges.tolist(),
                                           "states": res.stored.astype(int).tolist()}))
    _write(o["out"], "verdict.json", dumps(verdict))
    return verdict


def _split_box(b):
    return (b[0], b[1]), (b[2], b[3])


def cmd_scan(o):
    params = _params(o, 0.7)
    try:
        n_list = [int(v) for v in (o["n_list"].split(",") if isinstance(o["n_list"], str)
                                   else o["n_list"])]
    except ValueError:
        raise InputError("--n-list must be comma-separated integers") from None
    plan = ScanPlan.for_samples(n_list, params, int(o["samples"]), int(o["thin"]),
                                int(o["chains"]), out=o["out"], seed=o["seed"],
                                burn_in=int(o["burn_in"]),
                                half_width=None if o["L"] is None else int(o["L"]),
                                wulff_source=o["wulff"], wulff_samples=int(o["wulff_samples"]))
    man = run_scan(plan, threads=int(o["threads"]))
    return {"sizes": {n: s["rows"] for n, s in man["sizes"].items()}, "errors": man["errors"]}


def _rows(o):
    if o.get("csv"):
        return read_rows(o["csv"])
    if o.get("scan"):
        return read_rows(scan_csvs(o["scan"]))
    raise InputError("pass --csv files or --scan directory")


def cmd_fit(o):
    rep = fit_scaling(_rows(o), o["statistic"])
    _write(o["out"], f"fit_{rep.statistic}.json", rep.to_json())
    return {"statistic": rep.statistic, "exponent": rep.exponent, "exponent_se": rep.exponent_se,
            "corrected": [rep.corrected_exponent, rep.corrected_log_power],
            "ratio_spread": rep.ratio_spread}


def cmd_report(o):
    rows = _rows(o)
    counts = {}
    for r in rows:
        counts[r.n] = counts.get(r.n, 0) + 1
    summary, reports, errors = {}, [], {}
    for stat in ("mlr", "mfl"):
        try:
            rep = fit_scaling(rows, stat)
        except InputError as exc:
            errors[f"fit_{stat}"] = str(exc)
            continue
        reports.append(rep)
        _write(o["out"], f"fit_{stat}.json", rep.to_json())
        summary[f"{stat}_exponent"] = rep.exponent
    n = int(o["n"]) if o["n"] is not None else max(sorted(counts), key=lambda k: counts[k])
    try:
        tail = tail_report(rows, "exc", n=n, bins=int(o["bins"]), seed=o["seed"])
        reports.append(tail)
        _write(o["out"], f"tail_exc_n{n}.json", tail.to_json())
        summary["tail_slope"] = tail.slope
        summary["tail_slope_ci"] = tail.slope_ci
    except InputError as exc:
        errors["tail"] = str(exc)
    plots = emit_plots(reports, o["out"])
    summary.update({"plots": [os.path.basename(p) for p in plots], "errors": errors})
    _write(o["out"], "report.json", dumps(summary))
    return summary


COMMANDS = {
    "sample": cmd_sample, "exact-enum": cmd_exact_enum, "condition": cmd_condition,
    "measure": cmd_measure, "wulff-estimate": cmd_wulff_estimate, "surgery": cmd_surgery,
    "scan": cmd_scan, "fit": cmd_fit, "report": cmd_report,
}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_INPUT
    try:
        o = resolve_options(ns)
        os.makedirs(o["out"], exist_ok=True)
        o["seed"] = int(o["seed"])
        o["threads"] = int(o["threads"])
        summary = COMMANDS[o["command"]](o)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except InvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    print(json.dumps(summary, sort_keys=True, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
