"""Experiment driver: conditioned scans over n, scaling fits, tail reports and SVG plots.

Every output that a rerun must reproduce byte for byte (CSV tables, the run
manifest, fit and tail JSON, SVG files) is a pure function of the plan and its
seed.  Wall-clock timings go to a separate ``timings.json`` sidecar.
"""
from __future__ import annotations

import json
import math
import os
import time
import xml.sax.saxutils as sx
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .circuit import DropletStats, droplet_stats, stats_from_csv, stats_to_csv, validate_row
from .conditioned import ConditionSpec, ConstrainedChain
from .errors import InputError, InvariantError
from .lattice import BoxGeom
from .model import RcParams, critical_point
from .rng import make_rng
from .wulff import WulffShape, disc_wulff, estimate_xi, wulff_with_constants

MIN_FIT_SAMPLES = 50
MIN_TAIL_SAMPLES = 200
STREAM_STRIDE = 1 << 16

NORMALIZATIONS = {
    # statistic -> (label, exponent of n, exponent of log n)
    "mlr": ("n^(1/3) (log n)^(2/3)", 1.0 / 3.0, 2.0 / 3.0),
    "mfl": ("n^(2/3) (log n)^(1/3)", 2.0 / 3.0, 1.0 / 3.0),
}


def dumps(obj) -> str:
    """Canonical JSON text (sorted keys, fixed indentation, trailing newline)."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def default_half_width(n: int) -> int:
    """Box half-width leaving room for the droplet to wander: the centre is not pinned."""
    return int(math.ceil(1.2 * n)) + 6


def chain_stream(n: int, chain: int) -> int:
    """RNG stream of chain ``chain`` at size ``n``; independent of the rest of the plan."""
    return int(n) * STREAM_STRIDE + int(chain)


# ---------------------------------------------------------------------------
# Wulff reference shape


def scan_wulff(params: RcParams, source: str = "estimate", samples: int = 4000, kmax: int = 16,
               seed: int = 0, cache_dir: str | None = None) -> WulffShape:
    """Reference shape for the droplet statistics.

    ``source`` is ``"estimate"`` (decay rates measured at ``params``) or
    ``"disc"``.  Estimates are cached as JSON keyed by ``(p, q, kmax, samples, seed)``.
    """
    if source == "disc":
        return disc_wulff()
    if source != "estimate":
        raise InputError(f"unknown Wulff source {source!r}")
    path = None
    if cache_dir is not None:
        key = f"wulff_p{params.p!r}_q{params.q!r}_k{kmax}_s{samples}_seed{seed}.json"
        path = os.path.join(cache_dir, key)
        if os.path.exists(path):
            with open(path) as fh:
                return WulffShape.from_json(fh.read())
    w = wulff_with_constants(estimate_xi(params, kmax=kmax, samples=samples, seed=seed))
    if path is not None:
        os.makedirs(cache_dir, exist_ok=True)
        with open(path, "w") as fh:
            fh.write(w.to_json())
    return w


# ---------------------------------------------------------------------------
# Conditioned runs


@dataclass
class ChainRun:
    n: int
    chain: int
    stream: int
    rows: list
    counters: dict
    seconds: float


def run_chain(n: int, chain: int, params: RcParams, seed: int, half_width: int, burn_in: int,
              sweeps: int, thin: int, boundary: np.ndarray, q0: float, c0: float) -> ChainRun:
    """One conditioned chain at size ``n``: burn in, then record every ``thin``-th sweep."""
    t0 = time.perf_counter()
    stream = chain_stream(n, chain)
    geom = BoxGeom(half_width)
    spec = ConditionSpec(n)
    spec.check_box(geom)
    ch = ConstrainedChain(geom, params, spec, make_rng(seed, stream))
    ch.run(burn_in)
    rows = []
    for k in range(sweeps // thin):
        ch.run(thin)
        rows.append(droplet_stats(ch.config, n, boundary, q0, c0, seed, stream, k))
    c = ch.counters
    counters = {"sweeps": c.sweeps, "proposed": c.proposed, "rejected": c.rejected,
                "recomputed": c.recomputed, "acceptance": c.acceptance}
    return ChainRun(n, chain, stream, rows, counters, time.perf_counter() - t0)


def _run_chain_args(args):
    return run_chain(*args)


def map_ordered(fn, items, threads: int):
    """``[fn(x) for x in items]``, fanned out over ``threads`` processes, in input order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


@dataclass
class ScanPlan:
    """A scan over droplet sizes.

    Each ``n`` runs ``chains`` conditioned chains of ``burn_in + sweeps``
    sweeps recording every ``thin``-th sweep, so ``chains * (sweeps // thin)``
    rows per ``n``; this must reach ``samples_per_n``.
    """

    n_list: list[int]
    params: RcParams
    samples_per_n: int
    sweeps: int
    thin: int = 1
    chains: int = 1
    out: str = "scan"
    seed: int = 0
    burn_in: int = 0
    half_width: int | None = None
    wulff_source: str = "estimate"
    wulff_samples: int = 4000

    def __post_init__(self):
        self.n_list = [int(n) for n in self.n_list]
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise InputError("n_list must be strictly increasing")
        if any(n < 1 for n in self.n_list):
            raise InputError("n values must be positive")
        if self.thin < 1 or self.chains < 1 or self.sweeps < 0 or self.burn_in < 0:
            raise InputError("thin and chains must be >= 1, sweeps and burn_in >= 0")
        if self.rows_per_n < self.samples_per_n:
            raise InputError(f"chains * (sweeps // thin) = {self.rows_per_n} rows per n "
                             f"< samples_per_n = {self.samples_per_n}")

    @classmethod
    def for_samples(cls, n_list, params: RcParams, samples_per_n: int, thin: int, chains: int,
                    **kw) -> "ScanPlan":
        per_chain = -(-samples_per_n // chains)
        return cls(list(n_list), params, samples_per_n, per_chain * thin, thin, chains, **kw)

    @property
    def rows_per_n(self) -> int:
        return self.chains * (self.sweeps // self.thin)

    def box(self, n: int) -> int:
        return self.half_width if self.half_width is not None else default_half_width(n)

    def describe(self) -> dict:
        d = asdict(self)
        d["params"] = self.params.metadata()
        d.pop("out")
        return d


def csv_name(n: int) -> str:
    return f"stats_n{n}.csv"


def run_scan(plan: ScanPlan, threads: int = 1, wulff: WulffShape | None = None) -> dict:
    """Run the plan and write ``stats_n<n>.csv`` per size, ``manifest.json`` and ``timings.json``.

    Sizes that cannot be run (box too small, warm start impossible) are
    recorded in the manifest and the scan continues.  Returns the manifest.
    """
    os.makedirs(plan.out, exist_ok=True)
    t0 = time.perf_counter()
    if wulff is None and plan.n_list:
        wulff = scan_wulff(plan.params, plan.wulff_source, plan.wulff_samples, seed=plan.seed,
                           cache_dir=os.path.join(plan.out, "cache"))
    manifest = {"version": __version__, "plan": plan.describe(), "sizes": {}, "errors": {},
                "assumptions": ["single-edge dynamics restricted to the area event is "
                                "assumed irreducible (probed, not proved)",
                                "droplet centre measured, not imposed"]}
    if wulff is not None:
        manifest["wulff"] = {"q0": wulff.q0, "c0": wulff.c0, "meta": wulff.meta}
    timings = {"chains": {}}
    items, sizes = [], []
    for n in plan.n_list:
        L = plan.box(n)
        try:
            ConditionSpec(n).check_box(BoxGeom(L))
        except InputError as exc:
            manifest["errors"][str(n)] = str(exc)
            continue
        sizes.append(n)
        for c in range(plan.chains):
            items.append((n, c, plan.params, plan.seed, L, plan.burn_in, plan.sweeps, plan.thin,
                          wulff.boundary, wulff.q0, wulff.c0))
    runs = map_ordered(_run_chain_args, items, threads)
    for n in sizes:
        mine = [r for r in runs if r.n == n]
        rows = [row for r in mine for row in r.rows]
        bad = [(row.stream, row.sample, v) for row in rows for v in validate_row(row)]
        if bad:
            raise InvariantError(f"invalid rows at n = {n}: {bad[:5]}")
        with open(os.path.join(plan.out, csv_name(n)), "w") as fh:
            fh.write(stats_to_csv(rows))
        manifest["sizes"][str(n)] = {
            "half_width": plan.box(n), "rows": len(rows), "csv": csv_name(n),
            "chains": [{"chain": r.chain, "seed": plan.seed, "stream": r.stream, **r.counters}
                       for r in mine],
        }
        timings["chains"][str(n)] = [r.seconds for r in mine]
    timings["total_seconds"] = time.perf_counter() - t0
    with open(os.path.join(plan.out, "manifest.json"), "w") as fh:
        fh.write(dumps(manifest))
    with open(os.path.join(plan.out, "timings.json"), "w") as fh:
        fh.write(dumps(timings))
    return manifest


def read_rows(paths) -> list[DropletStats]:
    """Rows of one or more DropletStats CSV files, in the given order."""
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    rows = []
    for p in paths:
        with open(p) as fh:
            rows.extend(stats_from_csv(fh.read()))
    return rows


def scan_csvs(out: str) -> list[str]:
    """CSV files listed in a scan manifest, in increasing n."""
    with open(os.path.join(out, "manifest.json")) as fh:
        man = json.load(fh)
    sizes = sorted(man["sizes"].items(), key=lambda kv: int(kv[0]))
    return [os.path.join(out, s["csv"]) for _, s in sizes]


# ---------------------------------------------------------------------------
# Scaling fits


@dataclass
class FitReport:
    """Medians of a statistic against n with pure and log-corrected power-law fits.

    The corrected form is ``log m = a + b log n + c log log n``; ``ratios``
    are medians of the statistic divided by its reference normalization.
    """

    statistic: str
    ns: list
    counts: list
    medians: list
    q25: list
    q75: list
    exponent: float
    exponent_se: float
    prefactor: float
    residuals: list
    corrected_exponent: float
    corrected_log_power: float
    corrected_residuals: list
    normalization: str
    ratios: list
    ratio_spread: float

    def to_json(self) -> str:
        return dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "FitReport":
        return cls(**json.loads(text))

    def exponent_ci(self, z: float = 1.96) -> tuple[float, float]:
        return self.exponent - z * self.exponent_se, self.exponent + z * self.exponent_se


def _group(rows, statistic: str) -> dict[int, np.ndarray]:
    if not rows:
        raise InputError("no rows")
    if not hasattr(rows[0], statistic):
        raise InputError(f"unknown statistic {statistic!r}")
    groups: dict[int, list] = {}
    for r in rows:
        groups.setdefault(int(r.n), []).append(float(getattr(r, statistic)))
    return {n: np.asarray(v) for n, v in sorted(groups.items())}


def fit_scaling(rows, statistic: str = "mlr", min_samples: int = MIN_FIT_SAMPLES) -> FitReport:
    """Least-squares fits of log median(statistic) on log n."""
    if statistic not in NORMALIZATIONS:
        raise InputError(f"statistic must be one of {sorted(NORMALIZATIONS)}")
    groups = _group(rows, statistic)
    if len(groups) < 3:
        raise InputError(f"need at least 3 distinct n values, got {len(groups)}")
    small = {n: len(v) for n, v in groups.items() if len(v) < min_samples}
    if small:
        raise InputError(f"fewer than {min_samples} samples at n = {small}")
    ns = np.array(list(groups), dtype=float)
    med = np.array([np.median(v) for v in groups.values()])
    q25 = np.array([np.percentile(v, 25) for v in groups.values()])
    q75 = np.array([np.percentile(v, 75) for v in groups.values()])
    if np.any(med <= 0):
        raise InputError("medians must be positive for a log-log fit")
    if np.ptp(med) == 0:
        raise InputError("degenerate data: the medians do not vary with n")
    if np.any(ns <= 1):
        raise InputError("n must exceed 1 for the log-corrected form")
    x, y = np.log(ns), np.log(med)
    A = np.stack([np.ones_like(x), x], 1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    dof = len(x) - 2
    s2 = float(res @ res) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(A.T @ A)
    B = np.stack([np.ones_like(x), x, np.log(x)], 1)
    ccoef, *_ = np.linalg.lstsq(B, y, rcond=None)
    cres = y - B @ ccoef
    label, a, b = NORMALIZATIONS[statistic]
    ratios = med / (ns**a * np.log(ns) ** b)
    return FitReport(
        statistic=statistic, ns=[int(n) for n in ns], counts=[len(v) for v in groups.values()],
        medians=med.tolist(), q25=q25.tolist(), q75=q75.tolist(),
        exponent=float(coef[1]), exponent_se=float(math.sqrt(cov[1, 1])),
        prefactor=float(math.exp(coef[0])), residuals=res.tolist(),
        corrected_exponent=float(ccoef[1]), corrected_log_power=float(ccoef[2]),
        corrected_residuals=cres.tolist(), normalization=label, ratios=ratios.tolist(),
        ratio_spread=float(ratios.max() / ratios.min()),
    )


# ---------------------------------------------------------------------------
# Tail of the excess area


@dataclass
class TailReport:
    """Empirical survival ``P(stat / n >= t)`` on a grid and a linear fit of its logarithm.

    The fit uses the grid points holding at least ``min_count`` samples;
    its 95% interval comes from a moving-block bootstrap over rows in file
    order (blocks absorb the correlation of successive chain samples).
    ``plateaus`` lists grid indices where the survival does not drop.
    """

    statistic: str
    n: int
    samples: int
    t: list
    survival: list
    log_survival: list
    fit_points: int
    slope: float | None
    intercept: float | None
    slope_ci: list | None
    plateaus: list
    decreasing: bool

    def to_json(self) -> str:
        return dumps(asdict(self))


def _survival(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    xs = np.sort(x)
    return (len(xs) - np.searchsorted(xs, t, side="left")) / len(xs)


def _tail_fit(x: np.ndarray, t: np.ndarray, min_count: int):
    S = _survival(x, t)
    use = S * len(x) >= min_count
    if use.sum() < 2:
        return None
    tt, ly = t[use], np.log(S[use])
    if np.ptp(ly) == 0:
        return None
    b, a = np.polyfit(tt, ly, 1)
    return float(b), float(a)


def tail_report(rows, statistic: str = "exc", n: int | None = None, bins: int = 20,
                t_max: float | None = None, min_count: int = 5, block: int = 10,
                boot: int = 1000, seed: int = 0,
                min_samples: int = MIN_TAIL_SAMPLES) -> TailReport:
    """Binned survival of ``statistic / n`` with a log-linear fit."""
    groups = _group(rows, statistic)
    if n is None:
        if len(groups) != 1:
            raise InputError(f"rows hold several n values {sorted(groups)}; choose one")
        n = next(iter(groups))
    if n not in groups:
        raise InputError(f"no rows at n = {n}")
    x = groups[n] / n
    if len(x) < min_samples:
        raise InputError(f"need at least {min_samples} samples at n = {n}, got {len(x)}")
    if t_max is None:
        xs = np.sort(x)
        t_max = float(xs[-min_count]) if xs[-min_count] > 0 else 1.0 / n
    t = np.linspace(0.0, t_max, bins + 1)
    S = _survival(x, t)
    with np.errstate(divide="ignore"):
        logS = np.log(S)
    plateaus = [int(k) for k in range(1, len(S)) if S[k] >= S[k - 1]]
    fit = _tail_fit(x, t, min_count)
    slope = intercept = ci = None
    fit_points = int((S * len(x) >= min_count).sum())
    if fit is not None:
        slope, intercept = fit
        rng = make_rng(seed, 0)
        nb = -(-len(x) // block)
        starts_max = len(x) - block + 1
        boots = []
        for _ in range(boot):
            starts = rng.integers(0, starts_max, nb)
            xb = np.concatenate([x[s:s + block] for s in starts])[: len(x)]
            f = _tail_fit(xb, t, min_count)
            if f is not None:
                boots.append(f[0])
        if boots:
            ci = [float(np.percentile(boots, 2.5)), float(np.percentile(boots, 97.5))]
    return TailReport(statistic, int(n), int(len(x)), t.tolist(), S.tolist(),
                      [float(v) for v in logS], fit_points, slope, intercept, ci, plateaus,
                      bool(S[-1] < S[0]))


# ---------------------------------------------------------------------------
# SVG plots

WIDTH, HEIGHT, MARGIN = 480, 360, 50


@dataclass
class Series:
    label: str
    xs: list
    ys: list
    style: str = "points"  # points or line


@dataclass
class Plot:
    title: str
    xlabel: str
    ylabel: str
    series: list = field(default_factory=list)
    logx: bool = False
    logy: bool = False


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    return [lo + (hi - lo) * k / (count - 1) for k in range(count)]


def render_svg(plot: Plot) -> str:
    """Self-contained SVG.  Each point is a ``circle`` whose centre maps back to data
    through the affine transform recorded on the ``plot-area`` group."""
    tx = (lambda v: math.log10(v)) if plot.logx else float
    ty = (lambda v: math.log10(v)) if plot.logy else float
    pts = [(float(tx(x)), float(ty(y))) for s in plot.series for x, y in zip(s.xs, s.ys)
           if (not plot.logx or x > 0) and (not plot.logy or y > 0)]
    if pts:
        X, Y = np.array(pts).T
        x0, x1, y0, y1 = float(X.min()), float(X.max()), float(Y.min()), float(Y.max())
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    w, h = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN
    sx_, sy_ = w / (x1 - x0), -h / (y1 - y0)
    ox, oy = MARGIN - x0 * sx_, HEIGHT - MARGIN - y0 * sy_

    def px(u):
        return ox + sx_ * u

    def py(v):
        return oy + sy_ * v

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<title>{sx.escape(plot.title)}</title>',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<line class="axis" x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" '
           f'y2="{HEIGHT - MARGIN}" stroke="black"/>',
           f'<line class="axis" x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" '
           f'y2="{HEIGHT - MARGIN}" stroke="black"/>']
    for u in _ticks(x0, x1):
        lab = f"{10 ** u:.3g}" if plot.logx else f"{u:.3g}"
        out.append(f'<text x="{px(u):.3f}" y="{HEIGHT - MARGIN + 16}" font-size="10" '
                   f'text-anchor="middle">{lab}</text>')
    for v in _ticks(y0, y1):
        lab = f"{10 ** v:.3g}" if plot.logy else f"{v:.3g}"
        out.append(f'<text x="{MARGIN - 6}" y="{py(v) + 3:.3f}" font-size="10" '
                   f'text-anchor="end">{lab}</text>')
    out.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 10}" font-size="12" '
               f'text-anchor="middle">{sx.escape(plot.xlabel)}</text>')
    out.append(f'<text x="14" y="{HEIGHT / 2}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 14 {HEIGHT / 2})">{sx.escape(plot.ylabel)}</text>')
    out.append(f'<text x="{WIDTH / 2}" y="20" font-size="13" '
               f'text-anchor="middle">{sx.escape(plot.title)}</text>')
    out.append(f'<g class="plot-area" data-ox="{ox!r}" data-oy="{oy!r}" data-sx="{sx_!r}" '
               f'data-sy="{sy_!r}" data-logx="{int(plot.logx)}" data-logy="{int(plot.logy)}">')
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    for k, s in enumerate(plot.series):
        col = colours[k % len(colours)]
        keep = [(float(tx(x)), float(ty(y))) for x, y in zip(s.xs, s.ys)
                if (not plot.logx or x > 0) and (not plot.logy or y > 0)]
        out.append(f'<g class="series" data-label="{sx.escape(s.label)}">')
        if s.style == "line" and len(keep) > 1:
            d = " ".join(f"{px(u)!r},{py(v)!r}" for u, v in keep)
            out.append(f'<polyline points="{d}" fill="none" stroke="{col}"/>')
        else:
            for u, v in keep:
                out.append(f'<circle cx="{px(u)!r}" cy="{py(v)!r}" r="3" fill="{col}"/>')
        out.append("</g>")
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def fit_plot(rep: FitReport) -> Plot:
    pl = Plot(f"median {rep.statistic} vs n", "n", rep.statistic, logx=True, logy=True)
    pl.series.append(Series("median", rep.ns, rep.medians))
    fitted = [rep.prefactor * n**rep.exponent for n in rep.ns]
    pl.series.append(Series(f"power law, exponent {rep.exponent:.3f}", rep.ns, fitted, "line"))
    return pl


def tail_plot(rep: TailReport) -> Plot:
    pl = Plot(f"survival of {rep.statistic}/n at n = {rep.n}", "t", "P(stat/n >= t)", logy=True)
    pl.series.append(Series("empirical", rep.t, rep.survival))
    if rep.slope is not None:
        pl.series.append(Series(f"fit, slope {rep.slope:.3f}", rep.t,
                                [math.exp(rep.intercept + rep.slope * t) for t in rep.t], "line"))
    return pl


def emit_plots(reports, out_dir: str) -> list[str]:
    """Write one SVG per report (FitReport, TailReport or Plot); returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for k, rep in enumerate(reports):
        if isinstance(rep, FitReport):
            plot, name = fit_plot(rep), f"fit_{rep.statistic}.svg"
        elif isinstance(rep, TailReport):
            plot, name = tail_plot(rep), f"tail_{rep.statistic}_n{rep.n}.svg"
        elif isinstance(rep, Plot):
            plot, name = rep, f"plot_{k}.svg"
        else:
            raise InputError(f"cannot plot {type(rep).__name__}")
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            fh.write(render_svg(plot))
        paths.append(path)
    return paths


def subcritical_default_p(q: float, fraction: float = 0.7) -> float:
    return fraction * critical_point(q)[0]


__all__ = [
    "ScanPlan", "FitReport", "TailReport", "Plot", "Series", "run_scan", "fit_scaling",
    "tail_report", "emit_plots", "render_svg", "read_rows", "scan_csvs", "scan_wulff",
    "default_half_width", "chain_stream",
]
