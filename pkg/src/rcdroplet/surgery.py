"""Configuration surgery: sector resampling, shift-and-resample, area capture and pair location.

Two random operations map a configuration ``cfg`` to a pair ``(full, stored)``:

* sector replacement stores the sector's contents and resamples the sector
  given everything outside it;
* shift replacement keeps ``F``, copies ``G`` translated by ``shift`` and
  resamples the rest given those assigned edges, storing what lay off
  ``F`` and ``G``.

Both act on the finite box: edges outside the box never exist, which plays the
role of a free (or wired, per ``params``) boundary.  At ``q = 1`` resampling is
exact; at ``q > 1`` it runs heat-bath sweeps over the resampled edges from the
all-closed state with everything else frozen, so the new contents never look at
the stored ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import Circuit, in_backward_cone, in_forward_cone, theta_rg_max
from .errors import InputError
from .lattice import BondConfig, BoxGeom, Region, component_labels, sector_region, sweep_class
from .model import RcParams, SweepWorkspace, exact_distribution

DEFAULT_SWEEPS = 200


@dataclass
class SurgeryOutcome:
    """Result of a surgery operation.

    ``full`` is the new configuration on the whole box; ``stored`` holds the
    input's states on ``stored_edges`` (same order).  ``resampled_edges`` were
    redrawn; ``rng_info`` records how.
    """

    full: BondConfig
    stored: np.ndarray
    stored_edges: np.ndarray
    resampled_edges: np.ndarray
    label: str
    rng_info: dict = field(default_factory=dict)

    def stored_config(self) -> dict[int, bool]:
        return {int(e): bool(s) for e, s in zip(self.stored_edges, self.stored)}


def resample_edges(states: np.ndarray, edges: np.ndarray, geom: BoxGeom, params: RcParams,
                   rng: np.random.Generator, sweeps: int = DEFAULT_SWEEPS) -> None:
    """Redraw ``states[edges]`` in place from the law conditional on all other edges.

    Exact at ``q = 1``; otherwise ``sweeps`` heat-bath passes over ``edges``
    (ascending id order) starting from all closed.
    """
    edges = np.asarray(edges, dtype=np.int64)
    if len(edges) == 0:
        return
    if params.q == 1.0:
        states[edges] = rng.random(len(edges)) < params.p
        return
    if sweeps < 1:
        raise InputError("sweeps must be >= 1")
    work = states.astype(np.uint8)
    work[edges] = 0
    ws = SweepWorkspace(geom)
    for _ in range(sweeps):
        ws.sweep_edges(work, edges, rng.random(len(edges)), params)
    states[edges] = work[edges].astype(bool)


def sector_storage_replace(cfg: BondConfig, x, y, params: RcParams, rng: np.random.Generator,
                           sweeps: int = DEFAULT_SWEEPS) -> SurgeryOutcome:
    """Store the sector from ``x`` ccw to ``y`` and resample it given its complement."""
    x, y = _vertex(x), _vertex(y)
    if x == (0, 0) or y == (0, 0):
        raise InputError("sector endpoints must be nonzero")
    sweep_class(x, y)  # raises on parallel endpoints
    sector = sector_region(cfg.geom, x, y).edge_ids
    states = cfg.states.copy()
    resample_edges(states, sector, cfg.geom, params, rng, sweeps)
    return SurgeryOutcome(BondConfig(cfg.geom, states), cfg.states[sector].copy(), sector, sector,
                          f"sector{x}->{y}", _rng_info(params, sweeps))


def shift_assignment(F: Region, G: Region, shift) -> tuple[np.ndarray, np.ndarray]:
    """Target and source edge ids of the operation's deterministic part.

    ``F`` maps to itself, ``G + shift`` takes the states of ``G``.  Raises
    InputError if ``F`` meets ``G`` or ``G + shift`` or if ``G + shift``
    leaves the box.
    """
    if F.geom is not G.geom:
        raise InputError("F and G must live on the same box")
    if np.any(F.mask & G.mask):
        raise InputError("F and G share an edge")
    g_src = G.edge_ids
    g_dst = G.shift_map(shift)
    if np.any(F.mask[g_dst]):
        raise InputError("F meets the translate of G")
    f = F.edge_ids
    return np.concatenate([f, g_dst]), np.concatenate([f, g_src])


def storage_shift_replace(cfg: BondConfig, F: Region, G: Region, shift, params: RcParams,
                          rng: np.random.Generator, sweeps: int = DEFAULT_SWEEPS) -> SurgeryOutcome:
    """Keep ``F``, copy ``G`` onto ``G + shift``, resample the rest given those; store off ``F``, ``G``."""
    dst, src = shift_assignment(F, G, shift)
    geom = cfg.geom
    states = np.zeros(geom.n_edges, dtype=bool)
    states[dst] = cfg.states[src]
    assigned = np.zeros(geom.n_edges, dtype=bool)
    assigned[dst] = True
    rest = np.flatnonzero(~assigned)
    resample_edges(states, rest, geom, params, rng, sweeps)
    stored_edges = np.flatnonzero(~(F.mask | G.mask))
    return SurgeryOutcome(BondConfig(geom, states), cfg.states[stored_edges].copy(), stored_edges,
                          rest, f"shift{tuple(int(s) for s in shift)}", _rng_info(params, sweeps))


def _rng_info(params: RcParams, sweeps: int) -> dict:
    return {"method": "exact product" if params.q == 1.0 else "heat-bath",
            "sweeps": 0 if params.q == 1.0 else int(sweeps)}


def _vertex(v) -> tuple[int, int]:
    return int(v[0]), int(v[1])


# ---------------------------------------------------------------------------
# Exact kernels on tiny boxes


MAX_KERNEL_EDGES = 14
MAX_KERNEL_RESAMPLED = 10


@dataclass
class KernelReport:
    """Exactly enumerated behaviour of a surgery operation.

    ``tv`` is the total-variation distance between the law of the new
    configuration and the input law; ``cmi`` is the mutual information (nats)
    between the resampled contents and the stored contents given the assigned
    edges.
    """

    tv: float
    cmi: float
    output_law: np.ndarray


def enumerate_kernel(geom: BoxGeom, params: RcParams, dst: np.ndarray, src: np.ndarray,
                     resampled: np.ndarray, stored: np.ndarray,
                     support: np.ndarray | None = None) -> KernelReport:
    """Enumerate input configurations and exact resampling draws of an operation.

    The output copies ``src`` edges of the input onto ``dst`` edges and draws
    ``resampled`` from the exact conditional law given the ``dst`` edges;
    ``stored`` input edges form the second output.  By default every edge of
    the box is enumerated.  At ``q = 1`` the edges are independent, so a
    ``support`` edge list containing all the others may be given instead and
    the enumeration runs over it alone.
    """
    if support is None:
        support = np.arange(geom.n_edges)
    elif params.q != 1.0:
        raise InputError("a reduced support is exact only at q = 1")
    support = np.asarray(support, dtype=np.int64)
    local = {int(e): k for k, e in enumerate(support)}
    try:
        dst, src, resampled, stored = ([local[int(e)] for e in arr]
                                       for arr in (dst, src, resampled, stored))
    except KeyError as exc:
        raise InputError(f"edge {exc.args[0]} missing from the support") from None
    m = len(support)
    if m > MAX_KERNEL_EDGES:
        raise InputError(f"kernel enumeration limited to {MAX_KERNEL_EDGES} edges")
    resampled = np.asarray(resampled, dtype=np.int64)
    stored = np.asarray(stored, dtype=np.int64)
    r = len(resampled)
    if r > MAX_KERNEL_RESAMPLED:
        raise InputError(f"kernel enumeration limited to {MAX_KERNEL_RESAMPLED} resampled edges")
    codes = np.arange(1 << m, dtype=np.int64)
    if m == geom.n_edges:
        mu = exact_distribution(geom, params).probs
    else:
        opened = np.zeros_like(codes)
        for k in range(m):
            opened += (codes >> k) & 1
        mu = params.p ** opened * (1 - params.p) ** (m - opened)
    fixed = np.zeros_like(codes)
    for t, s in zip(np.asarray(dst, dtype=np.int64), np.asarray(src, dtype=np.int64)):
        fixed |= ((codes >> s) & 1) << t
    store_code = np.zeros_like(codes)
    for k, s in enumerate(stored):
        store_code |= ((codes >> s) & 1) << k
    draws = np.arange(1 << r, dtype=np.int64)
    fill = np.zeros_like(draws)
    for k, e in enumerate(resampled):
        fill |= ((draws >> k) & 1) << e
    out = fixed[:, None] | fill[None, :]
    w = mu[out]
    cond = w / w.sum(axis=1, keepdims=True)
    joint = mu[:, None] * cond
    law = np.bincount(out.ravel(), weights=joint.ravel(), minlength=1 << m)
    tv = 0.5 * float(np.abs(law - mu).sum())
    # I(A; B | C): A = resampled draw, B = stored contents, C = assigned contents
    a = np.broadcast_to(draws[None, :], out.shape).ravel()
    b = np.broadcast_to(store_code[:, None], out.shape).ravel()
    c = np.broadcast_to(fixed[:, None], out.shape).ravel()
    pj = joint.ravel()
    keep = pj > 0
    a, b, c, pj = a[keep], b[keep], c[keep], pj[keep]
    # pack (a, b, c) into one integer key: c has m bits, b has len(stored) bits
    sb, sa = m, m + len(stored)
    p_abc = _grouped((a << sa) | (b << sb) | c, pj)
    p_ac = _grouped((a << sa) | c, pj)
    p_bc = _grouped((b << sb) | c, pj)
    p_c = _grouped(c, pj)
    pj = pj.astype(np.longdouble)
    cmi = float(np.sum(pj * np.log(p_abc * p_c / (p_ac * p_bc))))
    return KernelReport(tv, abs(cmi), law)


def _grouped(keys: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Total weight of each row's key group, returned per row.

    Sums are accumulated in extended precision: the conditional mutual
    information is a sum of logarithms of ratios of these totals, and plain
    float64 accumulation over large groups leaves roundoff near 1e-12.
    """
    order = np.argsort(keys, kind="stable")
    ks = keys[order]
    new = np.empty(len(ks), dtype=bool)
    new[0] = True
    new[1:] = ks[1:] != ks[:-1]
    sums = np.add.reduceat(weights[order].astype(np.longdouble), np.flatnonzero(new))
    out = np.empty(len(keys), dtype=np.longdouble)
    out[order] = sums[np.cumsum(new) - 1]
    return out


def sector_kernel(geom: BoxGeom, params: RcParams, x, y, support=None) -> KernelReport:
    """Exact kernel of sector replacement, over the box or over ``support`` (``q = 1``)."""
    sector = sector_region(geom, _vertex(x), _vertex(y)).edge_ids
    universe = np.arange(geom.n_edges) if support is None else np.asarray(support, dtype=np.int64)
    rest = np.setdiff1d(universe, sector)
    return enumerate_kernel(geom, params, rest, rest, sector, sector, support)


def shift_kernel(geom: BoxGeom, params: RcParams, F: Region, G: Region, shift,
                 support=None) -> KernelReport:
    """Exact kernel of shift replacement, over the box or over ``support`` (``q = 1``)."""
    dst, src = shift_assignment(F, G, shift)
    universe = np.arange(geom.n_edges) if support is None else np.asarray(support, dtype=np.int64)
    rest = np.setdiff1d(universe, dst)
    stored = np.setdiff1d(universe, np.flatnonzero(F.mask | G.mask))
    return enumerate_kernel(geom, params, dst, src, rest, stored, support)


# ---------------------------------------------------------------------------
# Outermost sector path and area capture


def _open_adjacency(cfg: BondConfig, mask: np.ndarray) -> dict[tuple[int, int], list[tuple[int, int]]]:
    g = cfg.geom
    a, b = g.edge_endpoints()
    adj: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for e in np.flatnonzero(cfg.states & mask):
        u, v = _vertex(a[e]), _vertex(b[e])
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    return adj


def _turn(back, d) -> float:
    """Ccw angle from ``back`` to ``d`` in ``(0, 2 pi]``."""
    ang = math.atan2(back[0] * d[1] - back[1] * d[0], back[0] * d[0] + back[1] * d[1])
    if ang <= 1e-12:
        ang += 2 * math.pi
    return ang


def outermost_sector_path(cfg: BondConfig, x, y) -> list[tuple[int, int]] | None:
    """The open path from ``x`` to ``y`` inside the sector enclosing the largest region.

    Walks the sector's open edges from ``x`` always taking the first turn
    counterclockwise from the reverse of the arrival direction, which keeps the
    region beyond the path (away from the origin) on the left; initially the
    walker arrives at ``x`` heading ccw around the origin.  The walk is stopped
    at ``y`` and its loops are erased in order.  None if ``x`` and ``y`` are
    not joined inside the sector.
    """
    x, y = _vertex(x), _vertex(y)
    g = cfg.geom
    region = sector_region(g, x, y)
    labels = component_labels(g, cfg.states, region.mask)
    if x == y:
        return [x]
    if labels[g.vertex_id(*x)] != labels[g.vertex_id(*y)]:
        return None
    adj = _open_adjacency(cfg, region.mask)
    heading = (-x[1], x[0])
    walk = [x]
    v = x
    for _ in range(4 * len(region) + 8):
        back = (-heading[0], -heading[1])
        nxt = min(adj[v], key=lambda w: _turn(back, (w[0] - v[0], w[1] - v[1])))
        heading = (nxt[0] - v[0], nxt[1] - v[1])
        v = nxt
        walk.append(v)
        if v == y:
            return loop_erase(walk)
    raise RuntimeError("boundary walk failed to reach a connected endpoint")


def loop_erase(walk) -> list[tuple[int, int]]:
    """Chronological loop erasure of a vertex walk."""
    path: list[tuple[int, int]] = []
    pos: dict[tuple[int, int], int] = {}
    for v in walk:
        if v in pos:
            k = pos[v]
            for w in path[k + 1:]:
                del pos[w]
            del path[k + 1:]
        else:
            pos[v] = len(path)
            path.append(v)
    return path


def captured_area2(path, origin=(0, 0)) -> int:
    """Twice the area enclosed by ``origin -> path -> origin`` (shoelace, signed ccw positive)."""
    pts = [tuple(origin)] + [tuple(p) for p in path]
    s = 0
    for i in range(len(pts)):
        a, b = pts[i], pts[(i + 1) % len(pts)]
        s += a[0] * b[1] - a[1] * b[0]
    return int(s)


def triangle_area(x, y) -> float:
    """Area of the triangle with vertices 0, ``x``, ``y``."""
    return abs(x[0] * y[1] - x[1] * y[0]) / 2


@dataclass
class GacReport:
    connected: bool
    confined: bool
    diameter_ok: bool
    area_ok: bool
    captured_area: float
    required_area: float
    diameter: float

    @property
    def holds(self) -> bool:
        return self.connected and self.confined and self.diameter_ok and self.area_ok


def gac_report(cfg: BondConfig, x, y, eps: float = 0.1, q0: float = math.pi / 8) -> GacReport:
    """Evaluate the four parts of the area-capture event from ``x`` to ``y``.

    The joining cluster must lie in the forward cone at ``x`` and the backward
    cone at ``y``, both of half-angle ``pi/2 - q0/2``; ``eps`` scales the
    required area gain over the triangle ``0, x, y``.
    """
    x, y = _vertex(x), _vertex(y)
    sweep_class(x, y)
    d = math.hypot(x[0] - y[0], x[1] - y[1])
    if d <= 1:
        raise InputError("area capture needs |x - y| > 1")
    if eps <= 0:
        raise InputError("eps must be positive")
    required = triangle_area(x, y) + eps * d ** 1.5 * math.sqrt(math.log(d))
    g = cfg.geom
    region = sector_region(g, x, y)
    labels = component_labels(g, cfg.states, region.mask)
    if labels[g.vertex_id(*x)] != labels[g.vertex_id(*y)]:
        return GacReport(False, False, False, False, 0.0, required, 0.0)
    members = np.flatnonzero(labels == labels[g.vertex_id(*x)])
    pts = g.xy2[members] // 2
    aperture = math.pi / 2 - q0 / 2
    confined = all(
        (tuple(p) == x or in_forward_cone(x, p, aperture)) and
        (tuple(p) == y or in_backward_cone(y, p, aperture)) for p in pts.tolist())
    diff = pts[:, None, :] - pts[None, :, :]
    diam = float(np.sqrt((diff ** 2).sum(-1).max()))
    path = outermost_sector_path(cfg, x, y)
    area = captured_area2(path) / 2
    return GacReport(True, confined, diam <= 2 * d, area >= required, area, required, diam)


def gac_check(cfg: BondConfig, x, y, eps: float = 0.1, q0: float = math.pi / 8) -> bool:
    """Does ``cfg`` realize the ``eps``-area-capture event between ``x`` and ``y``?"""
    return gac_report(cfg, x, y, eps, q0).holds


# ---------------------------------------------------------------------------
# Locating aligned pairs of regeneration sites


@dataclass(frozen=True)
class LocateConstants:
    """Annulus constants ``c1 < C1`` and the pair-location constants."""

    c1: float
    C1: float
    C3: float
    C4: float
    C5: float
    Cp: float

    @classmethod
    def defaults(cls, q0: float, c0: float, c1: float, C1: float, margin: float = 1.01) -> "LocateConstants":
        """Smallest admissible ``C3`` and ``Cp`` (times ``margin``) for the given shape constants."""
        C4 = 1 / math.sin(q0 / 2)
        C5 = C4 / math.tan(3 * q0 / 4)
        C3 = margin / (c1 * math.sin(min(c0, q0 / 2)))
        Cp = 4 * C1 ** 2 * C4
        return cls(c1, C1, C3, C4, C5, Cp)

    def check(self, q0: float, c0: float) -> list[str]:
        """Violated stated inequalities (empty when admissible)."""
        bad = []
        if not 0 < self.c1 < self.C1:
            bad.append("need 0 < c1 < C1")
        if not 1 / self.C3 < self.c1 * math.sin(min(c0, q0 / 2)):
            bad.append("need 1/C3 < c1 sin(min(c0, q0/2))")
        if not math.isclose(self.C4, 1 / math.sin(q0 / 2), rel_tol=1e-12):
            bad.append("C4 must equal csc(q0/2)")
        if not math.isclose(self.C5, self.C4 / math.tan(3 * q0 / 4), rel_tol=1e-12):
            bad.append("C5 must equal C4 cot(3 q0/4)")
        if not self.Cp >= 4 * self.C1 ** 2 * self.C4 * (1 - 1e-12):
            bad.append("need Cp >= 4 C1^2 C4")
        return bad


@dataclass
class LocatedPair:
    first: tuple[int, int]
    second: tuple[int, int]
    method: str


@dataclass
class LocateResult:
    upper: LocatedPair | None
    lower: LocatedPair | None
    gate: dict


def pair_conditions(x1, x2, t: float, n: float, k: LocateConstants) -> dict[str, bool]:
    """The five displayed constraints on an upper-half-plane pair."""
    return {
        "above_axis": x1[1] > 0 and x2[1] > 0,
        "ordered_window": -n / k.C3 <= x1[0] <= x2[0] <= n / k.C3,
        "min_gap": x1[0] + t / (4 * k.C1) <= x2[0] + 1e-12,
        "max_gap": x2[0] <= x1[0] + (1 / (4 * k.C1) + k.C4 * k.C1 / k.Cp) * t + 1e-12,
        "vertical": abs(x2[1] - x1[1]) <= 3 * k.C5 * k.C1 * t / k.Cp + 1e-12,
    }


def column_hits(c: Circuit, column: int, upper: bool = True) -> set[tuple[float, float]]:
    """Points (or vertical segments as ``(lo, hi)``) where the circuit meets ``x = column`` in a half-plane."""
    hits: set[tuple[float, float]] = set()
    a, b = c.edges()
    for p, q in zip(a.tolist(), b.tolist()):
        if p[0] == q[0] == column:
            lo, hi = sorted((p[1], q[1]))
            if (upper and hi > 0) or (not upper and lo < 0):
                hits.add((max(lo, 0) if upper else lo, hi if upper else min(hi, 0)))
        elif min(p[0], q[0]) <= column <= max(p[0], q[0]):
            yv = p[1]  # horizontal lattice edge
            if (yv > 0) if upper else (yv < 0):
                hits.add((yv, yv))
    return hits


def single_crossing(c: Circuit, z, upper: bool = True) -> bool:
    """Does the circuit meet the open half-line through ``z`` (vertical, same side) only at ``z``?"""
    return column_hits(c, int(z[0]), upper) == {(z[1], z[1])}


def _locate_upper(sites: np.ndarray, c: Circuit, t: float, n: float,
                  k: LocateConstants) -> LocatedPair | None:
    up = sites[sites[:, 1] > 0]
    if len(up) == 0:
        return None
    bound = n / k.C3
    u = up[np.abs(up[:, 0]) <= bound]
    u = u[np.lexsort((u[:, 1], u[:, 0]))]
    if len(u) == 0:
        return None
    xs_all = up[:, 0]
    gap = t / (4 * k.C1)
    v = []
    for ui in u:
        ok = xs_all >= ui[0] + gap - 1e-12
        if not ok.any():
            break
        xm = xs_all[ok].min()
        cands = up[ok & (xs_all == xm)]
        vi = cands[np.argmin(np.abs(cands[:, 1] - ui[1]))]
        if vi[0] > bound:
            break
        v.append(vi)
    M = len(v)
    if M == 0:
        return None
    v = np.array(v)
    d = v[:, 1] - u[:M, 1]
    index = {tuple(p): i for i, p in enumerate(u.tolist())}

    def accept(i):
        x1, x2 = tuple(int(s) for s in u[i]), tuple(int(s) for s in v[i])
        return (all(pair_conditions(x1, x2, t, n, k).values()) and single_crossing(c, x1)
                and single_crossing(c, x2)), x1, x2

    # chain of abutting intervals starting from the leftmost site
    chain = [0]
    while True:
        j = chain[-1]
        if j >= M:
            break
        nxt = index.get(tuple(v[j].tolist()))
        if nxt is None or nxt <= j:
            break
        chain.append(nxt)
        if n / (2 * k.C3) <= abs(u[nxt, 0]) <= bound and u[nxt, 0] > 0:
            break
    mids = [r for r in range(1, len(chain) - 1) if abs(u[chain[r], 0]) <= n / (8 * k.C3)]
    if mids:
        r_best = max(mids, key=lambda r: u[chain[r], 1])
        i1 = [i for i in chain[1:r_best] if d[i] > 0]
        i2 = [i for i in chain[r_best:len(chain) - 1] if i < M and d[i] < 0]
        if i1 and i2 and i1[0] < i2[0]:
            lo, hi = i1[0], i2[0]
            i0 = max(i for i in range(lo, hi + 1) if d[i] > 0)
            ok, x1, x2 = accept(i0)
            if ok:
                return LocatedPair(x1, x2, "chain")
    for i in range(M):
        ok, x1, x2 = accept(i)
        if ok:
            return LocatedPair(x1, x2, "scan")
    return None


def locate(c: Circuit, rg, t: float, n: float, consts: LocateConstants,
           gd: float | None = None, gd_scale: float | None = None) -> LocateResult:
    """Find aligned pairs of regeneration sites above and below the origin.

    The gate requires every circuit vertex in the annulus ``[c1 n, C1 n]``
    and the largest angular gap between sites at most ``t / (Cp n)``; if
    ``gd`` and ``gd_scale`` are given it also requires ``gd <= n / gd_scale``.
    On a failed gate both pairs are None.  Each pair is taken from the
    abutting-interval chain where it applies and otherwise from the first
    index of the scan meeting every constraint.
    """
    rg = np.asarray(rg, dtype=np.int64).reshape(-1, 2)
    r = np.hypot(*c.vertices.T.astype(float))
    gate = {
        "annulus": bool(r.min() >= consts.c1 * n and r.max() <= consts.C1 * n),
        "theta": bool(theta_rg_max(rg) <= t / (consts.Cp * n)),
        "gd": True if gd is None or gd_scale is None else bool(gd <= n / gd_scale),
    }
    if not all(gate.values()):
        return LocateResult(None, None, gate)
    upper = _locate_upper(rg, c, t, n, consts)
    flip = np.array([1, -1])
    lower = _locate_upper(rg * flip, Circuit(c.vertices[::-1] * flip), t, n, consts)
    if lower is not None:
        lower = LocatedPair((lower.first[0], -lower.first[1]), (lower.second[0], -lower.second[1]),
                            lower.method)
    return LocateResult(upper, lower, gate)
