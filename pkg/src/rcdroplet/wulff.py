"""Inverse correlation length, unit-area Wulff shape and the angular constants.

``estimate_xi`` measures the exponential decay rate of the two-point
connectivity along a grid of directions.  ``build_wulff`` intersects the
half-planes ``{t : t.u <= xi(u)}``, samples the boundary radially and rescales
it to unit area.  ``choose_constants`` picks the cone aperture ``q0`` and the
angular window ``c0`` used by regeneration sites.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import InputError
from .lattice import BoxGeom
from .model import RcParams, SweepWorkspace, critical_point
from .rng import make_rng

# ---------------------------------------------------------------------------
# Inverse correlation length


@dataclass
class XiTable:
    """Decay rate per direction; ``angles`` index the directions counterclockwise from the x-axis."""

    angles: np.ndarray
    xi: np.ndarray
    stderr: np.ndarray
    flagged: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        if self.flagged is None:
            self.flagged = np.zeros(len(self.xi), dtype=bool)
        self.flagged = np.asarray(self.flagged, dtype=bool)

    @property
    def directions(self) -> np.ndarray:
        return np.stack([np.cos(self.angles), np.sin(self.angles)], axis=1)

    def to_json(self) -> str:
        return json.dumps({
            "angles": self.angles.tolist(), "xi": self.xi.tolist(),
            "stderr": self.stderr.tolist(), "flagged": self.flagged.astype(int).tolist(),
            "diagnostics": self.diagnostics, "meta": self.meta,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "XiTable":
        d = json.loads(text)
        return cls(np.array(d["angles"]), np.array(d["xi"]), np.array(d["stderr"]),
                   np.array(d["flagged"], dtype=bool), d["diagnostics"], d["meta"])


def constant_xi(value: float = 1.0, dirs: int = 256) -> XiTable:
    ang = 2 * np.pi * np.arange(dirs) / dirs
    return XiTable(ang, np.full(dirs, float(value)), np.zeros(dirs))


def l1_xi(dirs: int = 256) -> XiTable:
    ang = 2 * np.pi * np.arange(dirs) / dirs
    return XiTable(ang, np.abs(np.cos(ang)) + np.abs(np.sin(ang)), np.zeros(dirs))


def fundamental_index(dirs: int) -> np.ndarray:
    """For each grid direction, the index of its image in the sector ``[0, pi/4]``."""
    if dirs % 8:
        raise InputError("direction count must be a multiple of 8")
    quarter = dirs // 4
    r = np.arange(dirs) % quarter
    return np.where(r <= quarter // 2, r, quarter - r)


def symmetrize(table: XiTable) -> XiTable:
    """Inverse-variance average over orbits of the 8 lattice symmetries.

    Orbit members share the pooled value; the pooled standard error is never
    larger than any member's.  Entries with zero standard error dominate.
    """
    dirs = len(table.angles)
    fi = fundamental_index(dirs)
    xi = table.xi.copy()
    se = table.stderr.copy()
    flagged = table.flagged.copy()
    for f in np.unique(fi):
        members = np.flatnonzero(fi == f)
        s = table.stderr[members]
        if np.any(s == 0):
            exact = members[s == 0]
            xi[members] = table.xi[exact].mean()
            se[members] = 0.0
        else:
            w = 1.0 / s**2
            xi[members] = (w * table.xi[members]).sum() / w.sum()
            se[members] = 1.0 / math.sqrt(w.sum())
        flagged[members] = table.flagged[members].any()
    return XiTable(table.angles, xi, se, flagged, dict(table.diagnostics), dict(table.meta))


@njit(cache=True)
def _explore_tilted(unif, inc, edge_u, edge_v, vx, vy, origin, ux, uy, p, p_fwd,
                    target_of, n_targets, stamp, mark, queue, revealed, out_logw):
    """Explore the open cluster of ``origin`` with forward edges tilted to ``p_fwd``.

    ``out_logw[k]`` receives the log likelihood ratio at the moment target
    ``k`` is first reached (left as -inf if it is not reached).
    """
    for k in range(n_targets):
        out_logw[k] = -np.inf
    head = 0
    tail = 1
    queue[0] = origin
    stamp[origin] = mark
    logw = 0.0
    found = 0
    lr_open_f = math.log(p / p_fwd)
    lr_closed_f = math.log((1.0 - p) / (1.0 - p_fwd))
    while head < tail and found < n_targets:
        x = queue[head]
        head += 1
        for j in range(4):
            e = inc[x, j]
            if e < 0 or revealed[e] == mark:
                continue
            revealed[e] = mark
            y = edge_v[e] if edge_u[e] == x else edge_u[e]
            fwd = (vx[y] - vx[x]) * ux + (vy[y] - vy[x]) * uy > 0
            prob = p_fwd if fwd else p
            is_open = unif[e] < prob
            if fwd:
                logw += lr_open_f if is_open else lr_closed_f
            if not is_open or stamp[y] == mark:
                continue
            stamp[y] = mark
            queue[tail] = y
            tail += 1
            t = target_of[y]
            if t >= 0 and out_logw[t] == -np.inf:
                out_logw[t] = logw
                found += 1
    return found


def _connection_estimates_q1(params: RcParams, u, ks, half_width, samples, rng, tilt):
    geom = BoxGeom(half_width)
    vx = geom.xy2[:, 0] // 2
    vy = geom.xy2[:, 1] // 2
    targets = [(int(math.floor(k * u[0] + 1e-12)), int(math.floor(k * u[1] + 1e-12))) for k in ks]
    target_of = np.full(geom.n_vertices, -1, dtype=np.int64)
    for i, t in enumerate(targets):
        if target_of[geom.vertex_id(*t)] < 0:
            target_of[geom.vertex_id(*t)] = i
    # duplicate lattice points (possible for small k) share the first index
    dup = np.array([target_of[geom.vertex_id(*t)] for t in targets])
    p_fwd = max(params.p, 0.5) if tilt else params.p
    stamp = np.zeros(geom.n_vertices, dtype=np.int64)
    revealed = np.zeros(geom.n_edges, dtype=np.int64)
    queue = np.empty(geom.n_vertices, dtype=np.int64)
    logw = np.empty(len(ks))
    s1 = np.zeros(len(ks))
    s2 = np.zeros(len(ks))
    hits = np.zeros(len(ks), dtype=np.int64)
    origin = geom.vertex_id(0, 0)
    for s in range(samples):
        unif = rng.random(geom.n_edges)
        _explore_tilted(unif, geom.incidence, geom.edge_u, geom.edge_v, vx, vy, origin,
                        float(u[0]), float(u[1]), params.p, p_fwd, target_of, len(ks),
                        stamp, s + 1, queue, revealed, logw)
        w = np.exp(logw[dup])
        s1 += w
        s2 += w * w
        hits += np.isfinite(logw[dup])
    mean = s1 / samples
    var = np.maximum(s2 / samples - mean**2, 0.0)
    return mean, np.sqrt(var / samples), hits


def _connection_estimates_fk(params: RcParams, u, ks, half_width, samples, rng, burn_in, thin):
    """Translation-averaged connection frequencies from a heat-bath chain.

    Each sample compares cluster labels of ``z`` and ``z + floor(k u)`` for all
    ``z`` within ``half_width / 4`` of the origin; standard errors come from the
    spread of the per-sample frequencies.
    """
    from .lattice import component_labels
    geom = BoxGeom(half_width)
    N = 2 * half_width + 1
    r = half_width // 4
    zs = np.arange(-r, r + 1) + half_width
    zx, zy = np.meshgrid(zs, zs, indexing="ij")
    offs = [(int(math.floor(k * u[0] + 1e-12)), int(math.floor(k * u[1] + 1e-12))) for k in ks]
    ws = SweepWorkspace(geom)
    states = np.zeros(geom.n_edges, dtype=np.uint8)
    for _ in range(burn_in):
        ws.sweep(states, rng.random(geom.n_edges), params)
    fr = np.zeros((samples, len(ks)))
    hits = np.zeros(len(ks), dtype=np.int64)
    for s in range(samples):
        for _ in range(thin):
            ws.sweep(states, rng.random(geom.n_edges), params)
        lab = component_labels(geom, states.astype(bool)).reshape(N, N)
        base = lab[zx, zy]
        for i, (dx, dy) in enumerate(offs):
            same = base == lab[zx + dx, zy + dy]
            fr[s, i] = same.mean()
            hits[i] += same.sum()
    mean = fr.mean(axis=0)
    se = fr.std(axis=0, ddof=1) / math.sqrt(samples) if samples > 1 else np.full(len(ks), np.inf)
    return mean, se, hits


def _fit_slope(ks, prob, se, n_eff):
    """Weighted least squares of -log P on k; returns slope, its standard error, residuals, flag.

    Zero estimates are replaced by ``0.5 / n_eff`` with an error of the same
    size; such fits are flagged and their slope error is doubled.
    """
    ks = np.asarray(ks, dtype=float)
    prob = np.asarray(prob, dtype=float).copy()
    se = np.asarray(se, dtype=float).copy()
    zero = prob <= 0
    flagged = bool(zero.any())
    prob[zero] = 0.5 / n_eff
    se[zero] = 0.5 / n_eff
    y = -np.log(prob)
    sy = np.where(se > 0, se / prob, 1.0)
    w = 1.0 / sy**2
    X = np.stack([np.ones(len(ks)), ks], 1)
    A = X.T @ (w[:, None] * X)
    beta = np.linalg.solve(A, X.T @ (w * y))
    cov = np.linalg.inv(A)
    resid = y - X @ beta
    dof = max(len(ks) - 2, 1)
    chi2 = float((w * resid**2).sum() / dof)
    slope_se = math.sqrt(cov[1, 1] * max(chi2, 1.0))
    if flagged:
        slope_se *= 2.0
    return float(beta[1]), slope_se, resid.tolist(), flagged


def estimate_xi(params: RcParams, dirs: int = 256, kmax: int = 16, samples: int = 2000,
                seed: int = 0, tilt: bool = True, reduce: bool = True,
                burn_in: int = 100, thin: int = 1) -> XiTable:
    """Estimate the inverse correlation length on ``dirs`` equally spaced directions.

    For each direction ``u`` the connection probability to ``floor(k u)`` is
    estimated for ``k`` in ``[kmax/2, kmax]`` on a box of half-width
    ``2 kmax``, and ``-log P`` is regressed on ``k``.  At ``q = 1`` clusters
    are explored lazily with edges pointing along ``u`` opened with
    probability ``max(p, 1/2)`` and reweighted by the likelihood ratio
    (``tilt=False`` gives plain Monte Carlo).  At ``q > 1`` heat-bath samples
    are used.  With ``reduce`` only the directions in ``[0, pi/4]`` are
    estimated and the rest follow by symmetry; otherwise every direction is
    estimated independently (see ``symmetrize``).  Direction ``i`` draws from RNG
    stream ``i`` of ``seed``.
    """
    pc, _ = critical_point(params.q)
    if params.p >= pc:
        raise InputError(f"p = {params.p} is not subcritical (p_c = {pc})")
    if kmax < 8:
        raise InputError("kmax must be >= 8")
    if params.p <= 0:
        raise InputError("p must be positive")
    angles = 2 * np.pi * np.arange(dirs) / dirs
    fi = fundamental_index(dirs)
    todo = np.unique(fi) if reduce else np.arange(dirs)
    ks = np.arange(kmax // 2, kmax + 1)
    half = 2 * kmax
    xi = np.full(dirs, np.nan)
    se = np.full(dirs, np.nan)
    flagged = np.zeros(dirs, dtype=bool)
    diag = {}
    for i in todo:
        u = (math.cos(angles[i]), math.sin(angles[i]))
        rng = make_rng(seed, int(i))
        if params.q == 1.0:
            prob, pse, hits = _connection_estimates_q1(params, u, ks, half, samples, rng, tilt)
            n_eff = samples
        else:
            prob, pse, hits = _connection_estimates_fk(params, u, ks, half, samples, rng,
                                                       burn_in, thin)
            n_eff = samples * (2 * (half // 4) + 1) ** 2
        slope, sse, resid, flag = _fit_slope(ks, prob, pse, n_eff)
        xi[i], se[i], flagged[i] = slope, sse, flag
        diag[str(int(i))] = {"residuals": resid, "hits": hits.tolist()}
    if reduce:
        xi, se, flagged = xi[fi], se[fi], flagged[fi]
    meta = {"p": params.p, "q": params.q, "bc": params.bc, "kmax": kmax, "samples": samples,
            "seed": seed, "tilt": tilt, "reduce": reduce, "dirs": dirs}
    table = XiTable(angles, xi, se, flagged, {"per_direction": diag, "ks": ks.tolist()}, meta)
    return table


# ---------------------------------------------------------------------------
# Wulff shape


@dataclass
class WulffShape:
    """Unit-area polygon sampled radially at equally spaced angles, with tangents and constants."""

    boundary: np.ndarray
    angles: np.ndarray
    tangents: np.ndarray
    dilation: float
    q0: float = math.nan
    c0: float = math.nan
    xi_angles: np.ndarray = None
    xi_values: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def area(self) -> float:
        P = self.boundary
        Q = np.roll(P, -1, axis=0)
        return 0.5 * float(np.sum(P[:, 0] * Q[:, 1] - P[:, 1] * Q[:, 0]))

    def is_convex(self, tol: float = 1e-12) -> bool:
        P = self.boundary
        a = np.roll(P, -1, axis=0) - P
        b = np.roll(P, -2, axis=0) - np.roll(P, -1, axis=0)
        return bool(np.all(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0] >= -tol))

    def refined(self, factor: int) -> "WulffShape":
        """Rebuild from the stored decay rates with ``factor`` times more boundary samples."""
        table = XiTable(self.xi_angles, self.xi_values, np.zeros(len(self.xi_values)))
        w = build_wulff(table, samples=factor * len(self.boundary))
        w.q0, w.c0 = self.q0, self.c0
        return w

    def to_json(self) -> str:
        return json.dumps({
            "boundary": self.boundary.tolist(), "angles": self.angles.tolist(),
            "tangents": self.tangents.tolist(), "dilation": self.dilation,
            "q0": self.q0, "c0": self.c0,
            "xi_angles": None if self.xi_angles is None else self.xi_angles.tolist(),
            "xi_values": None if self.xi_values is None else self.xi_values.tolist(),
            "meta": self.meta,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "WulffShape":
        d = json.loads(text)
        arr = lambda k: None if d[k] is None else np.array(d[k], dtype=float)
        return cls(arr("boundary"), arr("angles"), arr("tangents"), d["dilation"], d["q0"],
                   d["c0"], arr("xi_angles"), arr("xi_values"), d["meta"])


def radial_function(theta: np.ndarray, normals: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """``r(theta) = min_u xi(u) / cos(theta - theta_u)`` over normals facing ``theta``."""
    c = np.cos(theta[:, None] - normals[None, :])
    with np.errstate(divide="ignore"):
        r = np.where(c > 1e-12, xi[None, :] / c, np.inf)
    return r.min(axis=1)


def build_wulff(xi: XiTable, samples: int | None = None) -> WulffShape:
    """Half-plane intersection ``{t : t.u <= xi(u)}`` rescaled to unit area.

    The boundary is sampled at ``samples`` equally spaced angles (default four
    times the number of directions, at least 256); tangents are central
    differences along the boundary.
    """
    vals = np.asarray(xi.xi, dtype=float)
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        raise InputError("xi must be positive and finite in every direction")
    M = max(256, 4 * len(vals)) if samples is None else int(samples)
    theta = 2 * np.pi * np.arange(M) / M
    r = radial_function(theta, xi.angles, vals)
    if not np.all(np.isfinite(r)) or np.any(r <= 0):
        raise InputError("degenerate Wulff shape: the half-planes do not bound a region")
    P = r[:, None] * np.stack([np.cos(theta), np.sin(theta)], 1)
    Q = np.roll(P, -1, axis=0)
    area = 0.5 * float(np.sum(P[:, 0] * Q[:, 1] - P[:, 1] * Q[:, 0]))
    lam = 1.0 / math.sqrt(area)
    P = P * lam
    d = np.roll(P, -1, axis=0) - np.roll(P, 1, axis=0)
    T = d / np.hypot(d[:, 0], d[:, 1])[:, None]
    return WulffShape(P, theta, T, lam, xi_angles=np.asarray(xi.angles, dtype=float).copy(),
                      xi_values=vals.copy(), meta=dict(xi.meta))


def _angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    cr = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    dt = a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]
    return np.abs(np.arctan2(cr, dt))


def angular_resolution(w: WulffShape) -> float:
    """Half the spacing of the half-plane normals.

    Sides of the polygonal approximation are perpendicular to one of the
    normals, so sampled tangents can differ from those of the smooth shape by
    up to this angle; both angular conditions allow it.
    """
    if w.xi_angles is None or len(w.xi_angles) == 0:
        return 0.0
    return math.pi / len(w.xi_angles)


def sup_tangent_angle(w: WulffShape) -> float:
    """``sup_z angle(w_z, z_perp)`` over the sampled boundary."""
    z = np.stack([np.cos(w.angles), np.sin(w.angles)], 1)
    zp = np.stack([-z[:, 1], z[:, 0]], 1)
    return float(_angle(w.tangents, zp).max())


def czercond_max(w: WulffShape, c0: float) -> float:
    """Largest ``angle(x - y, -perp(y))`` over boundary pairs with ``arg x < arg y`` within ``2 c0``."""
    M = len(w.boundary)
    step = 2 * np.pi / M
    K = int(math.floor(2 * c0 / step + 1e-9))
    P = w.boundary
    negperp = np.stack([P[:, 1], -P[:, 0]], 1)
    worst = 0.0
    for k in range(1, K + 1):
        X = np.roll(P, k, axis=0)  # X[i] = P[i-k]: k steps clockwise from P[i]
        worst = max(worst, float(_angle(X - P, negperp).max()))
    return worst


def dyadic_floor(value: float, top: float, depth: int = 40, strict: bool = False) -> float:
    """Largest ``top * 2^-j`` (``j >= 0``) below ``value`` (strictly if ``strict``)."""
    for j in range(depth + 1):
        v = top * 2.0**-j
        if v < value or (not strict and v <= value):
            return v
    raise InputError("no dyadic value fits below the bound")


def choose_constants(w: WulffShape, c1: float = 0.4, C1: float = 1.2,
                     tol: float = 1e-12) -> tuple[float, float]:
    """Pick ``(q0, c0)`` on dyadic grids.

    ``q0`` is the largest ``(pi/8) 2^-j`` with ``sup angle(w_z, z_perp) <=
    pi/2 - 4 q0``, capped at ``c1/(2 C1)``.  Both conditions allow the
    polygon's ``angular_resolution``.  ``c0`` is then the largest
    ``(q0/2) 2^-j``, ``j >= 1``, satisfying the chord condition.
    """
    if not 0 < c1 < C1:
        raise InputError("need 0 < c1 < C1")
    res = angular_resolution(w)
    S = max(sup_tangent_angle(w) - res, 0.0)
    bound = (math.pi / 2 - S) / 4 + tol
    if bound <= 0:
        raise InputError(f"tangent condition infeasible: sup angle {S:.6f} >= pi/2")
    q0 = min(dyadic_floor(bound, math.pi / 8), c1 / (2 * C1))
    limit = math.pi / 2 - 3 * q0 + res + tol
    for j in range(1, 41):
        c0 = (q0 / 2) * 2.0**-j
        if czercond_max(w, c0) <= limit:
            return q0, c0
    raise InputError("chord condition infeasible for every dyadic c0")


def verify_constants(w: WulffShape, q0: float, c0: float, tol: float = 1e-12) -> dict:
    """Re-check both angular conditions; returns the measured quantities and verdicts."""
    res = angular_resolution(w)
    S = sup_tangent_angle(w)
    C = czercond_max(w, c0)
    return {"sup_angle": S, "resolution": res,
            "supang_ok": S <= math.pi / 2 - 4 * q0 + res + tol,
            "chord_angle": C, "czercond_ok": C <= math.pi / 2 - 3 * q0 + res + tol,
            "order_ok": 0 < c0 < q0 / 2}


def wulff_with_constants(xi: XiTable, c1: float = 0.4, C1: float = 1.2,
                         samples: int | None = None) -> WulffShape:
    w = build_wulff(xi, samples)
    w.q0, w.c0 = choose_constants(w, c1, C1)
    w.meta = dict(w.meta, c1=c1, C1=C1)
    return w


def disc_wulff(dirs: int = 256, c1: float = 0.4, C1: float = 1.2) -> WulffShape:
    """Unit-area disc (constant decay rate) with its constants."""
    return wulff_with_constants(constant_xi(1.0, dirs), c1, C1)
