"""Outermost open circuit around the origin and the droplet statistics built on it.

Faces of the primal box are indexed by their lower-left corner.  A refined
grid holds faces at even cells, edges between them and (blocked) vertices at
odd cells; an edge cell is passable iff the edge is closed.  Flood-filling
from a padded exterior ring marks the faces joined to infinity by the dual
configuration.  When none of the four faces at the origin is marked, the
4-connected component of unmarked faces containing them has a simple open
boundary, and that boundary is the outermost open circuit.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields
from functools import lru_cache

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import InputError, InvariantError
from .lattice import BondConfig, BoxGeom

FOUR = ndimage.generate_binary_structure(2, 1)


# ---------------------------------------------------------------------------
# Circuits


@dataclass(eq=False)
class Circuit:
    """A simple closed lattice cycle, vertices listed counterclockwise (no repeat of the first)."""

    vertices: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.int64).reshape(-1, 2)

    def __len__(self) -> int:
        return len(self.vertices)

    def __eq__(self, other) -> bool:
        return isinstance(other, Circuit) and self.vertex_set() == other.vertex_set() and \
            self.edge_set() == other.edge_set()

    def vertex_set(self) -> set[tuple[int, int]]:
        return {(int(x), int(y)) for x, y in self.vertices}

    def edge_set(self) -> set[frozenset]:
        v = [tuple(map(int, p)) for p in self.vertices]
        return {frozenset((v[i], v[(i + 1) % len(v)])) for i in range(len(v))}

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Directed edge segments ``(start, end)`` in traversal order."""
        return self.vertices, np.roll(self.vertices, -1, axis=0)

    def area2(self) -> int:
        """Twice the signed shoelace area."""
        a, b = self.edges()
        return int(np.sum(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]))

    def shifted(self, v) -> "Circuit":
        return Circuit(self.vertices + np.asarray(v, dtype=np.int64))

    def validate(self) -> None:
        v = self.vertices
        if len(self.vertex_set()) != len(v):
            raise InvariantError("circuit repeats a vertex")
        a, b = self.edges()
        if not np.all(np.abs(a - b).sum(axis=1) == 1):
            raise InvariantError("consecutive circuit vertices are not neighbours")
        if self.area2() <= 0:
            raise InvariantError("circuit is not counterclockwise")


def interior_area(c: Circuit) -> int:
    """Area of the bounded component enclosed by the circuit (shoelace)."""
    a2 = c.area2()
    if a2 <= 0 or a2 % 2:
        raise InvariantError("circuit area must be a positive integer")
    return a2 // 2


# ---------------------------------------------------------------------------
# Extraction


@lru_cache(maxsize=16)
def _refined_layout(L: int):
    geom = BoxGeom(L)
    S = 4 * L + 3
    hx, hy = np.meshgrid(np.arange(2 * L), np.arange(2 * L + 1), indexing="ij")
    h_ids = geom.h_table[hx, hy]
    vx, vy = np.meshgrid(np.arange(2 * L + 1), np.arange(2 * L), indexing="ij")
    v_ids = geom.v_table[vx, vy]
    base = np.zeros((S, S), dtype=bool)
    base[0, :] = base[-1, :] = base[:, 0] = base[:, -1] = True
    base[2:4 * L + 1:2, 2:4 * L + 1:2] = True
    return S, (2 * hx + 2, 2 * hy + 1), h_ids, (2 * vx + 1, 2 * vy + 2), v_ids, base


def exterior_faces(geom: BoxGeom, states: np.ndarray) -> np.ndarray:
    """Faces joined to the outside of the box through closed edges, as a ``(2L, 2L)`` mask."""
    L = geom.half_width
    S, hcell, h_ids, vcell, v_ids, base = _refined_layout(L)
    grid = base.copy()
    grid[hcell] = ~states[h_ids]
    grid[vcell] = ~states[v_ids]
    lab, _ = ndimage.label(grid, structure=FOUR)
    faces = lab[2:4 * L + 1:2, 2:4 * L + 1:2]
    return faces == lab[0, 0]


def enclosed_faces(geom: BoxGeom, states: np.ndarray) -> np.ndarray | None:
    """Faces inside the outermost open circuit around the origin, or None if there is none."""
    L = geom.half_width
    reached = exterior_faces(geom, states)
    if reached[L - 1:L + 1, L - 1:L + 1].any():
        return None
    lab, _ = ndimage.label(~reached, structure=FOUR)
    return lab == lab[L, L]


def trace_face_boundary(faces: np.ndarray, L: int) -> Circuit:
    """Counterclockwise boundary of a simply connected, pinch-free 4-connected face set."""
    F = np.pad(faces, 1)
    core = F[1:-1, 1:-1]
    fi, fj = np.nonzero(core & ~F[1:-1, :-2])
    starts, ends = [], []
    x, y = fi - L, fj - L
    starts.append(np.stack([x, y], 1)); ends.append(np.stack([x + 1, y], 1))
    fi, fj = np.nonzero(core & ~F[2:, 1:-1]); x, y = fi - L, fj - L
    starts.append(np.stack([x + 1, y], 1)); ends.append(np.stack([x + 1, y + 1], 1))
    fi, fj = np.nonzero(core & ~F[1:-1, 2:]); x, y = fi - L, fj - L
    starts.append(np.stack([x + 1, y + 1], 1)); ends.append(np.stack([x, y + 1], 1))
    fi, fj = np.nonzero(core & ~F[:-2, 1:-1]); x, y = fi - L, fj - L
    starts.append(np.stack([x, y + 1], 1)); ends.append(np.stack([x, y], 1))
    s = np.concatenate(starts)
    t = np.concatenate(ends)
    nxt = {}
    for a, b in zip(map(tuple, s.tolist()), map(tuple, t.tolist())):
        if a in nxt:
            raise InvariantError(f"face set boundary is pinched at {a}")
        nxt[a] = b
    cur = min(nxt)
    first = cur
    out = [cur]
    for _ in range(len(nxt)):
        cur = nxt[cur]
        if cur == first:
            break
        out.append(cur)
    if len(out) != len(nxt):
        raise InvariantError("face set boundary has several components")
    return Circuit(np.array(out, dtype=np.int64))


def outermost_circuit(cfg: BondConfig) -> Circuit | None:
    """Outermost open circuit whose interior contains the origin, or None."""
    if cfg.geom.dual:
        raise InputError("circuits are extracted from primal configurations")
    faces = enclosed_faces(cfg.geom, cfg.states)
    if faces is None:
        return None
    return trace_face_boundary(faces, cfg.geom.half_width)


def outermost_area(cfg: BondConfig) -> int:
    """``|INT(outermost circuit)|``, 0 when the origin is not enclosed."""
    faces = enclosed_faces(cfg.geom, cfg.states)
    return 0 if faces is None else int(faces.sum())


# ---------------------------------------------------------------------------
# Convex hull


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Extreme points of the convex hull, counterclockwise, collinear points dropped."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=np.int64).tolist())))
    if len(pts) <= 2:
        return np.array(pts, dtype=np.int64)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=np.int64)


@dataclass
class Hull:
    vertices: np.ndarray  # extreme points, ccw

    @property
    def facets(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices, np.roll(self.vertices, -1, axis=0)

    def facet_lengths(self) -> np.ndarray:
        a, b = self.facets
        return np.hypot(*(b - a).T)

    def area2(self) -> int:
        a, b = self.facets
        return int(np.sum(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]))

    def perimeter(self) -> float:
        return float(self.facet_lengths().sum())


def hull_and_facets(c: Circuit) -> Hull:
    return Hull(convex_hull(c.vertices))


def _facet_cross(points: np.ndarray, hull: Hull) -> np.ndarray:
    """Integer ``cross(b - a, p - a)`` for every point (rows) and facet (columns)."""
    a, b = hull.facets
    d = b - a
    rel = points[:, None, :] - a[None, :, :]
    return d[None, :, 0] * rel[..., 1] - d[None, :, 1] * rel[..., 0]


def hull_distances(points: np.ndarray, hull: Hull) -> np.ndarray:
    """Distance from each point inside the hull to the hull boundary."""
    cr = _facet_cross(points, hull)
    return (cr / hull.facet_lengths()[None, :]).min(axis=1)


# ---------------------------------------------------------------------------
# Angular helpers


def angle_between(a, b) -> float:
    """Unsigned angle in ``[0, pi]`` between two nonzero vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(abs(math.atan2(a[0] * b[1] - a[1] * b[0], a[0] * b[0] + a[1] * b[1])))


def perp(v):
    """Counterclockwise rotation by a right angle."""
    return np.stack([-np.asarray(v)[..., 1], np.asarray(v)[..., 0]], axis=-1)


def in_forward_cone(v, w, aperture: float, tol: float = 1e-12) -> bool:
    """Is ``w`` in the cone at ``v`` of half-angle ``aperture`` about ``v``'s ccw perpendicular?"""
    v = np.asarray(v, dtype=float)
    d = np.asarray(w, dtype=float) - v
    nv = np.hypot(*v)
    return bool(d @ perp(v) >= np.hypot(*d) * nv * math.cos(aperture) - tol * (1 + nv))


def in_backward_cone(v, w, aperture: float, tol: float = 1e-12) -> bool:
    v = np.asarray(v, dtype=float)
    d = np.asarray(w, dtype=float) - v
    nv = np.hypot(*v)
    return bool(-(d @ perp(v)) >= np.hypot(*d) * nv * math.cos(aperture) - tol * (1 + nv))


def distance_angle_bound(x, y, q0: float) -> float:
    """Upper bound ``csc(q0/2) |x| angle(x, y)`` on ``|y - x|`` for cone-confined ``y``."""
    return float(np.hypot(*np.asarray(x, dtype=float)) * angle_between(x, y) / math.sin(q0 / 2))


# ---------------------------------------------------------------------------
# Cutpoints


def cutpoint_mask(c: Circuit) -> np.ndarray:
    """Boolean mask over circuit vertices: the origin ray through the vertex meets the circuit only there."""
    V = c.vertices
    A, B = c.edges()
    k = len(V)
    # cross and dot of each vertex direction with each segment endpoint
    ca = V[:, None, 0] * A[None, :, 1] - V[:, None, 1] * A[None, :, 0]
    cb = V[:, None, 0] * B[None, :, 1] - V[:, None, 1] * B[None, :, 0]
    da = V[:, None, 0] * A[None, :, 0] + V[:, None, 1] * A[None, :, 1]
    db = V[:, None, 0] * B[None, :, 0] + V[:, None, 1] * B[None, :, 1]
    idx = np.arange(k)
    incident = np.zeros((k, k), dtype=bool)
    incident[idx, idx] = True  # segment i starts at vertex i
    incident[idx, (idx - 1) % k] = True  # segment i-1 ends at vertex i
    collinear = (ca == 0) & (cb == 0)
    # non-collinear: crossing point P = (ca*B - cb*A)/(ca - cb); on the ray iff P.v > 0
    crosses = ((ca <= 0) & (cb >= 0)) | ((ca >= 0) & (cb <= 0))
    num = ca * db - cb * da
    den = ca - cb
    with np.errstate(invalid="ignore"):
        on_ray = np.where(den != 0, np.sign(num) * np.sign(den) > 0, False)
    bad_general = ~collinear & ~incident & crosses & on_ray
    bad_collinear = collinear & ((da > 0) | (db > 0))
    bad = bad_general | bad_collinear
    return ~bad.any(axis=1)


def cutpoints(c: Circuit) -> set[tuple[int, int]]:
    if not point_in_circuit((0, 0), c):
        raise InputError("origin must lie inside the circuit")
    return {tuple(map(int, p)) for p in c.vertices[cutpoint_mask(c)]}


def point_in_circuit(z, c: Circuit) -> bool:
    """Strict interior test by ray casting (``z`` not on the circuit)."""
    zx, zy = float(z[0]), float(z[1])
    A, B = c.edges()
    inside = False
    for (ax, ay), (bx, by) in zip(A.tolist(), B.tolist()):
        if (ay > zy) != (by > zy):
            xint = ax + (zy - ay) * (bx - ax) / (by - ay)
            if xint > zx:
                inside = not inside
    return inside


def cutpoint_split(c: Circuit, v1, v2) -> tuple[np.ndarray, np.ndarray]:
    """Two closed polygons: the circuit arc from ``v1`` ccw to ``v2`` closed through the origin, and the rest."""
    V = [tuple(map(int, p)) for p in c.vertices]
    i, j = V.index(tuple(v1)), V.index(tuple(v2))
    if i == j:
        raise InputError("cutpoints must be distinct")
    k = len(V)
    arc1 = [V[(i + s) % k] for s in range(((j - i) % k) + 1)]
    arc2 = [V[(j + s) % k] for s in range(((i - j) % k) + 1)]
    return (np.array([(0, 0)] + arc1, dtype=np.int64), np.array([(0, 0)] + arc2, dtype=np.int64))


def polygon_area2(poly: np.ndarray) -> int:
    a = np.asarray(poly, dtype=np.int64)
    b = np.roll(a, -1, axis=0)
    return int(np.sum(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]))


def _orient(a, b, c) -> int:
    v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    return (v > 0) - (v < 0)


def _on_segment(a, b, p) -> bool:
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])


def segments_intersect(a, b, c, d) -> bool:
    """Exact closed-segment intersection test for integer points."""
    o1, o2, o3, o4 = _orient(a, b, c), _orient(a, b, d), _orient(c, d, a), _orient(c, d, b)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and _on_segment(a, b, c)) or (o2 == 0 and _on_segment(a, b, d))
            or (o3 == 0 and _on_segment(c, d, a)) or (o4 == 0 and _on_segment(c, d, b)))


def polygon_is_simple(poly: np.ndarray) -> bool:
    """No two non-adjacent sides meet and adjacent sides share only their common vertex."""
    P = [tuple(map(int, p)) for p in poly]
    k = len(P)
    if len(set(P)) != k:
        return False
    for i in range(k):
        a, b = P[i], P[(i + 1) % k]
        for j in range(i + 1, k):
            c, d = P[j], P[(j + 1) % k]
            if j == i + 1 or (i == 0 and j == k - 1):
                # adjacent: they must not overlap beyond the shared vertex
                shared = b if j == i + 1 else a
                other1 = a if j == i + 1 else b
                other2 = d if j == i + 1 else c
                if _orient(other1, shared, other2) == 0 and \
                        (other2[0] - shared[0]) * (other1[0] - shared[0]) + \
                        (other2[1] - shared[1]) * (other1[1] - shared[1]) > 0:
                    return False
                continue
            if segments_intersect(a, b, c, d):
                return False
    return True


# ---------------------------------------------------------------------------
# Regeneration sites


def regeneration_mask(c: Circuit, q0: float, c0: float, tol: float = 1e-12) -> np.ndarray:
    """Vertices ``v`` such that every circuit point within angle ``c0`` of ``v`` lies in
    one of the two cones at ``v`` of half-angle ``pi/2 - q0`` about ``+/- perp(v)``.

    Each circuit edge is clipped to the angular window, and the clipped piece
    must lie in a single cone (both cones are convex and meet only at ``v``;
    edges incident to ``v`` are checked through their far endpoint).
    """
    if not (0 < c0 < q0 / 2 < math.pi / 4):
        raise InputError("need 0 < c0 < q0/2 < pi/4")
    V = c.vertices.astype(float)
    A, B = (x.astype(float) for x in c.edges())
    k = len(V)
    norm = np.hypot(V[:, 0], V[:, 1])
    u = V / norm[:, None]
    cs, sn = math.cos(c0), math.sin(c0)
    r_cw = np.stack([cs * u[:, 0] + sn * u[:, 1], -sn * u[:, 0] + cs * u[:, 1]], 1)
    r_ccw = np.stack([cs * u[:, 0] - sn * u[:, 1], sn * u[:, 0] + cs * u[:, 1]], 1)

    def crs(r, P):  # (k,) rays x (k,) points -> (k, k)
        return r[:, None, 0] * P[None, :, 1] - r[:, None, 1] * P[None, :, 0]

    lo = np.zeros((k, k))
    hi = np.ones((k, k))
    empty = np.zeros((k, k), dtype=bool)
    for fa, fb in ((crs(r_cw, A), crs(r_cw, B)), (-crs(r_ccw, A), -crs(r_ccw, B))):
        fa = np.where(np.abs(fa) < tol, 0.0, fa)
        fb = np.where(np.abs(fb) < tol, 0.0, fb)
        empty |= (fa < 0) & (fb < 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = fa / (fa - fb)
        hi = np.where((fa >= 0) & (fb < 0), np.minimum(hi, t), hi)
        lo = np.where((fa < 0) & (fb >= 0), np.maximum(lo, t), lo)
    empty |= lo > hi
    D = B - A
    P1 = A[None, :, :] + lo[..., None] * D[None, :, :]
    P2 = A[None, :, :] + hi[..., None] * D[None, :, :]
    pv = perp(V)
    sq = math.sin(q0)

    def cone_flags(P):
        d = P - V[:, None, :]
        dl = np.hypot(d[..., 0], d[..., 1])
        proj = d[..., 0] * pv[:, None, 0] + d[..., 1] * pv[:, None, 1]
        slack = tol * (1.0 + norm[:, None])
        rhs = dl * norm[:, None] * sq - slack
        return proj >= rhs, -proj >= rhs

    f1, b1 = cone_flags(P1)
    f2, b2 = cone_flags(P2)
    idx = np.arange(k)
    incident = np.zeros((k, k), dtype=bool)
    incident[idx, idx] = True
    incident[idx, (idx - 1) % k] = True
    same = (f1 & f2) | (b1 & b2)
    each = (f1 | b1) & (f2 | b2)
    ok = empty | np.where(incident, each, same)
    return ok.all(axis=1)


def regeneration_sites(c: Circuit, q0: float, c0: float) -> np.ndarray:
    """Regeneration sites as an ``(r, 2)`` array, in circuit order."""
    return c.vertices[regeneration_mask(c, q0, c0)]


def theta_rg_max(rg) -> float:
    """Largest angular gap between consecutive sites seen from the origin (``2 pi`` if at most one)."""
    rg = np.asarray(rg, dtype=float).reshape(-1, 2)
    if len(rg) <= 1:
        return 2 * math.pi
    ang = np.sort(np.arctan2(rg[:, 1], rg[:, 0]))
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * math.pi]]))
    return float(gaps.max())


def nearest_sites_by_angle(points: np.ndarray, rg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices into ``rg`` of the first site met by a ccw and by a cw angular search from each point.

    The search starts at the point itself, so a site at the same argument is met first.
    """
    ang_rg = np.arctan2(rg[:, 1].astype(float), rg[:, 0].astype(float))
    order = np.argsort(ang_rg)
    srt = ang_rg[order]
    ang = np.arctan2(points[:, 1].astype(float), points[:, 0].astype(float))
    r = len(srt)
    ccw = np.searchsorted(srt, ang, side="left") % r
    cw = (np.searchsorted(srt, ang, side="right") - 1) % r
    return order[ccw], order[cw]


def mprg(c: Circuit, rg: np.ndarray) -> float:
    """Largest distance from a circuit vertex to the sites met by ccw and cw angular searches."""
    rg = np.asarray(rg).reshape(-1, 2)
    if len(rg) == 0:
        return math.nan
    i1, i2 = nearest_sites_by_angle(c.vertices, rg)
    d1 = np.hypot(*(c.vertices - rg[i1]).T)
    d2 = np.hypot(*(c.vertices - rg[i2]).T)
    return float(max(d1.max(), d2.max()))


# ---------------------------------------------------------------------------
# Global distortion


def circuit_point_cloud(c: Circuit) -> np.ndarray:
    """Vertices and edge midpoints of the circuit."""
    a, b = c.edges()
    return np.concatenate([a.astype(float), (a + b) / 2.0])


def resample_closed_curve(poly: np.ndarray, count: int) -> np.ndarray:
    """``count`` points equally spaced in arc length along a closed polygon."""
    P = np.asarray(poly, dtype=float)
    Q = np.roll(P, -1, axis=0)
    seg = np.hypot(*(Q - P).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    s = np.arange(count) * cum[-1] / count
    k = np.searchsorted(cum, s, side="right") - 1
    t = (s - cum[k]) / seg[k]
    return P[k] + t[:, None] * (Q[k] - P[k])


def hausdorff_translates(cloud: np.ndarray, shape_pts: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """Hausdorff distance between ``cloud`` and ``shape_pts + z`` for every shift ``z``."""
    ctree = cKDTree(cloud)
    stree = cKDTree(shape_pts)
    Z = shifts.astype(float)
    moved = (shape_pts[None, :, :] + Z[:, None, :]).reshape(-1, 2)
    d1, _ = ctree.query(moved)
    back = (cloud[None, :, :] - Z[:, None, :]).reshape(-1, 2)
    d2, _ = stree.query(back)
    return np.maximum(d1.reshape(len(Z), -1).max(axis=1), d2.reshape(len(Z), -1).max(axis=1))


def gd_and_center(c: Circuit, wulff_boundary: np.ndarray, n: int) -> tuple[float, tuple[int, int]]:
    """Hausdorff distance to the best lattice translate of ``n`` times the Wulff boundary.

    Ties in the minimizing translate are broken lexicographically.
    """
    cloud = circuit_point_cloud(c)
    shape_pts = resample_closed_curve(n * np.asarray(wulff_boundary, dtype=float), max(256, 16 * n))
    z0 = np.rint(c.vertices.mean(axis=0)).astype(np.int64)
    gd0 = float(hausdorff_translates(cloud, shape_pts, z0[None, :])[0])
    rad = int(math.ceil(2 * gd0))
    gx, gy = np.meshgrid(np.arange(-rad, rad + 1), np.arange(-rad, rad + 1), indexing="ij")
    keep = gx**2 + gy**2 <= (2 * gd0) ** 2 + 1e-9
    shifts = np.stack([gx[keep], gy[keep]], 1) + z0
    # the distance is 1-Lipschitz in the shift: a coarse pass bounds every candidate
    # from below, and only shifts whose bound can reach the minimum are evaluated
    step = 4
    off = shifts - z0
    near = z0 + step * np.rint(off / step).astype(np.int64)
    coarse, inv = np.unique(near, axis=0, return_inverse=True)
    coarse_vals = hausdorff_translates(cloud, shape_pts, coarse)
    lower = coarse_vals[inv.ravel()] - np.hypot(*(shifts - near).T)
    best_known = min(coarse_vals.min(), gd0)
    cand = shifts[lower <= best_known + 1e-9]
    vals = hausdorff_translates(cloud, shape_pts, cand)
    best = vals.min()
    tied = cand[vals <= best + 1e-12]
    cen = min(map(tuple, tied.tolist()))
    return float(best), (int(cen[0]), int(cen[1]))


# ---------------------------------------------------------------------------
# Path fluctuation


def fluc(path, x, y) -> float:
    """Largest distance from the polyline ``path`` to the segment ``[x, y]``.

    Distance to a segment is convex, so the maximum over a polyline is attained at a vertex.
    """
    P = np.asarray(path, dtype=float).reshape(-1, 2)
    a = np.asarray(x, dtype=float)
    b = np.asarray(y, dtype=float)
    d = b - a
    L2 = d @ d
    t = np.clip(((P - a) @ d) / L2, 0.0, 1.0) if L2 > 0 else np.zeros(len(P))
    proj = a + t[:, None] * d
    return float(np.hypot(*(P - proj).T).max())


# ---------------------------------------------------------------------------
# Droplet statistics


@dataclass
class DropletStats:
    """Per-sample droplet record.  Field order is the CSV column order."""

    n: int
    seed: int
    stream: int
    sample: int
    area: int
    exc: int
    mlr: float
    mfl: float
    mlrf: float
    alr: float
    gd: float
    cen_x: int
    cen_y: int
    theta_rg_max: float
    mprg: float
    rg_count: int
    radius: float
    all_on_hull: int
    x_mlr_x: int
    x_mlr_y: int

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list:
        return [getattr(self, k) for k in self.columns()]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def stats_to_csv(rows, header: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(DropletStats.columns())
    for r in rows:
        w.writerow([_fmt(v) for v in r.row()])
    return buf.getvalue()


def stats_from_csv(text: str) -> list[DropletStats]:
    rd = csv.reader(io.StringIO(text))
    head = next(rd)
    if head != DropletStats.columns():
        raise InputError("unexpected DropletStats header")
    types = {f.name: f.type for f in fields(DropletStats)}
    out = []
    for rec in rd:
        if not rec:
            continue
        kw = {}
        for k, v in zip(head, rec):
            kw[k] = float(v) if types[k] in (float, "float") else int(v)
        out.append(DropletStats(**kw))
    return out


def _bracketing_extremes(hull: np.ndarray, x) -> tuple[np.ndarray, np.ndarray]:
    """Hull extreme points first met by a cw (inclusive) and a ccw (strict) angular search from ``x``."""
    ang = np.arctan2(hull[:, 1].astype(float), hull[:, 0].astype(float))
    ax = math.atan2(float(x[1]), float(x[0]))
    rel = np.mod(ang - ax, 2 * math.pi)
    is_x = np.all(hull == np.asarray(x), axis=1)
    rel[is_x] = 0.0
    ccw_rel = np.where(rel > 0, rel, np.inf)
    cw_rel = np.mod(ax - ang, 2 * math.pi)
    cw_rel[is_x] = 0.0
    return hull[int(np.argmin(cw_rel))], hull[int(np.argmin(ccw_rel))]


def mlr_facet(c: Circuit, hull: Hull | None = None):
    """Maximum local roughness and its facet.

    Returns ``(mlr, x_mlr, x_minus, x_plus, on_hull)`` where ``x_mlr`` is the
    lexicographically smallest vertex attaining the maximal distance to the
    hull boundary, ``x_minus``/``x_plus`` are the hull extreme points met by
    cw (inclusive) and ccw (strict) angular searches about the origin, and
    ``on_hull`` flags the vertices lying on the hull boundary.
    """
    hull = hull if hull is not None else hull_and_facets(c)
    V = c.vertices
    cr = _facet_cross(V, hull)
    on_hull = (cr == 0).any(axis=1)
    dist = np.where(on_hull, 0.0, (cr / hull.facet_lengths()[None, :]).min(axis=1))
    mlr = float(dist.max())
    cand = V[dist >= mlr - 1e-9]
    x_mlr = min(map(tuple, cand.tolist()))
    xm, xp = _bracketing_extremes(hull.vertices, x_mlr)
    return mlr, x_mlr, xm, xp, on_hull


def droplet_stats(cfg: BondConfig, n: int, wulff_boundary: np.ndarray, q0: float, c0: float,
                  seed: int = 0, stream: int = 0, sample: int = 0,
                  circuit: Circuit | None = None) -> DropletStats:
    """All droplet statistics of the outermost circuit of ``cfg``."""
    c = circuit if circuit is not None else outermost_circuit(cfg)
    if c is None:
        raise InputError("the origin is not enclosed by an open circuit")
    area = interior_area(c)
    hull = hull_and_facets(c)
    V = c.vertices
    mlr, x_mlr, xm, xp, on_hull = mlr_facet(c, hull)
    mfl = float(hull.facet_lengths().max())
    mlrf = float(np.hypot(*(xp - xm)))
    alr = (hull.area2() / 2.0 - area) / hull.perimeter()
    gd, cen = gd_and_center(c, wulff_boundary, n)
    rg = regeneration_sites(c, q0, c0)
    return DropletStats(
        n=int(n), seed=int(seed), stream=int(stream), sample=int(sample), area=area,
        exc=area - n * n, mlr=mlr, mfl=mfl, mlrf=mlrf, alr=float(alr), gd=gd,
        cen_x=cen[0], cen_y=cen[1], theta_rg_max=theta_rg_max(rg), mprg=mprg(c, rg),
        rg_count=int(len(rg)), radius=float(np.hypot(V[:, 0], V[:, 1]).max()),
        all_on_hull=int(on_hull.all()), x_mlr_x=int(x_mlr[0]), x_mlr_y=int(x_mlr[1]),
    )


def validate_row(s: DropletStats) -> list[str]:
    """Consistency checks every stored row must pass; returns the list of violations."""
    bad = []
    if s.area >= s.n * s.n and s.exc != s.area - s.n * s.n:
        bad.append("exc")
    if s.mlrf > s.mfl + 1e-9:
        bad.append("mlrf>mfl")
    if (s.mlr == 0.0) != bool(s.all_on_hull):
        bad.append("mlr/hull")
    return bad
