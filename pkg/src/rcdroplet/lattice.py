"""Square-lattice boxes, bond configurations, edge regions and planar duality.

A primal box of half-width ``L`` has vertices ``[-L, L]^2``.  Edges carry dense
ids assigned in lexicographic vertex order, horizontal edge first, so a
configuration is a flat boolean array.

The dual box has vertices at ``(i + 1/2, j + 1/2)`` for ``i, j`` in
``[-L-1, L]``: the faces of the primal box plus a surrounding ring.  Only dual
edges crossing a primal edge are represented and they reuse the primal edge
ids, so the dual of a configuration is simply its complement.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import InputError

HORIZONTAL = 0
VERTICAL = 1


@dataclass(frozen=True, eq=False)
class BoxGeom:
    """Geometry of an origin-centred box (primal or dual).

    Vertex coordinates are stored doubled (``xy2``) so that dual half-integer
    positions stay exact integers.
    """

    half_width: int
    dual: bool = False
    xy2: np.ndarray = field(init=False, repr=False)
    edge_u: np.ndarray = field(init=False, repr=False)
    edge_v: np.ndarray = field(init=False, repr=False)
    edge_axis: np.ndarray = field(init=False, repr=False)
    boundary: np.ndarray = field(init=False, repr=False)
    incidence: np.ndarray = field(init=False, repr=False)
    _hid: np.ndarray = field(init=False, repr=False)
    _vid: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        L = int(self.half_width)
        if L < 1:
            raise InputError(f"half_width must be >= 1, got {L}")
        object.__setattr__(self, "half_width", L)
        N = 2 * L + 1
        hid = np.full((N, N), -1, dtype=np.int64)
        vid = np.full((N, N), -1, dtype=np.int64)
        eid = 0
        axes = []
        for ix in range(N):
            for iy in range(N):
                if ix < N - 1:
                    hid[ix, iy] = eid
                    eid += 1
                    axes.append(HORIZONTAL)
                if iy < N - 1:
                    vid[ix, iy] = eid
                    eid += 1
                    axes.append(VERTICAL)
        axes = np.array(axes, dtype=np.int8)
        base = np.zeros((eid, 2), dtype=np.int64)
        for ix in range(N):
            for iy in range(N):
                if hid[ix, iy] >= 0:
                    base[hid[ix, iy]] = (ix - L, iy - L)
                if vid[ix, iy] >= 0:
                    base[vid[ix, iy]] = (ix - L, iy - L)
        if not self.dual:
            xs, ys = np.meshgrid(np.arange(-L, L + 1), np.arange(-L, L + 1), indexing="ij")
            xy2 = 2 * np.stack([xs.ravel(), ys.ravel()], axis=1)
            bx, by = base[:, 0], base[:, 1]
            u = (bx + L) * N + (by + L)
            v = np.where(axes == HORIZONTAL, u + N, u + 1)
            bnd = (np.abs(xy2[:, 0]) == 2 * L) | (np.abs(xy2[:, 1]) == 2 * L)
        else:
            M = 2 * L + 2
            ii, jj = np.meshgrid(np.arange(-L - 1, L + 1), np.arange(-L - 1, L + 1), indexing="ij")
            xy2 = np.stack([2 * ii.ravel() + 1, 2 * jj.ravel() + 1], axis=1)
            bx, by = base[:, 0], base[:, 1]
            # horizontal primal edge (x,y)-(x+1,y): dual (x+1/2, y-1/2)-(x+1/2, y+1/2)
            # vertical primal edge (x,y)-(x,y+1): dual (x-1/2, y+1/2)-(x+1/2, y+1/2)
            hi = bx + L + 1
            hj = by + L
            u_h = hi * M + hj
            v_h = u_h + 1
            vi = bx + L
            vj = by + L + 1
            u_v = vi * M + vj
            v_v = u_v + M
            u = np.where(axes == HORIZONTAL, u_h, u_v)
            v = np.where(axes == HORIZONTAL, v_h, v_v)
            bnd = (np.abs(xy2[:, 0]) == 2 * L + 1) | (np.abs(xy2[:, 1]) == 2 * L + 1)
        object.__setattr__(self, "xy2", xy2.astype(np.int64))
        object.__setattr__(self, "edge_u", u.astype(np.int64))
        object.__setattr__(self, "edge_v", v.astype(np.int64))
        object.__setattr__(self, "edge_axis", axes)
        object.__setattr__(self, "boundary", bnd)
        object.__setattr__(self, "_hid", hid)
        object.__setattr__(self, "_vid", vid)
        inc = np.full((len(xy2), 4), -1, dtype=np.int64)
        deg = np.zeros(len(xy2), dtype=np.int64)
        for e, (a, b) in enumerate(zip(u, v)):
            inc[a, deg[a]] = e
            deg[a] += 1
            inc[b, deg[b]] = e
            deg[b] += 1
        object.__setattr__(self, "incidence", inc)

    # sizes -----------------------------------------------------------------
    @property
    def side(self) -> int:
        return 2 * self.half_width + 1

    @property
    def n_edges(self) -> int:
        return len(self.edge_u)

    @property
    def n_vertices(self) -> int:
        return len(self.xy2)

    # indexing (primal coordinates) -----------------------------------------
    def in_box(self, x: int, y: int) -> bool:
        L = self.half_width
        return -L <= x <= L and -L <= y <= L

    def vertex_id(self, x: int, y: int) -> int:
        """Id of primal vertex ``(x, y)``; for a dual box, of ``(x+1/2, y+1/2)``."""
        if self.dual:
            L = self.half_width
            if not (-L - 1 <= x <= L and -L - 1 <= y <= L):
                raise InputError(f"dual vertex ({x}+1/2, {y}+1/2) outside box")
            M = 2 * L + 2
            return (x + L + 1) * M + (y + L + 1)
        if not self.in_box(x, y):
            raise InputError(f"vertex ({x}, {y}) outside box of half-width {self.half_width}")
        return (x + self.half_width) * self.side + (y + self.half_width)

    def edge_id(self, x: int, y: int, axis: int) -> int:
        """Id of the primal edge from ``(x, y)`` to ``(x+1, y)`` (axis 0) or ``(x, y+1)`` (axis 1)."""
        L = self.half_width
        table = self._hid if axis == HORIZONTAL else self._vid
        ix, iy = x + L, y + L
        if not (0 <= ix < self.side and 0 <= iy < self.side) or table[ix, iy] < 0:
            raise InputError(f"no edge at ({x}, {y}) axis {axis}")
        return int(table[ix, iy])

    def edge_between(self, a, b) -> int:
        (ax, ay), (bx, by) = a, b
        if (ax, ay) > (bx, by):
            ax, ay, bx, by = bx, by, ax, ay
        if bx - ax == 1 and by == ay:
            return self.edge_id(ax, ay, HORIZONTAL)
        if bx == ax and by - ay == 1:
            return self.edge_id(ax, ay, VERTICAL)
        raise InputError(f"{a} and {b} are not lattice neighbours")

    def edge_endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """Endpoint coordinates (integer for primal, doubled for dual)."""
        if self.dual:
            return self.xy2[self.edge_u], self.xy2[self.edge_v]
        return self.xy2[self.edge_u] // 2, self.xy2[self.edge_v] // 2

    @property
    def h_table(self) -> np.ndarray:
        """``h_table[x+L, y+L]`` = id of the horizontal edge at (x, y), or -1."""
        return self._hid

    @property
    def v_table(self) -> np.ndarray:
        return self._vid


@dataclass(eq=False)
class BondConfig:
    """Edge states of a box; ``states[e]`` is True when edge ``e`` is open."""

    geom: BoxGeom
    states: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=bool)
        if self.states.shape != (self.geom.n_edges,):
            raise InputError(
                f"expected {self.geom.n_edges} edge states, got shape {self.states.shape}"
            )

    @classmethod
    def closed(cls, geom: BoxGeom) -> "BondConfig":
        return cls(geom, np.zeros(geom.n_edges, dtype=bool))

    @classmethod
    def open(cls, geom: BoxGeom) -> "BondConfig":
        return cls(geom, np.ones(geom.n_edges, dtype=bool))

    @classmethod
    def from_index(cls, geom: BoxGeom, index: int) -> "BondConfig":
        """Configuration whose edge ``e`` is bit ``e`` of ``index``."""
        bits = (int(index) >> np.arange(geom.n_edges)) & 1
        return cls(geom, bits.astype(bool))

    def to_index(self) -> int:
        return int(sum(1 << int(e) for e in np.flatnonzero(self.states)))

    @property
    def open_count(self) -> int:
        return int(np.count_nonzero(self.states))

    def copy(self) -> "BondConfig":
        return BondConfig(self.geom, self.states.copy())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BondConfig)
            and self.geom.half_width == other.geom.half_width
            and self.geom.dual == other.geom.dual
            and np.array_equal(self.states, other.states)
        )


def configs_to_indices(states: np.ndarray) -> np.ndarray:
    """Pack rows of boolean edge states (<= 62 edges) into integer indices."""
    states = np.asarray(states, dtype=np.int64)
    weights = np.left_shift(np.int64(1), np.arange(states.shape[-1], dtype=np.int64))
    return states @ weights


def all_configs(n_edges: int) -> np.ndarray:
    """All ``2**n_edges`` configurations as a boolean array, row ``k`` = index ``k``."""
    idx = np.arange(1 << n_edges, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n_edges)) & 1).astype(bool)


# ---------------------------------------------------------------------------
# Regions


@dataclass(eq=False)
class Region:
    """A set of edges of a box, held as a boolean mask over edge ids."""

    geom: BoxGeom
    mask: np.ndarray
    label: str = ""

    def __contains__(self, e) -> bool:
        return bool(self.mask[int(e)])

    @property
    def edge_ids(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def __len__(self) -> int:
        return int(np.count_nonzero(self.mask))

    def shift_map(self, shift) -> np.ndarray:
        """Ids of the translated edges ``e + shift``, aligned with ``edge_ids``.

        Raises InputError if a translated edge leaves the box.
        """
        sx, sy = (int(s) for s in shift)
        a, _ = self.geom.edge_endpoints()
        ids = self.edge_ids
        out = np.empty(len(ids), dtype=np.int64)
        for k, e in enumerate(ids):
            x, y = int(a[e, 0]) + sx, int(a[e, 1]) + sy
            axis = int(self.geom.edge_axis[e])
            ex, ey = (x + 1, y) if axis == HORIZONTAL else (x, y + 1)
            if not (self.geom.in_box(x, y) and self.geom.in_box(ex, ey)):
                raise InputError(f"edge {int(e)} shifted by {(sx, sy)} leaves the box")
            out[k] = self.geom.edge_id(x, y, axis)
        return out

    def shifted(self, shift) -> "Region":
        """Translate by a lattice vector (every edge must stay inside the box)."""
        out = np.zeros_like(self.mask)
        out[self.shift_map(shift)] = True
        return Region(self.geom, out, f"{self.label}+{tuple(int(s) for s in shift)}")

    def __or__(self, other: "Region") -> "Region":
        return Region(self.geom, self.mask | other.mask)

    def __and__(self, other: "Region") -> "Region":
        return Region(self.geom, self.mask & other.mask)

    def __invert__(self) -> "Region":
        return Region(self.geom, ~self.mask)


def full_region(geom: BoxGeom) -> Region:
    return Region(geom, np.ones(geom.n_edges, dtype=bool), "box")


def region_from_edges(geom: BoxGeom, edges) -> Region:
    mask = np.zeros(geom.n_edges, dtype=bool)
    mask[np.asarray(list(edges), dtype=np.int64)] = True
    return Region(geom, mask)


def box_region(geom: BoxGeom, lo, hi) -> Region:
    """Edges whose both endpoints lie in the axis-parallel rectangle ``[lo, hi]``."""
    a, b = geom.edge_endpoints()
    inside = lambda p: (p[:, 0] >= lo[0]) & (p[:, 0] <= hi[0]) & (p[:, 1] >= lo[1]) & (p[:, 1] <= hi[1])
    return Region(geom, inside(a) & inside(b), f"rect{tuple(lo)}-{tuple(hi)}")


def _cross(a, b):
    return a[0] * b[1] - a[1] * b[0]


def _halfplane_interval(fa, fb, strict):
    """Parameter set ``{t in [0,1] : fa + t(fb-fa) >= 0}`` (``> 0`` if strict).

    Returned as ``(lo, lo_closed, hi, hi_closed)`` with Fraction endpoints, or
    None when empty.  ``fa``/``fb`` are exact (int or Fraction).
    """
    ok = (lambda f: f > 0) if strict else (lambda f: f >= 0)
    a_ok, b_ok = ok(fa), ok(fb)
    if a_ok and b_ok:
        return (Fraction(0), True, Fraction(1), True)
    if not a_ok and not b_ok:
        return None
    t = Fraction(fa, 1) / (Fraction(fa, 1) - fb)
    if a_ok:
        return (Fraction(0), True, t, not strict)
    return (t, not strict, Fraction(1), True)


def _intersect(i1, i2):
    if i1 is None or i2 is None:
        return None
    lo, lc = max((i1[0], i1[1]), (i2[0], i2[1]), key=lambda z: (z[0], not z[1]))
    hi, hc = min((i1[2], i1[3]), (i2[2], i2[3]), key=lambda z: (z[0], z[1]))
    if lo < hi or (lo == hi and lc and hc):
        return (lo, lc, hi, hc)
    return None


def _segment_meets_convex_cone(a, b, r1, r2, strict):
    """Does segment [a,b] meet the cone swept ccw from ray r1 to ray r2 (angle <= pi)?"""
    c12 = _cross(r1, r2)
    i1 = _halfplane_interval(_cross(r1, a), _cross(r1, b), strict)
    if c12 == 0:
        # half-plane left of r1 (r2 antiparallel)
        return i1 is not None
    i2 = _halfplane_interval(_cross(a, r2), _cross(b, r2), strict)
    return _intersect(i1, i2) is not None


def _in_convex_cone(z, r1, r2, strict):
    f1, f2 = _cross(r1, z), _cross(z, r2)
    if _cross(r1, r2) == 0:
        return f1 > 0 if strict else f1 >= 0
    return (f1 > 0 and f2 > 0) if strict else (f1 >= 0 and f2 >= 0)


def sweep_class(x, y) -> int:
    """Sign class of the ccw sweep from ``x`` to ``y``: -1 below pi, 0 exactly pi, +1 above."""
    c = _cross(x, y)
    if c > 0:
        return -1
    if c < 0:
        return 1
    if x[0] * y[0] + x[1] * y[1] < 0:
        return 0
    raise InputError(f"degenerate sector: {tuple(x)} and {tuple(y)} are parallel")


def point_in_sector(z, x, y) -> bool:
    """Is ``z`` in the closed sector swept ccw from ``x`` to ``y``?  Exact for integer input."""
    cls_ = sweep_class(x, y)
    if cls_ <= 0:
        return _in_convex_cone(z, x, y, strict=False)
    return not _in_convex_cone(z, y, x, strict=True)


def segment_in_sector(a, b, x, y) -> bool:
    """Closed segment [a,b] contained in the closed sector from x to y."""
    if sweep_class(x, y) <= 0:
        return point_in_sector(a, x, y) and point_in_sector(b, x, y)
    return not _segment_meets_convex_cone(a, b, y, x, strict=True)


def segment_meets_sector(a, b, x, y) -> bool:
    if sweep_class(x, y) <= 0:
        return _segment_meets_convex_cone(a, b, x, y, strict=False)
    return not (_in_convex_cone(a, y, x, True) and _in_convex_cone(b, y, x, True))


def sector_region(geom: BoxGeom, x, y, touching: bool = False) -> Region:
    """Edges of the closed sector swept ccw from ``x`` to ``y``.

    With ``touching=False`` an edge belongs when its whole segment lies in the
    sector; with ``touching=True`` when the segment meets it.  Membership is
    decided exactly with integer cross products.
    """
    if geom.dual:
        raise InputError("sector regions are defined on the primal box")
    x = (int(x[0]), int(x[1]))
    y = (int(y[0]), int(y[1]))
    sweep_class(x, y)
    a, b = geom.edge_endpoints()
    test = segment_meets_sector if touching else segment_in_sector
    mask = np.fromiter(
        (test((int(p[0]), int(p[1])), (int(r[0]), int(r[1])), x, y) for p, r in zip(a, b)),
        dtype=bool,
        count=geom.n_edges,
    )
    return Region(geom, mask, f"sector{x}->{y}{'*' if touching else ''}")


def cone_rays(direction, half_angle: float):
    """Boundary rays (cw, ccw) of the cone of half-angle ``half_angle`` about ``direction``."""
    d = np.asarray(direction, dtype=float)
    d = d / np.hypot(*d)
    c, s = np.cos(half_angle), np.sin(half_angle)
    cw = (c * d[0] + s * d[1], -s * d[0] + c * d[1])
    ccw = (c * d[0] - s * d[1], s * d[0] + c * d[1])
    return cw, ccw


def angular_cone_region(geom: BoxGeom, direction, half_angle: float, touching: bool = False) -> Region:
    """Edges of the closed cone of angular half-width ``half_angle`` (< pi/2) about ``direction``.

    Floating-point version for cones whose opening is a real angle.
    """
    if not 0 < half_angle < np.pi / 2:
        raise InputError("half_angle must lie in (0, pi/2)")
    r1, r2 = cone_rays(direction, half_angle)
    a, b = geom.edge_endpoints()
    out = np.empty(geom.n_edges, dtype=bool)
    for e in range(geom.n_edges):
        p, r = a[e].astype(float), b[e].astype(float)
        if touching:
            out[e] = _float_segment_meets(p, r, r1, r2)
        else:
            out[e] = _float_in(p, r1, r2) and _float_in(r, r1, r2)
    return Region(geom, out, "cone")


def _float_in(z, r1, r2, tol=1e-12):
    return _cross(r1, z) >= -tol and _cross(z, r2) >= -tol


def _float_segment_meets(a, b, r1, r2):
    lo, hi = 0.0, 1.0
    for fa, fb in ((_cross(r1, a), _cross(r1, b)), (_cross(a, r2), _cross(b, r2))):
        if fa < 0 and fb < 0:
            return False
        if fa >= 0 and fb >= 0:
            continue
        t = fa / (fa - fb)
        if fa >= 0:
            hi = min(hi, t)
        else:
            lo = max(lo, t)
    return lo <= hi + 1e-12


# ---------------------------------------------------------------------------
# Connectivity


def component_labels(geom: BoxGeom, states: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Connected-component label of every vertex using open edges (restricted to ``mask``)."""
    use = np.asarray(states, dtype=bool)
    if mask is not None:
        use = use & mask
    u, v = geom.edge_u[use], geom.edge_v[use]
    nv = geom.n_vertices
    graph = coo_matrix((np.ones(len(u), dtype=np.int8), (u, v)), shape=(nv, nv))
    _, labels = connected_components(graph, directed=False)
    return labels


def connected(cfg: BondConfig, x, y, region: Region | None = None) -> bool:
    """Is there an open path from ``x`` to ``y`` using only edges of ``region``?"""
    g = cfg.geom
    ix, iy = g.vertex_id(*x), g.vertex_id(*y)
    if ix == iy:
        return True
    labels = component_labels(g, cfg.states, None if region is None else region.mask)
    return bool(labels[ix] == labels[iy])


def open_cluster(cfg: BondConfig, x, region: Region | None = None) -> set[tuple[int, int]]:
    """Vertices joined to ``x`` by open edges of ``region`` (primal coordinates)."""
    g = cfg.geom
    ix = g.vertex_id(*x)
    labels = component_labels(g, cfg.states, None if region is None else region.mask)
    members = np.flatnonzero(labels == labels[ix])
    return {(int(p[0]) // 2, int(p[1]) // 2) for p in g.xy2[members]}


def count_components(geom: BoxGeom, states: np.ndarray, wired: bool) -> int:
    """Number of open clusters; with ``wired`` only those avoiding the boundary vertices."""
    labels = component_labels(geom, states)
    k = int(labels.max()) + 1
    if not wired:
        return k
    touched = np.unique(labels[geom.boundary])
    return k - len(touched)


# ---------------------------------------------------------------------------
# Duality


def dual_geom(geom: BoxGeom) -> BoxGeom:
    return BoxGeom(geom.half_width, dual=not geom.dual)


def dual_config(cfg: BondConfig) -> BondConfig:
    """Dual configuration: each dual edge is open iff the primal edge it crosses is closed."""
    return BondConfig(dual_geom(cfg.geom), ~cfg.states)


# ---------------------------------------------------------------------------
# Snapshot format


def _encode_runs(states: np.ndarray) -> str:
    s = np.asarray(states, dtype=np.int8)
    if len(s) == 0:
        return "0"
    change = np.flatnonzero(np.diff(s)) + 1
    bounds = np.concatenate([[0], change, [len(s)]])
    runs = np.diff(bounds)
    return " ".join([str(int(s[0]))] + [str(int(r)) for r in runs])


def _decode_runs(line: str, n: int) -> np.ndarray:
    tok = line.split()
    if not tok or tok[0] not in ("0", "1"):
        raise InputError("malformed run-length line")
    state = tok[0] == "1"
    out = np.empty(n, dtype=bool)
    pos = 0
    for t in tok[1:]:
        r = int(t)
        if r <= 0 or pos + r > n:
            raise InputError("run lengths do not match the edge count")
        out[pos:pos + r] = state
        pos += r
        state = not state
    if pos != n:
        raise InputError(f"run lengths cover {pos} edges, expected {n}")
    return out


def write_snapshot(cfg: BondConfig, p: float, q: float, bc: str, seed: int) -> str:
    """Serialize a primal configuration.

    Line 1: ``rcgrid v1 L=<L> p=<p> q=<q> bc=<free|wired> seed=<u64>``.
    Line 2: the state of edge 0 followed by alternating run lengths in edge-id order.
    Floats are written with ``repr`` so the round trip is bit-exact.
    """
    if cfg.geom.dual:
        raise InputError("snapshots store primal configurations")
    header = (
        f"rcgrid v1 L={cfg.geom.half_width} p={float(p)!r} q={float(q)!r} "
        f"bc={bc} seed={int(seed) & ((1 << 64) - 1)}"
    )
    return header + "\n" + _encode_runs(cfg.states) + "\n"


@dataclass
class Snapshot:
    cfg: BondConfig
    p: float
    q: float
    bc: str
    seed: int


def read_snapshot(text: str) -> Snapshot:
    lines = text.strip("\n").split("\n")
    if len(lines) != 2:
        raise InputError("snapshot must have a header and one run-length line")
    head = lines[0].split()
    if head[:2] != ["rcgrid", "v1"]:
        raise InputError("not an rcgrid v1 snapshot")
    kv = {}
    for tok in head[2:]:
        k, _, v = tok.partition("=")
        kv[k] = v
    try:
        L = int(kv["L"])
        p, q = float(kv["p"]), float(kv["q"])
        bc = kv["bc"]
        seed = int(kv["seed"])
    except (KeyError, ValueError) as exc:
        raise InputError(f"bad snapshot header: {exc}") from None
    if bc not in ("free", "wired"):
        raise InputError(f"bad boundary condition {bc!r}")
    geom = BoxGeom(L)
    return Snapshot(BondConfig(geom, _decode_runs(lines[1], geom.n_edges)), p, q, bc, seed)


# ---------------------------------------------------------------------------
# Lattice symmetries

SYMMETRIES = (
    ((1, 0), (0, 1)), ((0, -1), (1, 0)), ((-1, 0), (0, -1)), ((0, 1), (-1, 0)),
    ((1, 0), (0, -1)), ((-1, 0), (0, 1)), ((0, 1), (1, 0)), ((0, -1), (-1, 0)),
)


def symmetry_edge_map(geom: BoxGeom, k: int) -> np.ndarray:
    """``perm[e]`` = id of the image of edge ``e`` under the ``k``-th symmetry fixing the origin."""
    M = np.array(SYMMETRIES[k], dtype=np.int64)
    a, b = geom.edge_endpoints()
    ta, tb = a @ M.T, b @ M.T
    lo = np.minimum(ta, tb)
    axis = (ta[:, 0] == tb[:, 0]).astype(np.int64)
    L = geom.half_width
    table = np.stack([geom.h_table, geom.v_table])
    return table[axis, lo[:, 0] + L, lo[:, 1] + L]


def apply_symmetry(cfg: BondConfig, k: int) -> BondConfig:
    perm = symmetry_edge_map(cfg.geom, k)
    out = np.empty_like(cfg.states)
    out[perm] = cfg.states
    return BondConfig(cfg.geom, out)
