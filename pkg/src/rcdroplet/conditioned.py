"""Sampling configurations conditioned on a large enclosed area.

The target is the random-cluster law on a box given that the outermost open
circuit around the origin encloses at least ``n**2`` faces.  Two samplers are
provided: exact rejection (draw, test, repeat) for tiny instances, and a
single-edge heat-bath chain that refuses moves leaving the event.

The enclosed area is nondecreasing in the configuration, so opening an edge is
always allowed and closing one can only matter when it lies on the boundary of
the enclosed face set currently tracked; only such closures trigger a
recomputation.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import InfeasibleError, InputError, InvariantError
from .lattice import BondConfig, BoxGeom, all_configs, configs_to_indices
from .model import RcParams, SweepWorkspace, batch_cluster_counts, sample_fk

CONSTRAINTS = ("area_ge",)
CENTER_MODES = ("off", "measure_only")
REFRESH_SWEEPS = 64


@dataclass(frozen=True)
class ConditionSpec:
    """Conditioning event ``{enclosed area >= n**2}``.

    ``center_mode`` controls whether the droplet centre is recorded
    (``measure_only``) or ignored (``off``); it is never imposed.
    """

    n: int
    constraint: str = "area_ge"
    center_mode: str = "measure_only"

    def __post_init__(self):
        if int(self.n) < 1:
            raise InputError("n must be a positive integer")
        object.__setattr__(self, "n", int(self.n))
        if self.constraint not in CONSTRAINTS:
            raise InputError(f"unsupported constraint {self.constraint!r}; only {CONSTRAINTS} "
                             "(fixed-area conditioning is out of scope)")
        if self.center_mode not in CENTER_MODES:
            raise InputError(f"center_mode must be one of {CENTER_MODES}")

    @property
    def target(self) -> int:
        return self.n * self.n

    def check_box(self, geom: BoxGeom) -> None:
        """The event must be satisfiable by a circuit strictly inside the box."""
        if self.n > 2 * geom.half_width - 2:
            raise InputError(f"n = {self.n} needs half-width >= {(self.n + 3) // 2}, "
                             f"box has {geom.half_width}")


# ---------------------------------------------------------------------------
# Enclosed faces


@dataclass(frozen=True, eq=False)
class FaceLayout:
    """Face adjacency of a primal box (faces indexed ``i * side + j``)."""

    side: int
    face_nb: np.ndarray
    face_edge: np.ndarray
    edge_faces: np.ndarray
    centre: np.ndarray


@lru_cache(maxsize=16)
def face_layout(L: int) -> FaceLayout:
    g = BoxGeom(L)
    side = 2 * L
    nb = np.full((side * side, 4), -1, dtype=np.int64)
    fe = np.zeros((side * side, 4), dtype=np.int64)
    ef = np.full((g.n_edges, 2), -1, dtype=np.int64)
    for i in range(side):
        for j in range(side):
            f = i * side + j
            x, y = i - L, j - L  # lower-left corner
            sides = [(g.edge_id(x, y, 0), (i, j - 1)), (g.edge_id(x + 1, y, 1), (i + 1, j)),
                     (g.edge_id(x, y + 1, 0), (i, j + 1)), (g.edge_id(x, y, 1), (i - 1, j))]
            for k, (e, (a, b)) in enumerate(sides):
                fe[f, k] = e
                if 0 <= a < side and 0 <= b < side:
                    nb[f, k] = a * side + b
                slot = 0 if ef[e, 0] < 0 else 1
                ef[e, slot] = f
    centre = np.array([(L - 1) * side + L - 1, (L - 1) * side + L, L * side + L - 1, L * side + L],
                      dtype=np.int64)
    return FaceLayout(side, nb, fe, ef, centre)


def enclosed_mask(cfg: BondConfig) -> tuple[int, np.ndarray]:
    """Enclosed face count and flat face mask of the outermost circuit around the origin."""
    lay = face_layout(cfg.geom.half_width)
    nf = lay.side * lay.side
    inside = np.zeros(nf, dtype=np.uint8)
    area = _kernels.enclosed_region(cfg.states.astype(np.uint8), lay.face_nb, lay.face_edge,
                                    lay.side, lay.centre, np.zeros(nf, dtype=np.uint8), inside,
                                    np.empty(nf, dtype=np.int64))
    return int(area), inside


def enclosed_area(cfg: BondConfig) -> int:
    return enclosed_mask(cfg)[0]


def satisfies(cfg: BondConfig, spec: ConditionSpec) -> bool:
    return enclosed_area(cfg) >= spec.target


def batch_enclosed_areas(geom: BoxGeom, states: np.ndarray) -> np.ndarray:
    """Enclosed areas of many configurations (rows of ``states``)."""
    lay = face_layout(geom.half_width)
    nf = lay.side * lay.side
    reached = np.zeros(nf, dtype=np.uint8)
    inside = np.zeros(nf, dtype=np.uint8)
    queue = np.empty(nf, dtype=np.int64)
    s = np.ascontiguousarray(states, dtype=np.uint8)
    return np.array([_kernels.enclosed_region(row, lay.face_nb, lay.face_edge, lay.side, lay.centre,
                                              reached, inside, queue) for row in s], dtype=np.int64)


# ---------------------------------------------------------------------------
# Rejection sampling


@dataclass
class RejectionDraw:
    config: BondConfig
    tries: int


def rejection_sample(geom: BoxGeom, params: RcParams, spec: ConditionSpec, max_tries: int,
                     rng: np.random.Generator, sweeps: int = 200) -> RejectionDraw:
    """Draw unconditioned configurations until one satisfies the event.

    At ``q = 1`` each try is an exact product draw; otherwise each try runs
    ``sweeps`` fresh heat-bath sweeps.  Raises InfeasibleError after
    ``max_tries`` failures.
    """
    spec.check_box(geom)
    if max_tries < 1:
        raise InputError("max_tries must be >= 1")
    for k in range(1, max_tries + 1):
        cfg = sample_fk(geom, params, sweeps, rng)
        if satisfies(cfg, spec):
            return RejectionDraw(cfg, k)
    raise InfeasibleError(f"no configuration with area >= {spec.target} in {max_tries} tries "
                          f"(acceptance rate below about {3.0 / max_tries:.3g})")


def rejection_areas(geom: BoxGeom, params: RcParams, spec: ConditionSpec, count: int,
                    rng: np.random.Generator, batch: int = 4096,
                    max_draws: int = 10**8) -> tuple[np.ndarray, int]:
    """Enclosed areas of ``count`` exact conditional draws at ``q = 1`` and the draws used."""
    if params.q != 1.0:
        raise InputError("batched rejection is exact only at q = 1")
    spec.check_box(geom)
    out: list[np.ndarray] = []
    got = 0
    used = 0
    while got < count:
        if used >= max_draws:
            raise InfeasibleError(f"only {got} of {count} accepted in {used} draws")
        s = rng.random((batch, geom.n_edges)) < params.p
        a = batch_enclosed_areas(geom, s)
        ok = np.flatnonzero(a >= spec.target)
        take = ok[:count - got]
        used += int(take[-1]) + 1 if got + len(ok) >= count else batch
        out.append(a[take])
        got += len(take)
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64), used


def exact_area_law(geom: BoxGeom, params: RcParams, spec: ConditionSpec, active,
                   base: np.ndarray | None = None) -> dict[int, float]:
    """Exact conditional law of the enclosed area when only ``active`` edges are random.

    All other edges keep their ``base`` state (closed by default).  At
    ``q > 1`` the weights include the cluster factor of the full box.
    Limited to 20 active edges.
    """
    active = np.asarray(active, dtype=np.int64)
    if len(active) > 20:
        raise InputError("exact enumeration limited to 20 active edges")
    base = np.zeros(geom.n_edges, dtype=bool) if base is None else np.asarray(base, dtype=bool)
    sub = all_configs(len(active)).astype(bool)
    states = np.repeat(base[None, :], len(sub), axis=0)
    states[:, active] = sub
    areas = batch_enclosed_areas(geom, states)
    o = sub.sum(axis=1)
    logw = o * np.log(params.p) + (len(active) - o) * np.log1p(-params.p)
    if params.q != 1.0:
        if geom.n_edges > 62:
            raise InputError("q > 1 enumeration needs a box with at most 62 edges")
        codes = configs_to_indices(states)
        logw = logw + batch_cluster_counts(geom, codes, params.wired) * np.log(params.q)
    keep = areas >= spec.target
    if not keep.any():
        raise InfeasibleError("the event is empty on this instance")
    w = np.exp(logw[keep] - logw[keep].max())
    w /= w.sum()
    law: dict[int, float] = {}
    for a, x in zip(areas[keep].tolist(), w.tolist()):
        law[a] = law.get(a, 0.0) + x
    return dict(sorted(law.items()))


# ---------------------------------------------------------------------------
# Constrained chain


def warm_start_side(n: int) -> int:
    """Smallest even side ``s`` with ``s**2 >= n**2``."""
    return n + (n % 2)


def warm_start(geom: BoxGeom, params: RcParams, n: int, rng: np.random.Generator) -> BondConfig:
    """Open square circuit of side ``warm_start_side(n)`` about the origin, other edges random.

    Other edges are open independently with probability ``p`` at ``q = 1``
    and ``p / (p + (1 - p) q)`` otherwise.
    """
    s = warm_start_side(int(n))
    h = s // 2
    if h > geom.half_width - 1:
        raise InputError(f"box half-width {geom.half_width} too small for a side-{s} square")
    p_edge = params.p if params.q == 1.0 else params.p / (params.p + (1 - params.p) * params.q)
    states = rng.random(geom.n_edges) < p_edge
    for k in range(-h, h):
        states[geom.edge_id(k, -h, 0)] = True
        states[geom.edge_id(k, h, 0)] = True
        states[geom.edge_id(-h, k, 1)] = True
        states[geom.edge_id(h, k, 1)] = True
    return BondConfig(geom, states)


@dataclass
class ChainCounters:
    sweeps: int = 0
    proposed: int = 0
    rejected: int = 0
    recomputed: int = 0

    @property
    def acceptance(self) -> float:
        return 1.0 - self.rejected / self.proposed if self.proposed else 1.0


class ConstrainedChain:
    """Systematic-scan heat-bath chain restricted to ``{enclosed area >= n**2}``.

    Each sweep updates the ``active`` edges (all edges by default) in
    ascending id order, consuming one ``rng.random(len(active))`` row.  A
    move is refused whenever the new configuration leaves the event, so the
    conditioned measure is invariant.
    """

    def __init__(self, geom: BoxGeom, params: RcParams, spec: ConditionSpec,
                 rng: np.random.Generator, start: BondConfig | None = None, active=None):
        spec.check_box(geom)
        self.geom, self.params, self.spec, self.rng = geom, params, spec, rng
        if start is None:
            start = warm_start(geom, params, spec.n, rng)
        if start.geom.half_width != geom.half_width:
            raise InputError("start configuration lives on a different box")
        self.states = start.states.astype(np.uint8)
        self.active = (np.arange(geom.n_edges, dtype=np.int64) if active is None
                       else np.unique(np.asarray(active, dtype=np.int64)))
        self.layout = face_layout(geom.half_width)
        nf = self.layout.side ** 2
        self.inside = np.zeros(nf, dtype=np.uint8)
        self._trial = np.zeros(nf, dtype=np.uint8)
        self._reached = np.zeros(nf, dtype=np.uint8)
        self._fqueue = np.empty(nf, dtype=np.int64)
        self._ws = SweepWorkspace(geom)
        self._counts = np.zeros(3, dtype=np.int64)
        self.counters = ChainCounters()
        if self.refresh() < spec.target:
            raise InputError("start configuration violates the area constraint")

    def refresh(self) -> int:
        """Recompute the tracked enclosed region from scratch; returns its area."""
        lay = self.layout
        return int(_kernels.enclosed_region(self.states, lay.face_nb, lay.face_edge, lay.side,
                                            lay.centre, self._reached, self.inside, self._fqueue))

    @property
    def config(self) -> BondConfig:
        return BondConfig(self.geom, self.states.astype(bool))

    def run(self, sweeps: int) -> None:
        """Advance by ``sweeps`` sweeps, refreshing the tracked region every 64."""
        lay, ws, p = self.layout, self._ws, self.params
        while sweeps > 0:
            chunk = min(sweeps, REFRESH_SWEEPS - self.counters.sweeps % REFRESH_SWEEPS)
            unif = self.rng.random((chunk, len(self.active)))
            ws.mark = _kernels.constrained_sweeps(
                self.states, self.active, unif, p.p, p.q, p.wired, self.geom.incidence,
                self.geom.edge_u, self.geom.edge_v, ws.bnd, ws.stamp, ws.mark, ws.queue,
                lay.edge_faces, lay.face_nb, lay.face_edge, lay.side, lay.centre, self.spec.target,
                self.inside, self._trial, self._reached, self._fqueue, self._counts)
            self.counters.sweeps += chunk
            sweeps -= chunk
            if self.counters.sweeps % REFRESH_SWEEPS == 0:
                area = self.refresh()
                if area < self.spec.target:
                    raise InvariantError("constrained chain left the conditioning event")
        self.counters.proposed, self.counters.rejected, self.counters.recomputed = \
            (int(v) for v in self._counts)

    def samples(self, sweeps: int, thin: int = 1, burn_in: int = 0):
        """Yield a configuration after every ``thin``-th of ``sweeps`` sweeps (after burn-in)."""
        if thin < 1 or sweeps < 0 or burn_in < 0:
            raise InputError("need thin >= 1, sweeps >= 0, burn_in >= 0")
        if burn_in:
            self.run(burn_in)
        for _ in range(sweeps // thin):
            self.run(thin)
            yield self.config


def constrained_chain(geom: BoxGeom, params: RcParams, spec: ConditionSpec, sweeps: int, thin: int,
                      rng: np.random.Generator, start: BondConfig | None = None, burn_in: int = 0,
                      active=None):
    """Stream of conditioned configurations, one per ``thin`` sweeps."""
    chain = ConstrainedChain(geom, params, spec, rng, start, active)
    yield from chain.samples(sweeps, thin, burn_in)


def fingerprint(inside: np.ndarray) -> str:
    return hashlib.blake2b(np.packbits(inside).tobytes(), digest_size=12).hexdigest()


@dataclass
class ProbeReport:
    chains: int
    sweeps: int
    common: int
    visited: list[int] = field(default_factory=list)


def irreducibility_probe(geom: BoxGeom, params: RcParams, spec: ConditionSpec, starts,
                         sweeps: int, rng: np.random.Generator) -> ProbeReport:
    """Run one chain from each start and count enclosed-region fingerprints visited by all."""
    sets = []
    for s in starts:
        ch = ConstrainedChain(geom, params, spec, rng, s)
        seen = set()
        for _ in range(sweeps):
            ch.run(1)
            ch.refresh()
            seen.add(fingerprint(ch.inside))
        sets.append(seen)
    common = set.intersection(*sets) if sets else set()
    return ProbeReport(len(sets), sweeps, len(common), [len(s) for s in sets])
