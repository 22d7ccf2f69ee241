"""Random-cluster measure: parameters, weights, exact enumeration and samplers.

The weight of a configuration is ``p^open (1-p)^closed q^k``.  Under the free
boundary condition ``k`` counts every open cluster (isolated vertices
included).  Under the wired boundary condition ``k`` counts only the clusters
that contain no boundary vertex, i.e. all boundary vertices act as a single
vertex whose cluster is not counted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _kernels
from .errors import InputError
from .lattice import BondConfig, BoxGeom, all_configs, count_components

MAX_ENUM_EDGES = 20


@dataclass(frozen=True)
class RcParams:
    p: float
    q: float = 1.0
    bc: str = "free"

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise InputError(f"p must lie in [0, 1], got {self.p}")
        if self.q < 1.0:
            raise InputError(f"q must be >= 1, got {self.q}")
        if self.bc not in ("free", "wired"):
            raise InputError(f"bc must be 'free' or 'wired', got {self.bc!r}")

    @classmethod
    def from_beta(cls, beta: float, q: float = 1.0, bc: str = "free") -> "RcParams":
        if beta < 0:
            raise InputError("beta must be nonnegative")
        return cls(-math.expm1(-2.0 * beta), q, bc)

    @property
    def wired(self) -> bool:
        return self.bc == "wired"

    @property
    def beta(self) -> float:
        return -0.5 * math.log1p(-self.p)

    @property
    def p_dual(self) -> float:
        if not 0.0 < self.p < 1.0:
            raise InputError("dual parameter is undefined at p in {0, 1}")
        ratio = self.q * (1.0 - self.p) / self.p
        return ratio / (1.0 + ratio)

    @property
    def beta_dual(self) -> float:
        return -0.5 * math.log1p(-self.p_dual)

    @property
    def c_be(self) -> float:
        """Uniform lower bound on single-edge conditional open/closed probabilities."""
        p, q = self.p, self.q
        return min(1.0 - p, p / (p + (1.0 - p) * q))

    def open_prob(self, joined: bool) -> float:
        """Conditional open probability of an edge given whether its endpoints are joined off it."""
        if joined:
            return self.p
        return self.p / (self.p + (1.0 - self.p) * self.q)

    def metadata(self) -> dict:
        pc, bc_ = critical_point(self.q)
        out = {"p": self.p, "q": self.q, "bc": self.bc, "beta": self.beta,
               "c_be": self.c_be, "p_c": pc, "beta_c": bc_}
        if 0.0 < self.p < 1.0:
            out["p_dual"] = self.p_dual
        return out


def dual_params(params: RcParams) -> RcParams:
    """Dual parameters ``(p*, q, opposite bc)``."""
    if not 0.0 < params.p < 1.0:
        raise InputError("dual parameters are undefined at p in {0, 1}")
    return RcParams(params.p_dual, params.q, "wired" if params.bc == "free" else "free")


def critical_point(q: float) -> tuple[float, float]:
    """Self-dual point ``p_c = sqrt(q)/(1+sqrt(q))`` and ``beta_c = log(1+sqrt(q))/2``."""
    if q < 1:
        raise InputError("q must be >= 1")
    s = math.sqrt(q)
    return s / (1.0 + s), 0.5 * math.log1p(s)


# ---------------------------------------------------------------------------
# Weights


def n_clusters(cfg: BondConfig, wired: bool) -> int:
    return count_components(cfg.geom, cfg.states, wired)


def log_weight(cfg: BondConfig, params: RcParams) -> float:
    """Natural log of the unnormalized weight (``-inf`` for impossible configurations)."""
    o = cfg.open_count
    c = cfg.geom.n_edges - o
    k = n_clusters(cfg, params.wired)
    out = k * math.log(params.q)
    for count, prob in ((o, params.p), (c, 1.0 - params.p)):
        if count:
            if prob == 0.0:
                return -math.inf
            out += count * math.log(prob)
    return out


def exact_weight(cfg: BondConfig, p: Fraction, q: Fraction, wired: bool) -> Fraction:
    """Unnormalized weight in rational arithmetic."""
    p, q = Fraction(p), Fraction(q)
    o = cfg.open_count
    return p**o * (1 - p) ** (cfg.geom.n_edges - o) * q ** n_clusters(cfg, wired)


# ---------------------------------------------------------------------------
# Exact enumeration


def batch_cluster_counts(geom: BoxGeom, codes: np.ndarray, wired: bool) -> np.ndarray:
    """Cluster counts for many configurations given as integer codes (bit e = edge e)."""
    lab = _kernels.batch_labels(np.asarray(codes, dtype=np.int64), geom.edge_u, geom.edge_v,
                                geom.n_vertices)
    roots = lab == np.arange(geom.n_vertices)[None, :]
    k = roots.sum(axis=1)
    if wired:
        bnd = np.flatnonzero(geom.boundary)
        touched = np.zeros_like(roots)
        rows = np.arange(len(codes))[:, None]
        touched[rows, lab[:, bnd]] = True
        k = k - touched.sum(axis=1)
    return k.astype(np.int64)


@dataclass
class ExactTable:
    """Exact law over all configurations; row ``k`` of ``states`` is configuration index ``k``."""

    geom: BoxGeom
    params: RcParams
    states: np.ndarray
    probs: np.ndarray

    def prob_of(self, cfg: BondConfig) -> float:
        return float(self.probs[cfg.to_index()])


def exact_distribution(geom: BoxGeom, params: RcParams) -> ExactTable:
    """Normalized probabilities of all ``2**n_edges`` configurations (``n_edges <= 20``)."""
    m = geom.n_edges
    if m > MAX_ENUM_EDGES:
        raise InputError(f"exact enumeration limited to {MAX_ENUM_EDGES} edges, box has {m}")
    states = all_configs(m)
    codes = np.arange(1 << m, dtype=np.int64)
    o = states.sum(axis=1)
    k = batch_cluster_counts(geom, codes, params.wired)
    with np.errstate(divide="ignore"):
        logw = (o * np.log(params.p) if params.p > 0 else np.where(o > 0, -np.inf, 0.0))
        logw = logw + ((m - o) * np.log1p(-params.p) if params.p < 1
                       else np.where(o < m, -np.inf, 0.0))
    logw = logw + k * math.log(params.q)
    logw -= logw.max()
    w = np.exp(logw)
    return ExactTable(geom, params, states, w / w.sum())


def joined_table(geom: BoxGeom, wired: bool) -> np.ndarray:
    """``table[e, c]``: endpoints of edge ``e`` joined off ``e`` in configuration code ``c``."""
    m = geom.n_edges
    if m > MAX_ENUM_EDGES:
        raise InputError(f"lookup table limited to {MAX_ENUM_EDGES} edges")
    codes = np.arange(1 << m, dtype=np.int64)
    lab = _kernels.batch_labels(codes, geom.edge_u, geom.edge_v, geom.n_vertices)
    touch = None
    if wired:
        touch = np.zeros_like(lab, dtype=bool)
        rows = np.arange(len(codes))[:, None]
        touch[rows, lab[:, np.flatnonzero(geom.boundary)]] = True
    out = np.empty((m, len(codes)), dtype=bool)
    for e in range(m):
        c = codes & ~(np.int64(1) << e)
        lu, lv = lab[c, geom.edge_u[e]], lab[c, geom.edge_v[e]]
        j = lu == lv
        if wired:
            j |= touch[c, lu] & touch[c, lv]
        out[e] = j
    return out


# ---------------------------------------------------------------------------
# Samplers


def sample_q1(geom: BoxGeom, p: float, rng: np.random.Generator) -> BondConfig:
    """Bernoulli bond percolation: each edge open independently with probability ``p``."""
    return BondConfig(geom, rng.random(geom.n_edges) < p)


def _joined_python(cfg: BondConfig, e: int, wired: bool) -> bool:
    """Reference (pure Python) test of whether edge ``e``'s endpoints are joined off ``e``."""
    g = cfg.geom
    a, b = int(g.edge_u[e]), int(g.edge_v[e])

    def explore(start):
        seen = {start}
        stack = [start]
        while stack:
            x = stack.pop()
            for f in g.incidence[x]:
                if f < 0 or f == e or not cfg.states[f]:
                    continue
                y = int(g.edge_v[f] if g.edge_u[f] == x else g.edge_u[f])
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        return seen

    ca = explore(a)
    if b in ca:
        return True
    if wired:
        return bool(g.boundary[list(ca)].any()) and bool(g.boundary[list(explore(b))].any())
    return False


def heat_bath_step(cfg: BondConfig, params: RcParams, edge: int, rng: np.random.Generator) -> BondConfig:
    """Resample one edge from its exact conditional law given all other edges (in place)."""
    e = int(edge)
    if not 0 <= e < cfg.geom.n_edges:
        raise InputError(f"edge {e} not in box")
    u = rng.random()
    if params.q == 1.0:
        prob = params.p
    else:
        prob = params.open_prob(_joined_python(cfg, e, params.wired))
    cfg.states[e] = u < prob
    return cfg


class SweepWorkspace:
    """Scratch buffers reused across compiled sweeps on one box."""

    def __init__(self, geom: BoxGeom):
        self.geom = geom
        self.stamp = np.zeros(geom.n_vertices, dtype=np.int64)
        self.queue = np.empty(geom.n_vertices, dtype=np.int64)
        self.bnd = geom.boundary.astype(np.uint8)
        self.mark = 1

    def sweep(self, states: np.ndarray, unif: np.ndarray, params: RcParams) -> None:
        g = self.geom
        self.mark = _kernels.sweep(states, unif, params.p, params.q, params.wired, g.incidence,
                                   g.edge_u, g.edge_v, self.bnd, self.stamp, self.mark, self.queue)

    def sweep_edges(self, states: np.ndarray, edges: np.ndarray, unif: np.ndarray,
                    params: RcParams) -> None:
        """Heat-bath updates of ``edges`` only, in the given order."""
        g = self.geom
        self.mark = _kernels.sweep_edges(states, np.asarray(edges, dtype=np.int64), unif, params.p,
                                         params.q, params.wired, g.incidence, g.edge_u, g.edge_v,
                                         self.bnd, self.stamp, self.mark, self.queue)


def sample_fk(geom: BoxGeom, params: RcParams, sweeps: int, rng: np.random.Generator,
              start: BondConfig | None = None) -> BondConfig:
    """Systematic heat-bath sweeps in edge-id order from the all-closed start.

    Each sweep consumes one ``rng.random(n_edges)`` block, edge ``e`` using
    entry ``e``.  At ``q = 1`` this reduces to a single product draw.
    """
    if sweeps < 1:
        raise InputError("sweeps must be >= 1")
    if params.q == 1.0 and start is None:
        return sample_q1(geom, params.p, rng)
    states = (np.zeros(geom.n_edges, dtype=np.uint8) if start is None
              else start.states.astype(np.uint8))
    ws = SweepWorkspace(geom)
    for _ in range(sweeps):
        ws.sweep(states, rng.random(geom.n_edges), params)
    return BondConfig(geom, states.astype(bool))


def sample_fk_batch(geom: BoxGeom, params: RcParams, sweeps: int, replicas: int,
                    rng: np.random.Generator, chunk: int = 1 << 16) -> np.ndarray:
    """Independent ``sample_fk`` draws on a tiny box, returned as configuration codes.

    Replicas are advanced together through a precomputed table of conditional
    open probabilities.  Each sweep draws one ``(replicas, n_edges)`` block, so
    with ``replicas = 1`` the result is bit-identical to :func:`sample_fk`.
    Replicas are processed in chunks of ``chunk``, each chunk consuming its own
    contiguous portion of the stream.
    """
    m = geom.n_edges
    if sweeps < 1:
        raise InputError("sweeps must be >= 1")
    weights = np.left_shift(np.int64(1), np.arange(m, dtype=np.int64))
    if params.q == 1.0:
        out = []
        for start in range(0, replicas, chunk):
            r = min(chunk, replicas - start)
            out.append((rng.random((r, m)) < params.p).astype(np.int64) @ weights)
        return np.concatenate(out) if out else np.empty(0, dtype=np.int64)
    joined = joined_table(geom, params.wired)
    table = np.where(joined, params.open_prob(True), params.open_prob(False))
    out = []
    for start in range(0, replicas, chunk):
        r = min(chunk, replicas - start)
        codes = np.zeros(r, dtype=np.int64)
        for _ in range(sweeps):
            _kernels.batch_sweep(codes, rng.random((r, m)), table, m)
        out.append(codes)
    return np.concatenate(out) if out else np.empty(0, dtype=np.int64)


def heat_bath_kernel_exact(geom: BoxGeom, p: Fraction, q: Fraction, wired: bool, edge: int, code: int):
    """Exact transition probabilities of one heat-bath update at ``edge`` from ``code``.

    Returns ``{next_code: probability}`` with rational entries.
    """
    cfg = BondConfig.from_index(geom, code)
    p, q = Fraction(p), Fraction(q)
    joined = _joined_python(cfg, edge, wired)
    po = p if joined else p / (p + (1 - p) * q)
    bit = 1 << edge
    return {code | bit: po, code & ~bit: 1 - po}
