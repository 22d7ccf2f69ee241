import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rcdroplet.errors import InputError
from rcdroplet.lattice import BondConfig, BoxGeom, connected, count_components
from rcdroplet.model import (
    RcParams, SweepWorkspace, batch_cluster_counts, critical_point, dual_params,
    exact_distribution, heat_bath_step, joined_table, log_weight, sample_fk, sample_fk_batch,
    sample_q1, exact_weight, _joined_python,
)
from rcdroplet.rng import make_rng


# --- parameters ------------------------------------------------------------

@settings(max_examples=100, deadline=None)
@given(st.floats(0.001, 0.999), st.floats(1.0, 6.0))
def test_param_invariants(p, q):
    P = RcParams(p, q)
    assert math.isclose(1 - math.exp(-2 * P.beta), p, rel_tol=1e-12, abs_tol=1e-15)
    ps = P.p_dual
    assert math.isclose(ps / (1 - ps), q * (1 - p) / p, rel_tol=1e-12)
    assert 0 < P.c_be <= 0.5
    assert math.isclose(dual_params(dual_params(P)).p, p, rel_tol=1e-12)
    assert dual_params(dual_params(P)).bc == P.bc


def test_dual_param_examples():
    assert RcParams(0.5, 1.0).p_dual == pytest.approx(0.5, abs=1e-15)
    assert RcParams(0.3, 2.0).p_dual == pytest.approx(14 / 17, abs=1e-15)
    assert dual_params(RcParams(0.3, 2.0, "free")).bc == "wired"
    with pytest.raises(InputError):
        dual_params(RcParams(0.0, 2.0))
    with pytest.raises(InputError):
        dual_params(RcParams(1.0, 2.0))


def test_critical_point():
    assert critical_point(1.0)[0] == 0.5
    assert critical_point(4.0)[0] == pytest.approx(2 / 3, abs=1e-15)
    for q in (1.0, 1.5, 2.0, 4.0, 9.0):
        pc, bc = critical_point(q)
        assert RcParams(pc, q).p_dual == pytest.approx(pc, abs=1e-14)
        assert RcParams.from_beta(bc, q).p == pytest.approx(pc, abs=1e-14)


def test_from_beta_round_trip():
    P = RcParams.from_beta(0.3, 2.0)
    assert P.beta == pytest.approx(0.3, abs=1e-14)


def test_invalid_params():
    for bad in (dict(p=-0.1), dict(p=1.1), dict(p=0.5, q=0.5), dict(p=0.5, bc="periodic")):
        with pytest.raises(InputError):
            RcParams(**bad)


# --- weights -----------------------------------------------------------------

def _uf_components(geom, states, wired):
    """Independent union-find cluster count."""
    parent = list(range(geom.n_vertices))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in np.flatnonzero(states):
        a, b = find(int(geom.edge_u[e])), find(int(geom.edge_v[e]))
        if a != b:
            parent[a] = b
    roots = {find(v) for v in range(geom.n_vertices)}
    if wired:
        roots -= {find(int(v)) for v in np.flatnonzero(geom.boundary)}
    return len(roots)


def test_weight_trivial_cases():
    g = BoxGeom(1)
    m, V = g.n_edges, g.n_vertices
    P = RcParams(0.3, 2.0, "free")
    assert log_weight(BondConfig.closed(g), P) == pytest.approx(m * math.log(0.7) + V * math.log(2))
    W = RcParams(0.3, 2.0, "wired")
    assert log_weight(BondConfig.open(g), W) == pytest.approx(m * math.log(0.3))
    # only the centre vertex avoids the boundary when everything is closed
    assert log_weight(BondConfig.closed(g), W) == pytest.approx(m * math.log(0.7) + math.log(2))


def test_weight_q1_factorizes():
    g = BoxGeom(2)
    rng = make_rng(3)
    P = RcParams(0.37, 1.0)
    for _ in range(20):
        a = BondConfig(g, rng.random(g.n_edges) < 0.5)
        b = BondConfig(g, rng.random(g.n_edges) < 0.5)
        diff = log_weight(a, P) - log_weight(b, P)
        assert diff == pytest.approx((a.open_count - b.open_count) * math.log(0.37 / 0.63))


@pytest.mark.parametrize("bc", ["free", "wired"])
def test_batch_cluster_counts_match_union_find(bc):
    for g in (BoxGeom(1), BoxGeom(1, dual=True)):
        codes = np.arange(0, 1 << g.n_edges, 3, dtype=np.int64)
        k = batch_cluster_counts(g, codes, bc == "wired")
        for c, kk in zip(codes[::17], k[::17]):
            s = BondConfig.from_index(g, int(c)).states
            assert kk == _uf_components(g, s, bc == "wired")
            assert kk == count_components(g, s, bc == "wired")


def test_exact_distribution_q1_is_product():
    g = BoxGeom(1)
    T = exact_distribution(g, RcParams(0.3, 1.0))
    o = T.states.sum(axis=1)
    assert np.allclose(T.probs, 0.3**o * 0.7 ** (12 - o), rtol=1e-12, atol=0)
    assert abs(T.probs.sum() - 1) < 1e-12


def test_exact_distribution_matches_hand_computation():
    """q = 2, L = 1, p = 0.4, free: independent weight formula and partition function."""
    g = BoxGeom(1)
    T = exact_distribution(g, RcParams(0.4, 2.0, "free"))
    p, q = Fraction(2, 5), Fraction(2)
    Z = Fraction(0)
    w = {}
    for code in range(1 << 12):
        s = BondConfig.from_index(g, code).states
        o = int(s.sum())
        w[code] = p**o * (1 - p) ** (12 - o) * q ** _uf_components(g, s, False)
        Z += w[code]
    assert abs(T.probs.sum() - 1) < 1e-12
    for code in (0, (1 << 12) - 1, 0b101101001110):
        assert T.probs[code] == pytest.approx(float(w[code] / Z), rel=1e-12)
    # all-closed: every vertex its own cluster
    assert w[0] == Fraction(3, 5) ** 12 * 2**9


def test_exact_distribution_refuses_large_boxes():
    with pytest.raises(InputError):
        exact_distribution(BoxGeom(2), RcParams(0.5, 2.0))


# --- dynamics ----------------------------------------------------------------

def test_sample_q1():
    g = BoxGeom(3)
    assert not sample_q1(g, 0.0, make_rng(1)).states.any()
    assert sample_q1(g, 1.0, make_rng(1)).states.all()
    rng = make_rng(2)
    draws = 100_000 // g.n_edges + 1
    freq = np.mean([sample_q1(g, 0.3, rng).states.mean() for _ in range(draws)])
    n = draws * g.n_edges
    assert abs(freq - 0.3) < 4 * math.sqrt(0.3 * 0.7 / n)


def test_heat_bath_q1_ignores_connectivity():
    g = BoxGeom(1)
    rng_a, rng_b = make_rng(9), make_rng(9)
    for code in (0, 4095, 1234):
        a = BondConfig.from_index(g, code)
        b = BondConfig.from_index(g, code)
        heat_bath_step(a, RcParams(0.4, 1.0), 5, rng_a)
        b.states[5] = rng_b.random() < 0.4
        assert a == b


@pytest.mark.parametrize("bc", ["free", "wired"])
def test_joined_off_edge_matches_connected_with_edge_closed(bc):
    g = BoxGeom(2)
    rng = make_rng(4)
    for _ in range(40):
        cfg = BondConfig(g, rng.random(g.n_edges) < 0.55)
        e = int(rng.integers(g.n_edges))
        off = cfg.copy()
        off.states[e] = False
        a, b = g.edge_endpoints()
        direct = connected(off, tuple(a[e]), tuple(b[e]))
        if bc == "wired" and not direct:
            from rcdroplet.lattice import open_cluster
            L = g.half_width
            touches = lambda cl: any(max(abs(x), abs(y)) == L for x, y in cl)
            direct = touches(open_cluster(off, tuple(a[e]))) and touches(open_cluster(off, tuple(b[e])))
        assert _joined_python(cfg, e, bc == "wired") == direct


def test_conditional_probability_bounded_by_c_be():
    for p in (0.1, 0.5, 0.9):
        for q in (1.0, 2.0, 4.0):
            P = RcParams(p, q)
            for j in (True, False):
                assert P.c_be <= P.open_prob(j) <= 1 - P.c_be + 1e-15


@pytest.mark.parametrize("bc", ["free", "wired"])
def test_detailed_balance_exact(bc):
    """pi(w) K(w, w') = pi(w') K(w', w) in rational arithmetic for every edge on L = 1."""
    g = BoxGeom(1)
    wired = bc == "wired"
    J = joined_table(g, wired)
    codes = range(1 << g.n_edges)
    k = [_uf_components(g, BondConfig.from_index(g, c).states, wired) for c in codes]
    for p in (Fraction(1, 5), Fraction(1, 2)):
        for q in (Fraction(1), Fraction(3, 2), Fraction(2)):
            pf = p / (p + (1 - p) * q)
            pw = [p ** bin(c).count("1") * (1 - p) ** (12 - bin(c).count("1")) * q ** k[c] for c in codes]
            for e in range(g.n_edges):
                bit = 1 << e
                for c in codes:
                    if c & bit:
                        continue
                    c1 = c | bit
                    # joined-off-edge does not depend on the edge's own state
                    assert J[e, c] == J[e, c1]
                    po = p if J[e, c] else pf
                    assert pw[c] * po == pw[c1] * (1 - po)


def test_exact_weight_consistent_with_log_weight():
    g = BoxGeom(1)
    cfg = BondConfig.from_index(g, 0b110011001100)
    w = exact_weight(cfg, Fraction(1, 4), Fraction(2), wired=True)
    assert math.log(w) == pytest.approx(log_weight(cfg, RcParams(0.25, 2.0, "wired")))


def test_compiled_sweep_matches_python_reference():
    g = BoxGeom(3)
    for bc in ("free", "wired"):
        P = RcParams(0.45, 2.0, bc)
        a = sample_fk(g, P, 5, make_rng(12))
        rng = make_rng(12)
        b = BondConfig.closed(g)
        for _ in range(5):
            for e in range(g.n_edges):
                heat_bath_step(b, P, e, rng)
        assert a == b


def test_sample_fk_deterministic_and_batch_consistent():
    g = BoxGeom(1)
    P = RcParams(0.3, 1.5, "wired")
    a = sample_fk(g, P, 20, make_rng(5, 2))
    b = sample_fk(g, P, 20, make_rng(5, 2))
    assert a == b
    assert sample_fk_batch(g, P, 20, 1, make_rng(5, 2))[0] == a.to_index()


def test_sample_fk_q1_reduces_to_product():
    g = BoxGeom(2)
    rng = make_rng(6)
    freq = np.mean([sample_fk(g, RcParams(0.3, 1.0), 3, rng).states.mean() for _ in range(2000)])
    assert abs(freq - 0.3) < 4 * math.sqrt(0.21 / (2000 * g.n_edges))


def _check_counts(counts, probs, total, sigma=None):
    """4-sigma agreement per configuration with expected count >= 10, pooled for the rest."""
    expected = probs * total
    big = expected >= 10
    sd = np.sqrt(expected * (1 - probs)) if sigma is None else sigma
    z = np.abs(counts[big] - expected[big]) / sd[big]
    rest_obs, rest_exp = counts[~big].sum(), expected[~big].sum()
    rest_sd = math.sqrt(max(rest_exp, 1.0)) if sigma is None else math.sqrt((sd[~big] ** 2).sum() + 1.0)
    return z.max(initial=0.0), abs(rest_obs - rest_exp) / rest_sd


def test_heat_bath_chain_stationary_law():
    """Single long chain on L = 1, q = 2; batch-means errors per configuration."""
    g = BoxGeom(1)
    P = RcParams(0.4, 2.0, "free")
    T = exact_distribution(g, P)
    ws = SweepWorkspace(g)
    rng = make_rng(21)
    states = np.zeros(g.n_edges, dtype=np.uint8)
    weights = 1 << np.arange(g.n_edges)
    batches, per = 100, 10_000
    counts = np.zeros((batches, 1 << g.n_edges))
    for b in range(batches):
        u = rng.random((per, g.n_edges))
        codes = np.empty(per, dtype=np.int64)
        for t in range(per):
            ws.sweep(states, u[t], P)
            codes[t] = states.astype(np.int64) @ weights
        counts[b] = np.bincount(codes, minlength=1 << g.n_edges)
    total = counts.sum(axis=0)
    sigma = counts.std(axis=0, ddof=1) * math.sqrt(batches)
    sigma = np.maximum(sigma, np.sqrt(T.probs * batches * per))
    zmax, zrest = _check_counts(total, T.probs, batches * per, sigma)
    assert zmax < 4 and zrest < 4


@pytest.mark.slow
def test_sample_fk_replicas_match_exact_law():
    g = BoxGeom(1)
    P = RcParams(0.4, 2.0, "free")
    T = exact_distribution(g, P)
    codes = sample_fk_batch(g, P, 10_000, 10_000, make_rng(22))
    counts = np.bincount(codes, minlength=1 << g.n_edges)
    zmax, zrest = _check_counts(counts, T.probs, len(codes))
    assert zmax < 4 and zrest < 4


def test_duality_relation_exact():
    g = BoxGeom(1)
    d = BoxGeom(1, dual=True)
    for p in (0.2, 0.5, 0.7):
        for q in (1.0, 2.0, 3.5):
            P = RcParams(p, q, "free")
            primal = exact_distribution(g, P)
            dual = exact_distribution(d, dual_params(P))
            full = (1 << g.n_edges) - 1
            idx = np.arange(1 << g.n_edges)
            assert np.max(np.abs(primal.probs - dual.probs[full ^ idx])) < 1e-10
