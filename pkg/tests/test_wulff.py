import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rcdroplet.errors import InputError
from rcdroplet.model import RcParams
from rcdroplet.wulff import (
    WulffShape, XiTable, build_wulff, choose_constants, constant_xi, disc_wulff, estimate_xi,
    l1_xi, symmetrize, verify_constants, wulff_with_constants,
)


def strip_connection_prob(p, k, half_height=1):
    """Exact P(0 <-> (k, 0)) using only edges of the strip [0, k] x [-h, h] (column transfer)."""
    H = 2 * half_height + 1
    mid = half_height

    def canon(labels, origin):
        remap = {}
        out = []
        for l in labels:
            if l not in remap:
                remap[l] = len(remap)
            out.append(remap[l])
        return tuple(out), (remap[origin] if origin is not None and origin in remap else None)

    def find(par, a):
        while par[a] != a:
            par[a] = par[par[a]]
            a = par[a]
        return a

    # first column: vertical edges only
    states = {}
    for code in range(1 << (H - 1)):
        par = list(range(H))
        w = 1.0
        for j in range(H - 1):
            if code >> j & 1:
                par[find(par, j)] = find(par, j + 1)
                w *= p
            else:
                w *= 1 - p
        labels = [find(par, j) for j in range(H)]
        key = canon(labels, labels[mid])
        states[key] = states.get(key, 0.0) + w
    for _ in range(k):
        new = {}
        for (labels, origin), w0 in states.items():
            for code in range(1 << (2 * H - 1)):
                par = list(range(2 * H))
                for j in range(H):
                    for i in range(H):
                        if labels[i] == labels[j]:
                            par[find(par, i)] = find(par, j)
                w = w0
                for j in range(H):  # horizontal edge from old site j to new site H + j
                    if code >> j & 1:
                        par[find(par, j)] = find(par, H + j)
                        w *= p
                    else:
                        w *= 1 - p
                for j in range(H - 1):
                    if code >> (H + j) & 1:
                        par[find(par, H + j)] = find(par, H + j + 1)
                        w *= p
                    else:
                        w *= 1 - p
                orig_root = find(par, labels.index(origin))
                new_labels = [find(par, H + j) for j in range(H)]
                if orig_root not in new_labels:
                    continue  # the origin cluster can no longer reach the last column
                key = canon(new_labels, orig_root)
                new[key] = new.get(key, 0.0) + w
        states = new
    return sum(w for (labels, origin), w in states.items() if labels[mid] == origin)


def test_strip_oracle_small_cases():
    assert strip_connection_prob(0.3, 1, half_height=0) == pytest.approx(0.3)
    assert strip_connection_prob(0.3, 4, half_height=0) == pytest.approx(0.3**4)
    # a single square: the far corner is reached directly or around three sides
    p = 0.4
    direct = p
    around = p**3
    assert strip_connection_prob(p, 1, half_height=1) > direct + (1 - direct) * around * 0.99


def test_axis_decay_rate_at_small_p():
    p = 0.1
    lo, hi = -math.log(p) - 1.0, -math.log(p) + 0.2
    probs = [strip_connection_prob(p, k) for k in range(3, 7)]
    slope = np.polyfit(np.arange(3, 7), -np.log(probs), 1)[0]
    assert lo <= slope <= hi
    t = estimate_xi(RcParams(p), dirs=8, kmax=8, samples=800, seed=1)
    assert lo <= t.xi[0] <= hi
    assert t.xi[0] > 0 and np.all(t.xi > 0)


def test_axis_symmetry_within_three_sigma():
    t = estimate_xi(RcParams(0.3), dirs=8, kmax=8, samples=600, seed=2, reduce=False)
    e1, e2 = t.xi[0], t.xi[2]
    assert abs(e1 - e2) <= 3 * math.hypot(t.stderr[0], t.stderr[2])


def test_decay_rate_decreases_with_p():
    vals = [estimate_xi(RcParams(p), dirs=8, kmax=8, samples=600, seed=3).xi[0]
            for p in (0.1, 0.2, 0.3)]
    assert vals[0] > vals[1] > vals[2]


def test_tilted_and_plain_estimates_agree():
    a = estimate_xi(RcParams(0.3), dirs=8, kmax=8, samples=3000, seed=4, tilt=True)
    b = estimate_xi(RcParams(0.3), dirs=8, kmax=8, samples=3000, seed=4, tilt=False)
    assert abs(a.xi[0] - b.xi[0]) <= 4 * math.hypot(a.stderr[0], b.stderr[0])


def test_fk_estimate_runs_and_is_positive():
    t = estimate_xi(RcParams(0.3, 2.0), dirs=8, kmax=8, samples=150, seed=5, burn_in=20)
    assert np.all(np.isfinite(t.xi)) and np.all(t.xi > 0)


def test_zero_counts_are_flagged():
    t = estimate_xi(RcParams(0.02), dirs=8, kmax=8, samples=20, seed=6, tilt=False)
    assert t.flagged.any()


@pytest.mark.parametrize("p,q", [(0.5, 1.0), (0.7, 2.0)])
def test_supercritical_rejected(p, q):
    with pytest.raises(InputError):
        estimate_xi(RcParams(p, q), dirs=8, kmax=8, samples=10)


def test_small_kmax_rejected():
    with pytest.raises(InputError):
        estimate_xi(RcParams(0.2), dirs=8, kmax=4, samples=10)


def test_disc_shape():
    w = build_wulff(constant_xi(2.0))
    r = np.hypot(*w.boundary.T)
    assert len(w.boundary) >= 256
    assert abs(w.area() - 1) < 1e-6
    assert np.allclose(r, 1 / math.sqrt(math.pi), rtol=1e-4)
    assert w.is_convex()


def test_l1_decay_gives_square():
    w = build_wulff(l1_xi())
    assert abs(w.area() - 1) < 1e-6
    assert np.abs(w.boundary).max() == pytest.approx(0.5, abs=1e-9)
    assert np.allclose(np.abs(w.boundary).max(axis=1), 0.5, atol=1e-9)


def test_degenerate_shape_rejected():
    xi = constant_xi(1.0, 8)
    xi.xi[0] = 0.0
    with pytest.raises(InputError):
        build_wulff(xi)
    # too few directions: half-planes do not bound the region
    with pytest.raises(InputError):
        build_wulff(XiTable([0.0, math.pi / 2], [1.0, 1.0], [0.0, 0.0]))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.2, 5.0), min_size=8, max_size=8), st.floats(0.1, 10.0))
def test_build_is_convex_and_scale_free(vals, s):
    t = XiTable(2 * np.pi * np.arange(8) / 8, vals, np.zeros(8))
    w = build_wulff(t)
    assert w.is_convex(1e-9)
    assert abs(w.area() - 1) < 1e-6
    t2 = XiTable(t.angles, s * np.asarray(vals), np.zeros(8))
    assert np.allclose(build_wulff(t2).boundary, w.boundary, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.5, 3.0), min_size=16, max_size=16),
       st.lists(st.floats(0.01, 1.0), min_size=16, max_size=16))
def test_symmetrize_never_increases_stderr(xi, se):
    t = XiTable(2 * np.pi * np.arange(16) / 16, xi, se)
    s = symmetrize(t)
    assert np.all(s.stderr <= t.stderr + 1e-15)
    fi = [0, 1, 2, 1, 0, 1, 2, 1, 0, 1, 2, 1, 0, 1, 2, 1]
    for f in set(fi):
        vals = s.xi[np.array(fi) == f]
        assert np.allclose(vals, vals[0])


@pytest.mark.parametrize("c1,C1", [(0.4, 1.2), (0.9, 1.0)])
def test_disc_constants(c1, C1):
    w = disc_wulff(c1=c1, C1=C1)
    assert w.q0 == pytest.approx(min(math.pi / 8, c1 / (2 * C1)))
    assert 0 < w.c0 < w.q0 / 2
    v = verify_constants(w.refined(10), w.q0, w.c0)
    assert v["supang_ok"] and v["czercond_ok"] and v["order_ok"]


def test_square_constants_smaller_than_disc():
    sq = wulff_with_constants(l1_xi(), c1=0.9, C1=1.0)
    disc = disc_wulff(c1=0.9, C1=1.0)
    assert sq.q0 < disc.q0
    v = verify_constants(sq.refined(10), sq.q0, sq.c0)
    assert v["supang_ok"] and v["czercond_ok"]


def test_invalid_annulus_constants():
    with pytest.raises(InputError):
        choose_constants(build_wulff(constant_xi()), c1=1.0, C1=0.5)


def test_json_round_trips():
    t = estimate_xi(RcParams(0.2), dirs=8, kmax=8, samples=50, seed=7)
    t2 = XiTable.from_json(t.to_json())
    assert np.array_equal(t2.xi, t.xi) and t2.meta == t.meta and t2.to_json() == t.to_json()
    w = disc_wulff()
    w2 = WulffShape.from_json(w.to_json())
    assert np.array_equal(w2.boundary, w.boundary) and w2.q0 == w.q0 and w2.c0 == w.c0
    assert w2.to_json() == w.to_json()


def test_estimate_is_deterministic():
    a = estimate_xi(RcParams(0.25), dirs=8, kmax=8, samples=100, seed=8)
    b = estimate_xi(RcParams(0.25), dirs=8, kmax=8, samples=100, seed=8)
    assert a.to_json() == b.to_json()
