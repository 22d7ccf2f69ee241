import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import (
    circuit_config, disc_circuit, face_circuit, faces_from_cells, outermost_cycle_oracle,
    random_circuit_configs, square_circuit,
)
from rcdroplet.circuit import (
    Circuit, DropletStats, angle_between, convex_hull, cutpoint_mask, cutpoint_split,
    cutpoints, distance_angle_bound, droplet_stats, fluc, gd_and_center, hull_and_facets,
    in_backward_cone, in_forward_cone, interior_area, mlr_facet, mprg, outermost_circuit,
    polygon_area2, polygon_is_simple, regeneration_mask, regeneration_sites, stats_from_csv,
    stats_to_csv, theta_rg_max, trace_face_boundary, validate_row,
)
from rcdroplet.errors import InputError
from rcdroplet.lattice import BondConfig, BoxGeom, apply_symmetry
from rcdroplet.rng import make_rng
from rcdroplet.wulff import disc_wulff


# --- extraction -----------------------------------------------------------


def test_unit_square_around_origin():
    c = square_circuit(-1, 1)
    cfg = circuit_config(c, 3)
    got = outermost_circuit(cfg)
    assert got == c and len(got) == 8 and interior_area(got) == 4


def test_nested_squares_give_outer():
    outer = square_circuit(-2, 2, 3)
    cfg = circuit_config(outer, 3)
    cfg.states |= circuit_config(square_circuit(-1, 1), 3).states
    assert outermost_circuit(cfg) == outer


def test_no_circuit_is_none():
    assert outermost_circuit(BondConfig.closed(BoxGeom(2))) is None


def test_oracle_equivalence_exhaustive_L1():
    g = BoxGeom(1)
    for code in range(1 << g.n_edges):
        cfg = BondConfig.from_index(g, code)
        c = outermost_circuit(cfg)
        o = outermost_cycle_oracle(cfg)
        assert (c is None) == (o is None)
        if c is not None:
            assert c.vertex_set() == o[0] and interior_area(c) == o[1]


@pytest.mark.parametrize("L,count", [(2, 400), (3, 200)])
def test_oracle_equivalence_random(L, count):
    rng = make_rng(20 + L)
    g = BoxGeom(L)
    for _ in range(count):
        cfg = BondConfig(g, rng.random(g.n_edges) < rng.uniform(0.5, 0.62))
        c = outermost_circuit(cfg)
        o = outermost_cycle_oracle(cfg)
        assert (c is None) == (o is None)
        if c is not None:
            c.validate()
            assert c.vertex_set() == o[0] and interior_area(c) == o[1]
            assert cfg.states[[g.edge_between(tuple(a), tuple(b)) for a, b in zip(*c.edges())]].all()


# --- area and hull --------------------------------------------------------


@pytest.mark.parametrize("s", [1, 2, 5])
def test_square_area(s):
    assert interior_area(square_circuit(0, s, s + 1)) == s * s


def test_l_shaped_area():
    c = Circuit([(0, 0), (3, 0), (3, 1), (1, 1), (1, 3), (0, 3)])
    # expand to unit steps
    pts = []
    V = c.vertices.tolist()
    for k in range(len(V)):
        a, b = np.array(V[k]), np.array(V[(k + 1) % len(V)])
        d = np.sign(b - a)
        p = a.copy()
        while not np.array_equal(p, b):
            pts.append(tuple(p))
            p = p + d
    c = Circuit(pts)
    c.validate()
    assert len(c) == 12 and interior_area(c) == 5


def test_square_hull_has_four_equal_facets():
    h = hull_and_facets(square_circuit(-2, 2))
    assert len(h.vertices) == 4
    assert np.allclose(h.facet_lengths(), 4.0)


def _brute_facets(points):
    pts = sorted(set(map(tuple, points)))
    out = set()
    for a in pts:
        for b in pts:
            if a == b:
                continue
            ok = True
            for p in pts:
                cr = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
                if cr < 0:
                    ok = False
                    break
                if cr == 0:
                    dot = (p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])
                    if dot < 0 or dot > (b[0] - a[0]) ** 2 + (b[1] - a[1]) ** 2:
                        ok = False
                        break
            if ok:
                out.add((a, b))
    return out


def test_hull_matches_brute_force():
    rng = make_rng(3)
    for cfg, c in random_circuit_configs(rng, 3, 0.6, 60):
        h = hull_and_facets(c)
        got = {(tuple(map(int, a)), tuple(map(int, b))) for a, b in zip(*h.facets)}
        assert got == _brute_facets(c.vertices.tolist())
        assert set(map(tuple, h.vertices.tolist())) <= c.vertex_set()


def test_convex_hull_drops_collinear_points():
    assert len(convex_hull(np.array([(0, 0), (1, 0), (2, 0), (2, 2), (0, 2)]))) == 4


# --- cutpoints ------------------------------------------------------------

OVERHANG = [(-2, -1), (-1, -1), (0, -1), (1, -1), (1, 0), (2, 0), (3, 0), (3, 1), (3, 2),
            (2, 2), (1, 2), (0, 2), (0, 1), (-1, 1), (-1, 0), (-2, 0)]


def test_convex_circuit_all_cutpoints():
    c = square_circuit(-2, 3, 4)
    assert cutpoints(c) == c.vertex_set()


def test_overhang_example():
    c = Circuit(OVERHANG)
    c.validate()
    assert len(c) == 16
    excluded = {(1, 0), (2, 0), (3, 0), (0, 1), (0, 2), (-1, 0), (-2, 0)}
    assert cutpoints(c) == c.vertex_set() - excluded


def test_cutpoints_need_enclosed_origin():
    with pytest.raises(InputError):
        cutpoints(square_circuit(1, 3, 4))


def _ray_hits(v, a, b):
    """Exact: does the ray {t v : t >= 0} meet the closed segment [a, b] at a point other than v?"""
    vx, vy = map(Fraction, v)
    ax, ay = map(Fraction, a)
    dx, dy = Fraction(b[0] - a[0]), Fraction(b[1] - a[1])
    den = vx * dy - vy * dx
    if den == 0:
        if vx * ay - vy * ax != 0:
            return False
        pts = [(ax, ay), (ax + dx, ay + dy)]
        # collinear with the ray: any point with positive projection not equal to v
        for s in (Fraction(0), Fraction(1)):
            px, py = ax + s * dx, ay + s * dy
            if px * vx + py * vy >= 0 and (px, py) != (vx, vy):
                return True
        return any(px * vx + py * vy > 0 for px, py in pts) and (pts[0] != pts[1])
    t = (ax * dy - ay * dx) / den
    s = (ax * vy - ay * vx) / den
    return t >= 0 and 0 <= s <= 1 and (t * vx, t * vy) != (vx, vy)


def _cutpoint_oracle(c):
    V = [tuple(map(int, p)) for p in c.vertices]
    out = set()
    for v in V:
        if not any(_ray_hits(v, V[k], V[(k + 1) % len(V)]) for k in range(len(V))):
            out.add(v)
    return out


def test_cutpoints_match_exact_ray_oracle():
    rng = make_rng(4)
    for _, c in random_circuit_configs(rng, 3, 0.62, 80):
        assert cutpoints(c) == _cutpoint_oracle(c)
    assert cutpoints(Circuit(OVERHANG)) == _cutpoint_oracle(Circuit(OVERHANG))


def test_cutpoint_area_decomposition():
    rng = make_rng(5)
    checked = 0
    for _, c in random_circuit_configs(rng, 4, 0.62, 60):
        cp = np.flatnonzero(cutpoint_mask(c))
        if len(cp) < 2:
            continue
        for _ in range(5):
            i, j = rng.choice(cp, size=2, replace=False)
            p1, p2 = cutpoint_split(c, c.vertices[i], c.vertices[j])
            a1, a2 = polygon_area2(p1), polygon_area2(p2)
            assert a1 >= 0 and a2 >= 0
            assert a1 + a2 == c.area2()
            assert polygon_is_simple(p1) or a1 == 0
            assert polygon_is_simple(p2) or a2 == 0
            checked += 1
    assert checked > 100


# --- cones and regeneration ----------------------------------------------


def test_cones_use_unit_perpendicular():
    v = (10, 0)
    assert in_forward_cone(v, (10, 5), math.pi / 4)
    assert not in_forward_cone(v, (13, 1), math.pi / 4)
    assert in_backward_cone(v, (10, -5), math.pi / 4)


def test_distance_angle_bound_property():
    rng = make_rng(6)
    N = 20000
    q0 = rng.uniform(1e-3, math.pi / 4, N)
    c0 = q0 / 2 * rng.uniform(0.01, 0.999, N)
    r = rng.uniform(0.5, 100, N)
    phi = rng.uniform(0, 2 * math.pi, N)
    x = np.stack([r * np.cos(phi), r * np.sin(phi)], 1)
    ang = rng.uniform(0, 1, N) * c0 * rng.choice([-1, 1], N)
    # y on the ray at angle ang from x, at a distance chosen inside the cone
    u = np.stack([np.cos(phi + ang), np.sin(phi + ang)], 1)
    s = rng.uniform(0.2, 3.0, N) * r
    y = u * s[:, None]
    viol = 0
    used = 0
    for k in range(N):
        xa, ya = x[k], y[k]
        if not (in_forward_cone(xa, ya, math.pi / 2 - q0[k]) or
                in_backward_cone(xa, ya, math.pi / 2 - q0[k])):
            continue
        used += 1
        if np.hypot(*(ya - xa)) > distance_angle_bound(xa, ya, q0[k]) * (1 + 1e-9) + 1e-9:
            viol += 1
    assert used > 1000 and viol == 0


def test_square_midpoint_is_regeneration_site():
    c = square_circuit(-10, 10, 11)
    mask = regeneration_mask(c, math.pi / 8, math.pi / 32)
    idx = [k for k, v in enumerate(c.vertices.tolist()) if v == [10, 0]][0]
    assert mask[idx]


@pytest.mark.parametrize("c0", [0.0, -0.1, math.pi / 16])
def test_invalid_constants_rejected(c0):
    with pytest.raises(InputError):
        regeneration_mask(square_circuit(-2, 2), math.pi / 8, c0)


def _regen_oracle(c, q0, c0, per_edge=64):
    """Dense sampling of the circuit, using angles only."""
    V = c.vertices.astype(float)
    A, B = c.edges()
    t = np.linspace(0, 1, per_edge + 1)
    pts = (A[:, None, :] + t[None, :, None] * (B - A)[:, None, :]).reshape(-1, 2)
    out = []
    for v in V:
        d = pts - v
        nz = np.hypot(d[:, 0], d[:, 1]) > 1e-12
        cr = v[0] * pts[:, 1] - v[1] * pts[:, 0]
        dt = pts @ v
        inwin = np.abs(np.arctan2(cr, dt)) <= c0 - 1e-9
        vp = np.array([-v[1], v[0]])
        a_f = np.abs(np.arctan2(d[:, 0] * vp[1] - d[:, 1] * vp[0], d @ vp))
        ok = (a_f <= math.pi / 2 - q0 + 1e-9) | (a_f >= math.pi / 2 + q0 - 1e-9)
        out.append(bool(np.all(ok | ~inwin | ~nz)))
    return np.array(out)


def test_regeneration_matches_sampling_oracle_on_disc():
    c = disc_circuit(20)
    q0, c0 = 0.6, 0.05
    mask = regeneration_mask(c, q0, c0)
    orc = _regen_oracle(c, q0, c0)
    # sampling can only miss violations, never invent them
    assert not np.any(mask & ~orc)
    assert np.mean(mask == orc) > 0.97
    assert 0 < mask.sum() < len(c)


def test_theta_rg_max_examples():
    assert theta_rg_max([(1, 0), (0, 1), (-1, 0), (0, -1)]) == pytest.approx(math.pi / 2)
    assert theta_rg_max([(3, 0), (-5, 0)]) == pytest.approx(math.pi)
    assert theta_rg_max(np.zeros((0, 2))) == 2 * math.pi
    assert theta_rg_max([(1, 1)]) == 2 * math.pi


def test_mprg_bound_on_disc():
    c = disc_circuit(25)
    q0, c0 = math.pi / 16, math.pi / 64
    rg = regeneration_sites(c, q0, c0)
    th = theta_rg_max(rg)
    R = np.hypot(*c.vertices.T).max()
    if th <= 2 * c0:
        assert mprg(c, rg) <= R * th / math.sin(q0 / 2)
    assert math.isnan(mprg(c, np.zeros((0, 2))))


# --- GD -------------------------------------------------------------------


@pytest.mark.parametrize("z", [(0, 0), (1, -2), (3, 1)])
def test_gd_construct_and_verify(z):
    w = disc_wulff()
    n = 12
    c = disc_circuit(n / math.sqrt(math.pi), center=z, L=14)
    gd, cen = gd_and_center(c, w.boundary, n)
    assert cen == z
    assert gd <= 1.0


def test_gd_translation_equivariance():
    w = disc_wulff()
    rng = make_rng(9)
    for _, c in random_circuit_configs(rng, 4, 0.62, 10):
        gd, cen = gd_and_center(c, w.boundary, 3)
        gd2, cen2 = gd_and_center(c.shifted((5, -3)), w.boundary, 3)
        assert gd2 == pytest.approx(gd, abs=1e-9)
        assert cen2 == (cen[0] + 5, cen[1] - 3)


# --- fluc -----------------------------------------------------------------


def test_fluc_examples():
    assert fluc([(0, 0), (1, 0), (2, 0), (3, 0)], (0, 0), (3, 0)) == 0
    assert fluc([(0, 0), (1, 0), (1, 2), (2, 2), (2, 0), (4, 0)], (0, 0), (4, 0)) == 2


def test_fluc_matches_pointwise_maximum():
    rng = make_rng(10)
    for _ in range(50):
        steps = rng.choice([0, 1], size=12)
        pts = [(0, 0)]
        for s in steps:
            x, y = pts[-1]
            pts.append((x + 1, y) if s == 0 else (x, y + 1))
        a, b = np.array(pts[0], float), np.array(pts[-1], float)
        P = np.array(pts, float)
        fine = np.concatenate([P[:-1] + t * (P[1:] - P[:-1]) for t in np.linspace(0, 1, 21)])
        d = b - a
        tt = np.clip((fine - a) @ d / (d @ d), 0, 1)
        brute = np.hypot(*(fine - (a + tt[:, None] * d)).T).max()
        assert fluc(pts, pts[0], pts[-1]) == pytest.approx(brute, abs=1e-12)


# --- MLR / droplet statistics ---------------------------------------------


def notched_square():
    cells = [(i, j) for i in range(-2, 2) for j in range(-2, 2) if (i, j) != (0, 1)]
    return face_circuit(faces_from_cells(cells, 4), 4)


def test_notch_mlr_and_facet():
    c = notched_square()
    mlr, x_mlr, xm, xp, on_hull = mlr_facet(c)
    assert mlr == 1.0
    assert x_mlr == (0, 1)
    assert {tuple(xm), tuple(xp)} == {(2, 2), (-2, 2)}


def test_droplet_stats_notch_and_convex():
    w = disc_wulff()
    c = notched_square()
    s = droplet_stats(circuit_config(c, 4), 3, w.boundary, w.q0, w.c0)
    assert s.area == 15 and s.exc == 6 and s.mlr == 1.0 and s.mlrf == 4.0 and s.mfl == 4.0
    assert validate_row(s) == []
    sq = droplet_stats(circuit_config(square_circuit(-2, 2), 4), 4, w.boundary, w.q0, w.c0)
    assert sq.mlr == 0.0 and sq.all_on_hull == 1 and sq.exc == 0
    assert validate_row(sq) == []


def test_droplet_stats_without_circuit_is_error():
    w = disc_wulff()
    with pytest.raises(InputError):
        droplet_stats(BondConfig.closed(BoxGeom(2)), 1, w.boundary, w.q0, w.c0)


def test_stats_invariant_under_lattice_symmetries():
    w = disc_wulff()
    rng = make_rng(12)
    for cfg, _ in random_circuit_configs(rng, 4, 0.62, 6):
        base = droplet_stats(cfg, 3, w.boundary, w.q0, w.c0)
        for k in range(8):
            s = droplet_stats(apply_symmetry(cfg, k), 3, w.boundary, w.q0, w.c0)
            assert s.area == base.area
            assert s.mlr == pytest.approx(base.mlr, abs=1e-9)
            assert s.mfl == pytest.approx(base.mfl, abs=1e-9)
            assert s.gd == pytest.approx(base.gd, abs=1e-6)


def test_csv_round_trip():
    w = disc_wulff()
    rng = make_rng(13)
    rows = [droplet_stats(cfg, 2, w.boundary, w.q0, w.c0, seed=7, sample=i)
            for i, (cfg, _) in enumerate(random_circuit_configs(rng, 3, 0.62, 5))]
    text = stats_to_csv(rows)
    assert text.splitlines()[0] == ",".join(DropletStats.columns())
    back = stats_from_csv(text)
    assert stats_to_csv(back) == text
    for r in back:
        assert validate_row(r) == []


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_mlrf_never_exceeds_mfl(seed):
    rng = make_rng(seed)
    cfg, c = random_circuit_configs(rng, 3, 0.65, 1)[0]
    mlr, x, xm, xp, _ = mlr_facet(c)
    mfl = hull_and_facets(c).facet_lengths().max()
    assert np.hypot(*(xp - xm)) <= mfl + 1e-9
    assert angle_between(xm, xp) > 0 or len(hull_and_facets(c).vertices) <= 2
