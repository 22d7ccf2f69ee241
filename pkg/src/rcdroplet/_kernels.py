"""Compiled inner loops (numba) for heat-bath sweeps and cluster exploration."""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _search(states, start, target, skip, inc, edge_u, edge_v, bnd, stop_at_boundary,
            stamp, mark, queue):
    """BFS over open edges from ``start``, ignoring edge ``skip``.

    Returns 1 if ``target`` is reached, 2 if a boundary vertex is reached while
    ``stop_at_boundary`` is set, 0 if the cluster is exhausted.
    """
    head = 0
    tail = 1
    queue[0] = start
    stamp[start] = mark
    if stop_at_boundary and bnd[start]:
        return 2
    while head < tail:
        x = queue[head]
        head += 1
        for k in range(4):
            e = inc[x, k]
            if e < 0 or e == skip or not states[e]:
                continue
            y = edge_v[e] if edge_u[e] == x else edge_u[e]
            if stamp[y] == mark:
                continue
            if y == target:
                return 1
            if stop_at_boundary and bnd[y]:
                return 2
            stamp[y] = mark
            queue[tail] = y
            tail += 1
    return 0


@njit(cache=True)
def joined_off_edge(states, e, inc, edge_u, edge_v, bnd, wired, stamp, mark, queue):
    """Are the endpoints of ``e`` joined without using ``e``?

    With ``wired`` the boundary vertices count as one vertex.  ``mark`` must be
    fresh for each call; two marks may be consumed (``mark`` and ``mark + 1``).
    """
    a = edge_u[e]
    b = edge_v[e]
    r = _search(states, a, b, e, inc, edge_u, edge_v, bnd, wired, stamp, mark, queue)
    if r == 1:
        return True
    if r == 0:
        return False
    r2 = _search(states, b, -1, e, inc, edge_u, edge_v, bnd, True, stamp, mark + 1, queue)
    return r2 == 2


@njit(cache=True)
def sweep(states, unif, p, q, wired, inc, edge_u, edge_v, bnd, stamp, mark0, queue):
    """One heat-bath sweep over all edges in id order; returns the next free mark."""
    p_free = p / (p + (1.0 - p) * q)
    mark = mark0
    m = states.shape[0]
    for e in range(m):
        if q == 1.0:
            states[e] = unif[e] < p
            continue
        j = joined_off_edge(states, e, inc, edge_u, edge_v, bnd, wired, stamp, mark, queue)
        mark += 2
        states[e] = unif[e] < (p if j else p_free)
    return mark


@njit(cache=True)
def batch_sweep(codes, unif, table_open_prob, n_edges):
    """Heat-bath sweep of many replicas of a tiny box encoded as integers.

    ``table_open_prob[e, c]`` is the open probability of edge ``e`` given code ``c``.
    """
    R = codes.shape[0]
    for r in range(R):
        c = codes[r]
        for e in range(n_edges):
            bit = np.int64(1) << e
            if unif[r, e] < table_open_prob[e, c]:
                c |= bit
            else:
                c &= ~bit
        codes[r] = c


@njit(cache=True)
def batch_labels(codes, edge_u, edge_v, n_vertices):
    """Min-label component labels for each configuration code."""
    C = codes.shape[0]
    m = edge_u.shape[0]
    lab = np.empty((C, n_vertices), dtype=np.int64)
    for c in range(C):
        for v in range(n_vertices):
            lab[c, v] = v
        changed = True
        while changed:
            changed = False
            code = codes[c]
            for e in range(m):
                if (code >> e) & 1:
                    a = lab[c, edge_u[e]]
                    b = lab[c, edge_v[e]]
                    if a != b:
                        lo = a if a < b else b
                        lab[c, edge_u[e]] = lo
                        lab[c, edge_v[e]] = lo
                        changed = True
        # compress: make every label the minimum vertex of its component
        for v in range(n_vertices):
            w = v
            while lab[c, w] != w:
                w = lab[c, w]
            lab[c, v] = w
    return lab


@njit(cache=True)
def sweep_edges(states, edges, unif, p, q, wired, inc, edge_u, edge_v, bnd, stamp, mark0, queue):
    """Heat-bath updates of ``edges`` in the given order, edge ``edges[k]`` using ``unif[k]``."""
    p_free = p / (p + (1.0 - p) * q)
    mark = mark0
    for k in range(edges.shape[0]):
        e = edges[k]
        if q == 1.0:
            states[e] = unif[k] < p
            continue
        j = joined_off_edge(states, e, inc, edge_u, edge_v, bnd, wired, stamp, mark, queue)
        mark += 2
        states[e] = unif[k] < (p if j else p_free)
    return mark


@njit(cache=True)
def enclosed_region(states, face_nb, face_edge, side, centre, reached, inside, queue):
    """Mark in ``inside`` the faces enclosed by the outermost open circuit around the origin.

    Faces are ``side x side``; ``face_nb[f, k]`` is the neighbour across edge
    ``face_edge[f, k]`` (-1 for outside the box).  Exterior faces are those
    joined to the outside through closed edges.  ``centre`` lists the four
    faces around the origin.  Returns the enclosed face count (0 if none).
    """
    nf = side * side
    reached[:] = 0
    inside[:] = 0
    tail = 0
    last = side - 1
    for a in range(side):
        # rim faces: (a, 0) bottom k=0, (last, a) right k=1, (a, last) top k=2, (0, a) left k=3
        for f, k in ((a * side, 0), (last * side + a, 1), (a * side + last, 2), (a, 3)):
            if not reached[f] and not states[face_edge[f, k]]:
                reached[f] = 1
                queue[tail] = f
                tail += 1
    head = 0
    while head < tail:
        f = queue[head]
        head += 1
        for k in range(4):
            g = face_nb[f, k]
            if g >= 0 and not reached[g] and not states[face_edge[f, k]]:
                reached[g] = 1
                queue[tail] = g
                tail += 1
    for k in range(4):
        if reached[centre[k]]:
            return 0
    start = centre[0]
    inside[start] = 1
    queue[0] = start
    head = 0
    tail = 1
    while head < tail:
        f = queue[head]
        head += 1
        for k in range(4):
            g = face_nb[f, k]
            if g >= 0 and not reached[g] and not inside[g]:
                inside[g] = 1
                queue[tail] = g
                tail += 1
    return tail


@njit(cache=True)
def constrained_sweeps(states, active, unif, p, q, wired, inc, edge_u, edge_v, bnd, stamp, mark0,
                       queue, edge_faces, face_nb, face_edge, side, centre, target, inside,
                       trial, reached, fqueue, counts):
    """Heat-bath sweeps over ``active`` edges rejecting moves that leave area < ``target``.

    ``inside`` must hold an enclosed face set of area >= ``target`` whose
    boundary edges are all open.  Opening an edge never shrinks the enclosed
    region, and closing an edge off the boundary of ``inside`` leaves it
    enclosed, so only closures of boundary edges need a recomputation.
    ``unif`` has one row per sweep.  ``counts`` accumulates
    (proposed changes, rejected, recomputations).
    """
    p_free = p / (p + (1.0 - p) * q)
    mark = mark0
    for s in range(unif.shape[0]):
        for k in range(active.shape[0]):
            e = active[k]
            if q == 1.0:
                pe = p
            else:
                j = joined_off_edge(states, e, inc, edge_u, edge_v, bnd, wired, stamp, mark, queue)
                mark += 2
                pe = p if j else p_free
            new = unif[s, k] < pe
            if new == (states[e] != 0):
                continue
            counts[0] += 1
            if new:
                states[e] = 1
                continue
            fa = edge_faces[e, 0]
            fb = edge_faces[e, 1]
            ia = inside[fa] if fa >= 0 else 0
            ib = inside[fb] if fb >= 0 else 0
            if ia == ib:
                states[e] = 0
                continue
            states[e] = 0
            counts[2] += 1
            area = enclosed_region(states, face_nb, face_edge, side, centre, reached, trial, fqueue)
            if area < target:
                states[e] = 1
                counts[1] += 1
            else:
                inside[:] = trial
    return mark
