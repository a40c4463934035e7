"""Independent brute-force oracles used to freeze expected test values.

Everything here is deliberately written without the library's own algorithms:
plain double loops, explicit recursions on raw arrays, and exhaustive
enumeration of transport-plan vertices.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np


def hausdorff_bruteforce(a_pts, b_pts, dist_fn) -> float:
    """Definitionally direct Hausdorff distance via nested loops."""
    a_pts = np.atleast_2d(a_pts)
    b_pts = np.atleast_2d(b_pts)
    d_ab = max(min(dist_fn(a, b) for b in b_pts) for a in a_pts)
    d_ba = max(min(dist_fn(a, b) for a in a_pts) for b in b_pts)
    return max(d_ab, d_ba)


def euclid(a, b) -> float:
    return float(np.sqrt(np.sum((np.asarray(a, float) - np.asarray(b, float)) ** 2)))


# ---------------------------------------------------------------------------
# exact optimal transport by vertex enumeration
# ---------------------------------------------------------------------------

def _is_spanning_tree(edges, n, m) -> bool:
    parent = list(range(n + m))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in edges:
        ri, rj = find(i), find(n + j)
        if ri == rj:
            return False
        parent[ri] = rj
    return True


@lru_cache(maxsize=None)
def _tree_schedules(n: int, m: int):
    """All spanning trees of K_{n,m} as leaf-elimination schedules.

    A schedule is a list of (edge_index, leaf_node, other_node) triples; edge
    k of a tree is its k-th (i, j) pair.  Solving the unique tree flow for
    given supplies/demands is then a linear pass.
    """
    all_edges = [(i, j) for i in range(n) for j in range(m)]
    schedules = []
    for combo in itertools.combinations(range(len(all_edges)), n + m - 1):
        edges = [all_edges[k] for k in combo]
        if not _is_spanning_tree(edges, n, m):
            continue
        deg = [0] * (n + m)
        incident: list[list[int]] = [[] for _ in range(n + m)]
        for e, (i, j) in enumerate(edges):
            deg[i] += 1
            deg[n + j] += 1
            incident[i].append(e)
            incident[n + j].append(e)
        removed_edge = [False] * len(edges)
        removed_node = [False] * (n + m)
        schedule = []
        leaves = [v for v in range(n + m) if deg[v] == 1]
        while leaves:
            v = leaves.pop()
            if removed_node[v] or deg[v] != 1:
                continue
            e = next(k for k in incident[v] if not removed_edge[k])
            i, j = edges[e]
            other = n + j if v == i else i
            schedule.append((e, v, other))
            removed_edge[e] = True
            removed_node[v] = True
            deg[v] = 0
            deg[other] -= 1
            if deg[other] == 1:
                leaves.append(other)
        schedules.append((edges, schedule))
    return schedules


def w1_plan_enumeration(a_pts, a_w, b_pts, b_w, dist_fn=euclid) -> float:
    """Exact Wasserstein-1 by enumerating every extreme transport plan.

    Extreme points of the transportation polytope are spanning-tree
    solutions; the minimum over feasible ones is the exact optimum.
    Supports of size <= 4 keep the enumeration small.
    """
    a_pts = np.atleast_2d(a_pts)
    b_pts = np.atleast_2d(b_pts)
    n, m = len(a_w), len(b_w)
    cost = np.array([[dist_fn(a_pts[i], b_pts[j]) for j in range(m)]
                     for i in range(n)])
    best = np.inf
    for edges, schedule in _tree_schedules(n, m):
        r = list(a_w) + list(b_w)
        flows = [0.0] * len(edges)
        ok = True
        for e, leaf, other in schedule:
            f = r[leaf]
            if f < -1e-12:
                ok = False
                break
            flows[e] = f
            r[leaf] = 0.0
            r[other] -= f
        if not ok:
            continue
        total = sum(max(f, 0.0) * cost[i, j] for f, (i, j) in zip(flows, edges))
        best = min(best, total)
    return float(best)


# ---------------------------------------------------------------------------
# explicit fractal constructions
# ---------------------------------------------------------------------------

def cantor_points(depth: int) -> np.ndarray:
    """Endpoint set of the depth-k middle-third construction."""
    pts = np.array([0.0, 1.0])
    for _ in range(depth):
        pts = np.unique(np.concatenate([pts / 3.0, pts / 3.0 + 2.0 / 3.0]))
    return pts


def sierpinski_points(depth: int) -> np.ndarray:
    """Depth-k corner set of the gasket on corners (0,0), (1,0), (1/2,1)."""
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]])
    pts = corners.copy()
    for _ in range(depth):
        pts = np.concatenate([pts / 2.0 + c / 2.0 for c in corners])
        pts = np.unique(pts, axis=0)
    return pts


def cantor_measure_atoms(depth: int) -> np.ndarray:
    """Atom positions of the depth-k balanced pushforward of a point at 0.

    All 2^depth composition endpoints are distinct; each carries 2^-depth.
    """
    pts = np.array([0.0])
    for _ in range(depth):
        pts = np.concatenate([pts / 3.0, pts / 3.0 + 2.0 / 3.0])
    return np.sort(pts)


def cantor_transfer_value(x: float, k: int) -> float:
    """Average of the k-fold map compositions of the middle-third pair at x.

    Direct enumeration over all 2^k equally likely composition tuples.
    """
    maps = [lambda v: v / 3.0, lambda v: v / 3.0 + 2.0 / 3.0]
    total = 0.0
    for combo in itertools.product(range(2), repeat=k):
        v = x
        for j in combo:
            v = maps[j](v)
        total += v
    return total / 2**k
