"""Discrete probability measures and the Wasserstein-1 distance.

A measure is a finite set of weighted atoms with total mass 1.  Distances are
computed exactly: in one dimension by the closed-form CDF integral, in higher
dimensions by a successive-shortest-paths min-cost flow on the bipartite atom
graph.  Costs inside the flow solver are scaled to integers by COST_SCALE =
10^9 and masses by MASS_SCALE = 10^12, which makes path selection exact and
deterministic; the induced error on the reported distance is below 1e-9 at
unit diameter.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .metric import EUCLIDEAN, Metric, PointCloud, _as_points

__all__ = [
    "DiscreteMeasure",
    "normalize",
    "wasserstein1",
    "support",
    "bin_to_grid",
    "bin_points",
    "grid_assign",
    "cell_center_points",
    "measure_to_csv",
    "measure_from_csv",
    "WassersteinCapError",
    "COST_SCALE",
    "MASS_SCALE",
]

COST_SCALE = 10**9
MASS_SCALE = 10**12

# wasserstein1 refuses bipartite graphs larger than this many atom pairs
DEFAULT_PAIR_CAP = 4 * 10**6

_MASS_TOL = 1e-12


class WassersteinCapError(ValueError):
    """Raised when the support-size product exceeds the configured cap."""


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted atoms summing to 1 (within 1e-12); weights nonnegative."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = _as_points(self.atoms)
        weights = np.asarray(self.weights, dtype=float).ravel()
        if atoms.shape[0] != weights.shape[0]:
            raise ValueError("atoms/weights length mismatch")
        if atoms.shape[0] == 0:
            raise ValueError("measure must have at least one atom")
        if not np.all(np.isfinite(atoms)) or not np.all(np.isfinite(weights)):
            raise ValueError("non-finite atom or weight")
        if np.any(weights < 0):
            raise ValueError("negative weight")
        if abs(weights.sum() - 1.0) > _MASS_TOL:
            raise ValueError(f"weights sum to {weights.sum()!r}, not 1")
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def __len__(self) -> int:
        return self.atoms.shape[0]

    @staticmethod
    def dirac(point) -> "DiscreteMeasure":
        pt = np.asarray(point, dtype=float).ravel()
        return DiscreteMeasure(pt[None, :], np.array([1.0]))


def normalize(atoms, weights) -> DiscreteMeasure:
    """Rescale raw weights to sum exactly to 1, preserving atom order.

    The last weight absorbs the rounding residue (or the largest one, if the
    last would go negative).
    """
    atoms = _as_points(atoms)
    w = np.asarray(weights, dtype=float).ravel().copy()
    if np.any(w < 0):
        raise ValueError("negative weight")
    total = w.sum()
    if not np.isfinite(total) or total <= 0:
        raise ValueError("total mass must be positive")
    w /= total
    # absorb rounding into the last weight (or the largest, if the last
    # would go negative); one pass can still be an ulp off, so iterate
    for _ in range(10):
        residue = 1.0 - w.sum()
        if residue == 0.0:
            break
        k = -1 if w[-1] + residue >= 0 else int(np.argmax(w))
        w[k] += residue
    return DiscreteMeasure(atoms, w)


def support(m: DiscreteMeasure, weight_floor: float = 0.0) -> PointCloud:
    """Atoms carrying weight strictly above ``weight_floor``, as a cloud."""
    if weight_floor < 0:
        raise ValueError("weight_floor must be nonnegative")
    w_max = float(m.weights.max())
    if weight_floor >= w_max:
        raise ValueError("weight_floor at or above maximum weight: empty support")
    mask = m.weights > weight_floor
    return PointCloud.from_points(m.atoms[mask])


# ---------------------------------------------------------------------------
# grid binning
# ---------------------------------------------------------------------------

def _res_per_axis(resolution, dim: int) -> np.ndarray:
    res = np.broadcast_to(np.asarray(resolution, dtype=np.int64), (dim,))
    if np.any(res < 1):
        raise ValueError("resolution must be >= 1")
    return res


def grid_assign(points: np.ndarray, box: np.ndarray, resolution) -> np.ndarray:
    """Flat cell index per point on the grid over ``box``.

    ``resolution`` is the cell count per axis (scalar or one per axis).
    Atoms exactly on an interior cell boundary go to the lower-index cell;
    axes of zero extent collapse to a single cell.
    """
    pts = _as_points(points)
    box = np.asarray(box, dtype=float)
    res = _res_per_axis(resolution, pts.shape[1])
    lo, hi = box[:, 0], box[:, 1]
    if np.any(pts < lo) or np.any(pts > hi):
        raise ValueError("atom outside bounding box")
    extent = hi - lo
    cell = extent / res
    t = np.zeros_like(pts)
    nz = cell > 0
    t[:, nz] = (pts[:, nz] - lo[nz]) / cell[nz]
    idx = np.floor(t).astype(np.int64)
    on_boundary = (t == np.floor(t)) & (idx > 0)
    idx[on_boundary] -= 1
    idx = np.minimum(idx, res - 1)
    return np.ravel_multi_index(idx.T, tuple(res))


def cell_center_points(flat_idx: np.ndarray, box: np.ndarray, resolution) -> np.ndarray:
    """Centers of the given flat cell indices."""
    box = np.asarray(box, dtype=float)
    dim = box.shape[0]
    res = _res_per_axis(resolution, dim)
    multi = np.stack(np.unravel_index(flat_idx, tuple(res)), axis=1)
    lo = box[:, 0]
    cell = (box[:, 1] - box[:, 0]) / res
    return lo + (multi + 0.5) * cell


def cell_diameter(box, resolution: int, metric: Metric = EUCLIDEAN) -> float:
    """Diameter of one grid cell under the given metric."""
    box = np.asarray(box, dtype=float)
    cell = (box[:, 1] - box[:, 0]) / resolution
    if metric.kind == "euclidean":
        return float(np.sqrt(np.sum(cell * cell)))
    return float(np.max(cell))


def bin_points(atoms: np.ndarray, weights: np.ndarray, resolution: int,
               box) -> tuple[np.ndarray, np.ndarray]:
    """Accumulate raw weighted points into grid cells.

    Returns (cell centers, cellwise sums) in lexicographic cell order; the
    ordered reduction makes the result deterministic.
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    box = np.asarray(box, dtype=float)
    flat = grid_assign(atoms, box, resolution)
    order = np.argsort(flat, kind="stable")
    sorted_flat = flat[order]
    sorted_w = np.asarray(weights, dtype=float)[order]
    uniq, starts = np.unique(sorted_flat, return_index=True)
    sums = np.add.reduceat(sorted_w, starts)
    return cell_center_points(uniq, box, resolution), sums


def bin_to_grid(m: DiscreteMeasure, resolution: int, box) -> DiscreteMeasure:
    """Reassign each atom's mass to the center of its grid cell.

    Total mass is preserved (cellwise sums); the output support has at most
    resolution^D atoms, listed in lexicographic cell order.
    """
    centers, sums = bin_points(m.atoms, m.weights, resolution, box)
    return DiscreteMeasure(centers, sums)


# ---------------------------------------------------------------------------
# Wasserstein-1
# ---------------------------------------------------------------------------

def _check_normalized(m: DiscreteMeasure, name: str):
    if abs(float(m.weights.sum()) - 1.0) > 1e-9:
        raise ValueError(f"{name} is not normalized")


def _w1_cdf_1d(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Closed-form 1-d value: integral of |F_mu - F_nu|."""
    xs = np.concatenate([mu.atoms[:, 0], nu.atoms[:, 0]])
    deltas = np.concatenate([mu.weights, -nu.weights])
    order = np.argsort(xs, kind="stable")
    xs = xs[order]
    cdf_diff = np.cumsum(deltas[order])
    gaps = np.diff(xs)
    return float(np.sum(np.abs(cdf_diff[:-1]) * gaps))


def _int_masses(weights: np.ndarray) -> np.ndarray:
    """Round masses to integer units summing exactly to MASS_SCALE."""
    units = np.rint(weights * MASS_SCALE).astype(np.int64)
    units = np.maximum(units, 0)
    residue = MASS_SCALE - int(units.sum())
    if residue != 0:
        k = int(np.argmax(units))
        units[k] += residue
        if units[k] < 0:
            raise ValueError("weights too degenerate to scale")
    return units


def _w1_flow(mu: DiscreteMeasure, nu: DiscreteMeasure, metric: Metric) -> float:
    """Exact transport cost by successive shortest paths with potentials.

    Dual feasibility c_ij - u_i - v_j >= 0 is maintained throughout; arcs
    carrying flow stay at zero reduced cost, so Dijkstra runs on nonnegative
    residual costs.  Integer costs/masses make every comparison exact.
    """
    cost = metric.pairwise(mu.atoms, nu.atoms)
    ci = np.rint(cost * COST_SCALE).astype(np.int64)
    n, m = ci.shape
    a = _int_masses(mu.weights)
    b = _int_masses(nu.weights)
    rem_a = a.copy()
    rem_b = b.copy()
    flow = np.zeros((n, m), dtype=np.int64)
    u = np.zeros(n, dtype=np.int64)
    v = np.zeros(m, dtype=np.int64)

    # warm start: co-located atoms transport at zero cost
    pos = {}
    for j in range(m):
        pos.setdefault(nu.atoms[j].tobytes(), []).append(j)
    for i in range(n):
        for j in pos.get(mu.atoms[i].tobytes(), ()):
            amt = min(rem_a[i], rem_b[j])
            if amt > 0:
                flow[i, j] += amt
                rem_a[i] -= amt
                rem_b[j] -= amt

    INF = np.int64(2**62)
    while rem_a.sum() > 0:
        dist_a = np.where(rem_a > 0, np.int64(0), INF)
        dist_b = np.full(m, INF, dtype=np.int64)
        done_a = np.zeros(n, dtype=bool)
        done_b = np.zeros(m, dtype=bool)
        parent_b = np.full(m, -1, dtype=np.int64)  # A-node that relaxed j
        parent_a = np.full(n, -1, dtype=np.int64)  # B-node that relaxed i
        target = -1
        while True:
            da = np.where(done_a, INF, dist_a)
            db = np.where(done_b, INF, dist_b)
            ia = int(np.argmin(da))
            ib = int(np.argmin(db))
            if min(da[ia], db[ib]) >= INF:
                raise RuntimeError("min-cost flow: residual graph disconnected")
            if da[ia] <= db[ib]:
                i = ia
                done_a[i] = True
                cand = dist_a[i] + ci[i, :] - u[i] - v
                upd = ~done_b & (cand < dist_b)
                dist_b[upd] = cand[upd]
                parent_b[upd] = i
            else:
                j = ib
                done_b[j] = True
                if rem_b[j] > 0:
                    target = j
                    break
                upd = ~done_a & (flow[:, j] > 0) & (dist_b[j] < dist_a)
                dist_a[upd] = dist_b[j]
                parent_a[upd] = j
        dist_t = dist_b[target]
        u += dist_t - np.minimum(dist_a, dist_t)
        v += np.minimum(dist_b, dist_t) - dist_t

        # trace the augmenting path back to a source
        fwd: list[tuple[int, int]] = []
        rev: list[tuple[int, int]] = []
        j = target
        while True:
            i = int(parent_b[j])
            fwd.append((i, j))
            j_prev = int(parent_a[i])
            if j_prev < 0:
                source = i
                break
            rev.append((i, j_prev))
            j = j_prev
        amt = min(rem_a[source], rem_b[target])
        for i, j in rev:
            amt = min(amt, flow[i, j])
        for i, j in fwd:
            flow[i, j] += amt
        for i, j in rev:
            flow[i, j] -= amt
        rem_a[source] -= amt
        rem_b[target] -= amt

    ii, jj = np.nonzero(flow)
    total = sum(int(flow[i, j]) * int(ci[i, j]) for i, j in zip(ii, jj))
    return total / (COST_SCALE * MASS_SCALE)


def wasserstein1(mu: DiscreteMeasure, nu: DiscreteMeasure,
                 metric: Metric = EUCLIDEAN, method: str = "auto",
                 pair_cap: int = DEFAULT_PAIR_CAP) -> float:
    """Wasserstein-1 (Monge-Kantorovich) distance between two measures.

    1-d instances use the CDF integral; higher dimensions run the exact
    min-cost flow.  ``method`` can force ``cdf`` or ``flow``.
    """
    if mu.dim != nu.dim:
        raise ValueError("dimension mismatch between measures")
    _check_normalized(mu, "mu")
    _check_normalized(nu, "nu")
    if len(mu) * len(nu) > pair_cap:
        raise WassersteinCapError(
            f"support product {len(mu)}x{len(nu)} exceeds cap {pair_cap}; "
            "bin_to_grid or subsample the measures first")
    if method == "cdf" or (method == "auto" and mu.dim == 1):
        # euclidean and max_coord coincide on the line
        if mu.dim != 1:
            raise ValueError("cdf method requires 1-d measures")
        return _w1_cdf_1d(mu, nu)
    if method not in ("auto", "flow"):
        raise ValueError(f"unknown method {method!r}")
    return _w1_flow(mu, nu, metric)


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------

def measure_to_csv(m: DiscreteMeasure) -> str:
    """Columns x0..x{D-1},weight; weights at 17 significant digits."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{d}" for d in range(m.dim)] + ["weight"])
    for atom, w in zip(m.atoms, m.weights):
        writer.writerow([f"{v:.17g}" for v in atom] + [f"{w:.17g}"])
    return buf.getvalue()


def measure_from_csv(text: str) -> DiscreteMeasure:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if not header or header[-1] != "weight":
        raise ValueError("not a measure CSV (expected trailing weight column)")
    dim = len(header) - 1
    atoms, weights = [], []
    for row in reader:
        if not row:
            continue
        atoms.append([float(v) for v in row[:dim]])
        weights.append(float(row[dim]))
    return DiscreteMeasure(np.asarray(atoms, dtype=float).reshape(len(atoms), dim),
                           np.asarray(weights, dtype=float))
