"""Point-cloud primitives: metrics, Hausdorff distance, Lipschitz estimation.

Points are 1-d float arrays of a fixed dimension; finite sets of points are
held in :class:`PointCloud`.  Two ground metrics are supported: the Euclidean
metric and the maximum-coordinate (Chebyshev) metric used by skew-product
systems on product spaces.

All operations are pure functions over immutable inputs and are deterministic
for a fixed input.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Metric",
    "EUCLIDEAN",
    "MAX_COORD",
    "SUM_COORD",
    "PointCloud",
    "distance",
    "hausdorff",
    "directed_distances",
    "estimate_lipschitz",
    "grid_cloud",
    "lattice_cloud",
    "cloud_to_csv",
    "cloud_from_csv",
]

# Brute-force pairwise blocks are chunked to at most this many entries.
_CHUNK_ENTRIES = 1 << 22

# The uniform-grid spatial index kicks in above this pair count.
_GRID_INDEX_THRESHOLD = 10**6


@dataclass(frozen=True)
class Metric:
    """Ground metric on R^D.

    ``kind`` is ``euclidean``, ``max_coord`` (Chebyshev, the product metric
    of skew systems) or ``sum_coord`` (taxicab, the product metric on tuple
    spaces of 1-d parameters).
    """

    kind: str = "euclidean"

    def __post_init__(self):
        if self.kind not in ("euclidean", "max_coord", "sum_coord"):
            raise ValueError(f"unknown metric kind: {self.kind!r}")

    def pairwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Distance matrix between the rows of ``a`` (n,D) and ``b`` (m,D)."""
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.atleast_2d(np.asarray(b, dtype=float))
        diff = a[:, None, :] - b[None, :, :]
        if self.kind == "euclidean":
            return np.sqrt(np.sum(diff * diff, axis=-1))
        if self.kind == "sum_coord":
            return np.sum(np.abs(diff), axis=-1)
        return np.max(np.abs(diff), axis=-1)

    def rowwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Distances between corresponding rows of two (n,D) arrays."""
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.atleast_2d(np.asarray(b, dtype=float))
        diff = a - b
        if self.kind == "euclidean":
            return np.sqrt(np.sum(diff * diff, axis=-1))
        if self.kind == "sum_coord":
            return np.sum(np.abs(diff), axis=-1)
        return np.max(np.abs(diff), axis=-1)


EUCLIDEAN = Metric("euclidean")
MAX_COORD = Metric("max_coord")
SUM_COORD = Metric("sum_coord")


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise ValueError("points must form an (n, D) array")
    return pts


@dataclass(frozen=True)
class PointCloud:
    """Finite sample of a compact subset of R^D.

    ``bounding_box`` has shape (D, 2) with per-axis [lo, hi].  When the cloud
    was built as a uniform grid, ``grid_shape`` records the cells per axis so
    consumers (e.g. the Lipschitz estimator) can enumerate adjacent pairs.
    """

    points: np.ndarray
    bounding_box: np.ndarray
    grid_shape: tuple[int, ...] | None = field(default=None)

    def __post_init__(self):
        pts = _as_points(self.points)
        box = np.asarray(self.bounding_box, dtype=float)
        if box.ndim != 2 or box.shape[1] != 2:
            raise ValueError("bounding_box must have shape (D, 2)")
        if pts.shape[0] == 0:
            raise ValueError("point cloud must be nonempty")
        if pts.shape[1] != box.shape[0]:
            raise ValueError("point/bounding-box dimension mismatch")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        if np.any(box[:, 0] > box[:, 1]):
            raise ValueError("bounding box has lo > hi")
        if np.any(pts < box[:, 0]) or np.any(pts > box[:, 1]):
            raise ValueError("point outside bounding box")
        pts.setflags(write=False)
        box.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "bounding_box", box)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    @staticmethod
    def from_points(points, bounding_box=None) -> "PointCloud":
        """Cloud with the given box, or the tight box of the points."""
        pts = _as_points(points)
        if bounding_box is None:
            bounding_box = np.stack([pts.min(axis=0), pts.max(axis=0)], axis=1)
        return PointCloud(pts, np.asarray(bounding_box, dtype=float))


def grid_cloud(bounding_box, cells_per_axis: int) -> PointCloud:
    """Uniform grid of cell centers covering the box; declared as a grid."""
    box = np.asarray(bounding_box, dtype=float)
    if box.ndim != 2 or box.shape[1] != 2:
        raise ValueError("bounding_box must have shape (D, 2)")
    if cells_per_axis < 1:
        raise ValueError("cells_per_axis must be >= 1")
    dim = box.shape[0]
    axes = []
    for d in range(dim):
        lo, hi = box[d]
        step = (hi - lo) / cells_per_axis
        axes.append(lo + (np.arange(cells_per_axis) + 0.5) * step)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return PointCloud(pts, box, grid_shape=(cells_per_axis,) * dim)


def lattice_cloud(bounding_box, points_per_axis: int) -> PointCloud:
    """Uniform lattice including the box boundary; declared as a grid."""
    box = np.asarray(bounding_box, dtype=float)
    if points_per_axis < 2:
        raise ValueError("points_per_axis must be >= 2")
    axes = [np.linspace(box[d, 0], box[d, 1], points_per_axis)
            for d in range(box.shape[0])]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return PointCloud(pts, box, grid_shape=(points_per_axis,) * box.shape[0])


def distance(a, b, metric: Metric = EUCLIDEAN) -> float:
    """Distance between two points under ``metric``."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError("dimension mismatch between points")
    return float(metric.rowwise(a[None, :], b[None, :])[0])


def _nn_bruteforce(queries: np.ndarray, targets: np.ndarray, metric: Metric) -> np.ndarray:
    n = queries.shape[0]
    out = np.empty(n)
    rows = max(1, _CHUNK_ENTRIES // max(1, targets.shape[0]))
    for start in range(0, n, rows):
        block = metric.pairwise(queries[start : start + rows], targets)
        out[start : start + rows] = block.min(axis=1)
    return out


class _UniformGridIndex:
    """Exact nearest-neighbor queries via a uniform bucket grid.

    Buckets are cubes of a common edge length; a query expands Chebyshev
    rings of buckets until no unvisited bucket can contain a closer point.
    Distances are computed with the same formula as the brute-force path, so
    both paths return identical values.
    """

    def __init__(self, targets: np.ndarray, metric: Metric):
        self.targets = targets
        self.metric = metric
        lo = targets.min(axis=0)
        hi = targets.max(axis=0)
        extent = float(np.max(hi - lo))
        m, dim = targets.shape
        cells = max(1, int(round(m ** (1.0 / dim))))
        self.edge = extent / cells if extent > 0 else 1.0
        self.lo = lo
        coords = np.floor((targets - lo) / self.edge).astype(np.int64)
        self.buckets: dict[tuple, np.ndarray] = {}
        order = np.lexsort(coords.T[::-1])
        sorted_coords = coords[order]
        change = np.any(np.diff(sorted_coords, axis=0) != 0, axis=1)
        starts = np.concatenate([[0], np.nonzero(change)[0] + 1, [m]])
        for k in range(len(starts) - 1):
            idx = order[starts[k] : starts[k + 1]]
            self.buckets[tuple(sorted_coords[starts[k]])] = idx
        self.max_ring = int(np.max(coords)) + 2 if m else 0

    def _ring_cells(self, center: np.ndarray, r: int):
        dim = center.shape[0]
        if r == 0:
            yield tuple(center)
            return
        # cells at Chebyshev distance exactly r from the center
        rng = range(-r, r + 1)
        if dim == 1:
            yield (int(center[0] - r),)
            yield (int(center[0] + r),)
            return
        if dim == 2:
            cx, cy = int(center[0]), int(center[1])
            for dx in rng:
                yield (cx + dx, cy - r)
                yield (cx + dx, cy + r)
            for dy in range(-r + 1, r):
                yield (cx - r, cy + dy)
                yield (cx + r, cy + dy)
            return
        seen = set()
        # generic dimension: enumerate the Chebyshev shell recursively
        def rec(prefix, hit):
            d = len(prefix)
            if d == dim:
                if hit:
                    cell = tuple(int(center[i]) + prefix[i] for i in range(dim))
                    if cell not in seen:
                        seen.add(cell)
                        yield cell
                return
            for off in rng:
                yield from rec(prefix + (off,), hit or abs(off) == r)

        yield from rec(tuple(), False)

    def query(self, point: np.ndarray) -> float:
        center = np.floor((point - self.lo) / self.edge).astype(np.int64)
        best = np.inf
        r = 0
        while True:
            if r > 0 and (r - 1) * self.edge > best:
                break
            cand: list[np.ndarray] = []
            for cell in self._ring_cells(center, r):
                idx = self.buckets.get(cell)
                if idx is not None:
                    cand.append(idx)
            if cand:
                idx = np.concatenate(cand)
                d = self.metric.pairwise(point[None, :], self.targets[idx])[0]
                m = float(d.min())
                if m < best:
                    best = m
            if best == 0.0:
                break
            r += 1
            if r > self.max_ring and np.isfinite(best):
                break
        return best


def _nn_grid(queries: np.ndarray, targets: np.ndarray, metric: Metric) -> np.ndarray:
    if targets.shape[0] < 256:
        return _nn_bruteforce(queries, targets, metric)
    index = _UniformGridIndex(targets, metric)
    return np.array([index.query(q) for q in queries])


def directed_distances(points, cloud: PointCloud, metric: Metric = EUCLIDEAN,
                       method: str = "auto") -> np.ndarray:
    """Per-point distance to the nearest member of ``cloud``."""
    pts = _as_points(points)
    if pts.shape[1] != cloud.dim:
        raise ValueError("dimension mismatch")
    n_pairs = pts.shape[0] * len(cloud)
    if method == "bruteforce" or (method == "auto" and n_pairs <= _GRID_INDEX_THRESHOLD):
        return _nn_bruteforce(pts, cloud.points, metric)
    if method not in ("auto", "grid"):
        raise ValueError(f"unknown method {method!r}")
    return _nn_grid(pts, cloud.points, metric)


def hausdorff(a: PointCloud, b: PointCloud, metric: Metric = EUCLIDEAN,
              method: str = "auto") -> float:
    """Hausdorff distance  max(sup_a d(a,B), sup_b d(b,A)).

    ``method`` selects the nearest-neighbor backend: brute force below 10^6
    point pairs, a uniform-grid spatial index above (``auto``), or either one
    forced.  The two backends agree exactly.
    """
    if a.dim != b.dim:
        raise ValueError("dimension mismatch between clouds")
    d_ab = directed_distances(a.points, b, metric, method=method).max()
    d_ba = directed_distances(b.points, a, metric, method=method).max()
    return float(max(d_ab, d_ba))


def _grid_adjacent_pairs(shape: tuple[int, ...]) -> np.ndarray:
    """Index pairs of grid neighbors along each axis (C-order flattening)."""
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    pairs = []
    for axis in range(len(shape)):
        a = np.take(idx, range(0, shape[axis] - 1), axis=axis).ravel()
        b = np.take(idx, range(1, shape[axis]), axis=axis).ravel()
        pairs.append(np.stack([a, b], axis=1))
    if not pairs:
        return np.empty((0, 2), dtype=int)
    return np.concatenate(pairs, axis=0)


def estimate_lipschitz(f, domain: PointCloud, metric: Metric = EUCLIDEAN,
                       pairs: int = 1000, seed: int = 0) -> float:
    """Sampled lower bound for the Lipschitz constant of ``f`` on ``domain``.

    Returns max d(f(x), f(y)) / d(x, y) over sampled distinct pairs.  When
    the domain declares a grid shape, all axis-adjacent grid pairs are added
    to the seeded random sample (adjacent pairs capture local slope, random
    pairs global slope).  The result is an estimate from below, never a
    certificate.
    """
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    pts = domain.points
    n = pts.shape[0]
    if n < 2:
        raise ValueError("domain needs at least 2 points")
    total = n * (n - 1) // 2
    if total <= pairs:
        ii, jj = np.triu_indices(n, k=1)
        pair_idx = np.stack([ii, jj], axis=1)
    else:
        rng = np.random.Generator(np.random.PCG64(seed))
        ii = rng.integers(0, n, size=pairs)
        jj = rng.integers(0, n - 1, size=pairs)
        jj = np.where(jj >= ii, jj + 1, jj)  # j != i, uniform over the rest
        pair_idx = np.stack([ii, jj], axis=1)
    if domain.grid_shape is not None:
        pair_idx = np.concatenate([pair_idx, _grid_adjacent_pairs(domain.grid_shape)], axis=0)

    images = np.stack([np.asarray(f(p), dtype=float).ravel() for p in pts])
    dx = metric.rowwise(pts[pair_idx[:, 0]], pts[pair_idx[:, 1]])
    df = metric.rowwise(images[pair_idx[:, 0]], images[pair_idx[:, 1]])
    mask = dx > 0
    if not np.any(mask):
        raise ValueError("domain has fewer than 2 distinct points")
    return float(np.max(df[mask] / dx[mask]))


def cloud_to_csv(cloud: PointCloud) -> str:
    """CSV serialization: header x0..x{D-1}, one row per point, 17 digits."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{d}" for d in range(cloud.dim)])
    for row in cloud.points:
        writer.writerow([f"{v:.17g}" for v in row])
    return buf.getvalue()


def cloud_from_csv(text: str, bounding_box=None) -> PointCloud:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if not header or not header[0].startswith("x"):
        raise ValueError("not a point-cloud CSV (expected x0.. header)")
    dim = len(header)
    rows = [[float(v) for v in row] for row in reader if row]
    pts = np.asarray(rows, dtype=float).reshape(len(rows), dim)
    return PointCloud.from_points(pts, bounding_box)
