"""Measure-level dynamics: transfer averaging, pushforward, invariant measure.

The transfer side averages a sampled function over one random step; the dual
pushforward moves a discrete measure through all maps with place-dependent
weights and re-bins it on a fixed grid to control support growth.  The
invariant-measure solver iterates the pushforward to its Wasserstein fixed
point and reports, next to the empirical deltas, the theoretical residual
floor cell_diam / (2 (1 - c)) induced by binning at contraction budget c.

Off-grid function values use nearest-grid-point interpolation: unlike linear
interpolation it cannot overshoot, so a declared Lipschitz budget survives up
to one cell diameter and contraction checks stay honest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .measure import DiscreteMeasure, bin_points, cell_diameter, wasserstein1
from .metric import PointCloud, grid_cloud
from .model import IfsmModel, composed_measure, eval_map_batch, weight_matrix

__all__ = [
    "SampledFunction",
    "transfer_apply",
    "transfer_apply_M",
    "markov_push",
    "invariant_measure",
    "uniform_grid_measure",
    "MeasureIterationLog",
]


@dataclass(frozen=True)
class SampledFunction:
    """Real function known at grid points, evaluated by nearest neighbor."""

    grid: PointCloud
    values: np.ndarray
    lipschitz_budget: float | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.shape[0] != len(self.grid):
            raise ValueError("one value per grid point required")
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite function value")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_tree", cKDTree(self.grid.points))

    @staticmethod
    def from_callable(fn, grid: PointCloud, lipschitz_budget: float | None = None
                      ) -> "SampledFunction":
        vals = np.asarray([fn(p) for p in grid.points], dtype=float)
        return SampledFunction(grid, vals, lipschitz_budget)

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        _, idx = self._tree.query(pts)
        return self.values[idx]


def transfer_apply(model: IfsmModel, f: SampledFunction, x) -> float:
    """Average of f over one random step from ``x``."""
    x = np.asarray(x, dtype=float).ravel()
    w = weight_matrix(model, x[None, :])[0]
    images = np.stack([eval_map_batch(model, j, x[None, :])[0]
                       for j in range(model.n_maps)])
    return float(np.dot(w, f(images)))


def transfer_apply_M(model: IfsmModel, f: SampledFunction, x, depth: int,
                     prune_floor: float = 0.0) -> float:
    """Average of f over ``depth`` chained random steps from ``x``.

    Expectation under the composed tuple measure; equals depth-fold nesting
    of one-step averaging up to interpolation error.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    cm = composed_measure(model, depth, x, prune_floor=prune_floor)
    return float(np.dot(cm.weights, f(cm.endpoints)))


def markov_push(model: IfsmModel, mu: DiscreteMeasure, resolution: int) -> DiscreteMeasure:
    """One pushforward of ``mu`` through the weighted map family, re-binned.

    The image measure places mass mu_i * w_j(x_i) at map_j(x_i); binning at
    ``resolution`` keeps the support finite.  Mass is conserved.
    """
    w = weight_matrix(model, mu.atoms)                    # (N, K)
    pieces_pts = []
    pieces_mass = []
    for j in range(model.n_maps):
        pieces_pts.append(eval_map_batch(model, j, mu.atoms))
        pieces_mass.append(mu.weights * w[:, j])
    atoms = np.concatenate(pieces_pts, axis=0)
    mass = np.concatenate(pieces_mass)
    centers, sums = bin_points(atoms, mass, resolution, model.box)
    keep = sums > 0.0
    return DiscreteMeasure(centers[keep], sums[keep])


@dataclass
class MeasureIterationLog:
    """Wasserstein deltas of the invariant-measure iteration."""

    deltas: list[float] = field(default_factory=list)
    ratios: list[float] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    tol: float = 0.0
    cell_diameter: float = 0.0
    residual_bound: float | None = None

    @property
    def observed_ratio(self) -> float | None:
        if not self.ratios:
            return None
        return float(np.median(self.ratios[-5:]))

    def to_dict(self) -> dict:
        return {
            "deltas": self.deltas,
            "ratios": self.ratios,
            "observed_ratio": self.observed_ratio,
            "converged": self.converged,
            "iterations": self.iterations,
            "tol": self.tol,
            "cell_diameter": self.cell_diameter,
            "residual_bound": self.residual_bound,
        }


def uniform_grid_measure(model: IfsmModel, resolution: int) -> DiscreteMeasure:
    """Uniform measure on the resolution grid: the default starting point."""
    cloud = grid_cloud(model.box, resolution)
    n = len(cloud)
    return DiscreteMeasure(cloud.points, np.full(n, 1.0 / n))


def invariant_measure(model: IfsmModel, mu0: DiscreteMeasure | None = None,
                      resolution: int = 128, tol: float = 1e-4,
                      max_iter: int = 200, contraction: float | None = None
                      ) -> tuple[DiscreteMeasure, MeasureIterationLog]:
    """Iterate the pushforward until successive measures are tol-close in W1.

    ``contraction`` is the operator's Lipschitz budget; when provided, the
    log carries the binning residual floor cell_diam / (2 (1 - c)) so callers
    can separate iteration error from discretization error.  Non-convergence
    sets the log flag instead of raising.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    cell = cell_diameter(model.box, resolution, model.metric)
    log = MeasureIterationLog(tol=tol, cell_diameter=cell)
    if contraction is not None and 0.0 < contraction < 1.0:
        log.residual_bound = cell / (2.0 * (1.0 - contraction))
    current = uniform_grid_measure(model, resolution) if mu0 is None else mu0
    for k in range(max_iter):
        nxt = markov_push(model, current, resolution)
        delta = wasserstein1(nxt, current, model.metric)
        log.deltas.append(delta)
        if len(log.deltas) >= 2 and log.deltas[-2] > 0:
            log.ratios.append(delta / log.deltas[-2])
        log.iterations = k + 1
        current = nxt
        if delta < tol:
            log.converged = True
            break
    return current, log
