"""Set-level dynamics: the fractal operator, attractor iteration, collage bound.

One operator step maps a point cloud to the union of all map images, snapped
to a uniform grid to keep the cloud finite.  The snap error (half a cell
diameter) enters every reported bound explicitly.  Weights play no role here;
this is the purely topological side of the system.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .measure import cell_center_points, cell_diameter, grid_assign
from .metric import PointCloud, hausdorff
from .model import IfsmModel, eval_map_batch

__all__ = ["fractal_step", "attractor", "collage_report", "SetIterationLog"]


@dataclass
class SetIterationLog:
    """Per-step Hausdorff deltas of the attractor iteration."""

    deltas: list[float] = field(default_factory=list)
    ratios: list[float] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    tol: float = 0.0
    snap_error: float = 0.0

    @property
    def observed_ratio(self) -> float | None:
        """Median of the last five step ratios; resists transient noise."""
        if not self.ratios:
            return None
        tail = self.ratios[-5:]
        return float(np.median(tail))

    def to_dict(self) -> dict:
        return {
            "deltas": self.deltas,
            "ratios": self.ratios,
            "observed_ratio": self.observed_ratio,
            "converged": self.converged,
            "iterations": self.iterations,
            "tol": self.tol,
            "snap_error": self.snap_error,
        }


def fractal_step(model: IfsmModel, cloud: PointCloud, resolution: int) -> PointCloud:
    """Union of all map images of the cloud, deduplicated on the snap grid.

    Returns the occupied cell centers in lexicographic cell order, which
    makes the step deterministic regardless of input order.
    """
    images = np.concatenate([eval_map_batch(model, j, cloud.points)
                             for j in range(model.n_maps)], axis=0)
    cells = np.unique(grid_assign(images, model.box, resolution))
    return PointCloud(cell_center_points(cells, model.box, resolution), model.box)


def attractor(model: IfsmModel, b0: PointCloud, resolution: int,
              tol: float | None = None, max_iter: int = 100
              ) -> tuple[PointCloud, SetIterationLog]:
    """Iterate the fractal operator until successive clouds are tol-close.

    Default tol is twice the grid cell diameter; below that, Hausdorff deltas
    are dominated by snapping.  Non-convergence is reported via the log flag,
    not an exception: it signals a non-contractive model.
    """
    cell = cell_diameter(model.box, resolution, model.metric)
    snap = 0.5 * cell
    if tol is None:
        tol = 2.0 * cell
    if tol <= 0:
        raise ValueError("tol must be positive")
    log = SetIterationLog(tol=tol, snap_error=snap)
    current = b0
    for k in range(max_iter):
        nxt = fractal_step(model, current, resolution)
        delta = hausdorff(nxt, current, model.metric)
        log.deltas.append(delta)
        if len(log.deltas) >= 2 and log.deltas[-2] > 0:
            log.ratios.append(delta / log.deltas[-2])
        log.iterations = k + 1
        current = nxt
        if delta < tol:
            log.converged = True
            break
    return current, log


def collage_report(model: IfsmModel, cloud: PointCloud, contraction: float,
                   resolution: int, attractor_cloud: PointCloud | None = None) -> dict:
    """One-step displacement and the induced distance bound to the attractor.

    Reports h(F(B), B) and the bound h(B, A) <= h(F(B), B) / (1 - s).  When
    the computed attractor is supplied, the true distance and the bound check
    (with the snap error added) are included.
    """
    if not 0.0 < contraction < 1.0:
        raise ValueError("contraction constant must lie in (0, 1)")
    stepped = fractal_step(model, cloud, resolution)
    displacement = hausdorff(stepped, cloud, model.metric)
    snap = 0.5 * cell_diameter(model.box, resolution, model.metric)
    report = {
        "displacement": displacement,
        "bound": displacement / (1.0 - contraction),
        "contraction": contraction,
        "snap_error": snap,
    }
    if attractor_cloud is not None:
        dist = hausdorff(cloud, attractor_cloud, model.metric)
        slack = 2.0 * snap / (1.0 - contraction)
        report["attractor_distance"] = dist
        report["bound_holds"] = bool(dist <= report["bound"] + slack)
    return report
