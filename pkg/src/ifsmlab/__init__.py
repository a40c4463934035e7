"""Numerical laboratory for iterated function systems with place-dependent
measure families: attractors, invariant measures, chaos-game trajectories,
contraction-hypothesis verification and stochastic-stability experiments."""

__version__ = "0.1.0"

from .metric import (EUCLIDEAN, MAX_COORD, Metric, PointCloud, distance,
                     estimate_lipschitz, grid_cloud, hausdorff)
from .measure import (DiscreteMeasure, bin_to_grid, normalize, support,
                      wasserstein1)
from .model import (ComposedMeasure, IfsmModel, MapFamily, ModelError,
                    ParamSpace, WeightFamily, compose_map, composed_measure,
                    eval_map, load_model, save_model, weights_at)

__all__ = [
    "__version__",
    "EUCLIDEAN", "MAX_COORD", "Metric", "PointCloud", "distance",
    "estimate_lipschitz", "grid_cloud", "hausdorff",
    "DiscreteMeasure", "bin_to_grid", "normalize", "support", "wasserstein1",
    "ComposedMeasure", "IfsmModel", "MapFamily", "ModelError", "ParamSpace",
    "WeightFamily", "compose_map", "composed_measure", "eval_map",
    "load_model", "save_model", "weights_at",
]
