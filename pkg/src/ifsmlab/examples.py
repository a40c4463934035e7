"""Ready-made models used across tests, docs and the CLI.

The parameter atom of an affine family is chosen so that the map depends on
it in the simplest possible way (the offset, or the target corner), which
makes the parameter-sensitivity constant of the family exactly computable.
"""

from __future__ import annotations

import numpy as np

from . import expr
from .metric import EUCLIDEAN, MAX_COORD, Metric
from .model import IfsmModel, MapFamily, ParamSpace, WeightFamily, validate_model

__all__ = [
    "single_map_model",
    "cantor_model",
    "sierpinski_model",
    "cantor_mixture_model",
    "cantor_thermo_model",
    "gifs_skew_model",
    "h4_violating_model",
]


def _affine_model(box, atoms, matrices, offsets, weights, metric=EUCLIDEAN,
                  param_metric=EUCLIDEAN) -> IfsmModel:
    model = IfsmModel(
        box=np.asarray(box, dtype=float),
        metric=metric,
        params=ParamSpace(np.asarray(atoms, dtype=float), param_metric),
        maps=MapFamily(kind="affine",
                       matrices=np.asarray(matrices, dtype=float),
                       offsets=np.asarray(offsets, dtype=float)),
        weights=weights,
    )
    validate_model(model)
    return model


def single_map_model(ratio: float = 0.5) -> IfsmModel:
    """One contraction x -> ratio * x on [0, 1]; fixed point at 0."""
    return _affine_model(
        box=[[0.0, 1.0]],
        atoms=[[0.0]],
        matrices=[[[ratio]]],
        offsets=[[0.0]],
        weights=WeightFamily(kind="constant", p=np.array([1.0])),
    )


def _cantor_maps():
    atoms = [[0.0], [2.0 / 3.0]]
    matrices = [[[1.0 / 3.0]], [[1.0 / 3.0]]]
    offsets = [[0.0], [2.0 / 3.0]]
    return atoms, matrices, offsets


def cantor_model(p=(0.5, 0.5)) -> IfsmModel:
    """Middle-third pair x/3 and x/3 + 2/3 with constant weights."""
    atoms, matrices, offsets = _cantor_maps()
    return _affine_model(
        box=[[0.0, 1.0]], atoms=atoms, matrices=matrices, offsets=offsets,
        weights=WeightFamily(kind="constant", p=np.asarray(p, dtype=float)),
    )


def sierpinski_model() -> IfsmModel:
    """Three half-ratio maps toward the corners (0,0), (1,0), (1/2,1)."""
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]])
    eye = 0.5 * np.eye(2)
    return _affine_model(
        box=[[0.0, 1.0], [0.0, 1.0]],
        atoms=corners,
        matrices=[eye, eye, eye],
        offsets=0.5 * corners,
        weights=WeightFamily(kind="constant", p=np.full(3, 1.0 / 3.0)),
    )


def cantor_mixture_model(slope: float = 0.5, nu1=(0.8, 0.2), nu2=(0.2, 0.8)) -> IfsmModel:
    """Cantor maps with weights (1 - h(x)) nu1 + h(x) nu2, h(x) = slope * x."""
    atoms, matrices, offsets = _cantor_maps()
    h = expr.op("mul", expr.const(slope), expr.var("x0"))
    return _affine_model(
        box=[[0.0, 1.0]], atoms=atoms, matrices=matrices, offsets=offsets,
        weights=WeightFamily(kind="mixture", h=h, lip_h=float(slope),
                             nu1=np.asarray(nu1, dtype=float),
                             nu2=np.asarray(nu2, dtype=float)),
    )


def cantor_thermo_model(scale: float = 0.5, base=(0.5, 0.5)) -> IfsmModel:
    """Cantor maps with weights proportional to base_j * exp(scale * map_j(x))."""
    atoms, matrices, offsets = _cantor_maps()
    potential = expr.op("mul", expr.const(scale), expr.var("x0"))
    return _affine_model(
        box=[[0.0, 1.0]], atoms=atoms, matrices=matrices, offsets=offsets,
        weights=WeightFamily(kind="thermodynamic", potential=potential,
                             base=np.asarray(base, dtype=float),
                             lip_potential=abs(float(scale))),
    )


def gifs_skew_model(coeffs=((0.30, 0.30), (0.20, 0.20), (0.10, 0.40)),
                    offsets=(0.0, 0.55, 0.3), p=None) -> IfsmModel:
    """Degree-m skew system on [0,1]^m: (z1..zm) -> (z2..zm, phi(z)).

    One step is not a contraction (the shift coordinates move at ratio 1);
    m composed steps contract at the largest coefficient sum.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    offsets = np.asarray(offsets, dtype=float).ravel()
    k, degree = coeffs.shape
    if np.any(coeffs < 0) or np.any(offsets < 0) or \
            np.any(coeffs.sum(axis=1) + offsets > 1.0):
        raise ValueError("need nonnegative coefficients with row sum + offset <= 1")
    if p is None:
        p = np.full(k, 1.0 / k)
    model = IfsmModel(
        box=np.array([[0.0, 1.0]] * degree),
        metric=MAX_COORD,
        params=ParamSpace(np.arange(k, dtype=float)[:, None], EUCLIDEAN),
        maps=MapFamily(kind="gifs_skew", degree=degree, coeffs=coeffs,
                       offsets=offsets),
        weights=WeightFamily(kind="constant", p=np.asarray(p, dtype=float)),
    )
    validate_model(model)
    return model


def h4_violating_model() -> IfsmModel:
    """Cantor maps but all weight on the first map: one atom never fires."""
    return cantor_model(p=(1.0, 0.0))
