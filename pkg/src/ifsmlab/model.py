"""The system model: parameter atoms, map family, place-dependent weights.

A model bundles a box domain in R^D, a finite set of parameter atoms (a
discretized compact parameter space), a family of self-maps indexed by the
atoms, and a weight family assigning to every state a probability vector
over the atoms.  Continuous parameter intervals are discretized to a uniform
atom grid at load time; every downstream constant refers to the discretized
space.

Map kinds:
  affine      per-atom matrix/offset pairs
  gifs_skew   degree-m skew shift (z1..zm) -> (z2..zm, phi(z)) with affine phi
  custom      one expression tree per output coordinate

Weight kinds:
  constant        fixed probability vector
  thermodynamic   w_j(x) proportional to base_j * exp(potential(map_j(x))),
                  normalized numerically at every x
  mixture         (1 - h(x)) * nu1 + h(x) * nu2
  table           arbitrary nonnegative expression w(x, atom), normalized

Models are immutable after load; all evaluation operations are pure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import expr
from .measure import DiscreteMeasure
from .metric import Metric, _as_points

__all__ = [
    "ModelError",
    "ParamSpace",
    "MapFamily",
    "WeightFamily",
    "IfsmModel",
    "ComposedMeasure",
    "eval_map",
    "eval_map_batch",
    "weights_at",
    "weight_matrix",
    "compose_map",
    "apply_tuples",
    "composed_measure",
    "thermo_normalizer_range",
    "model_to_dict",
    "model_from_dict",
    "load_model",
    "save_model",
    "validate_model",
]

_ESCAPE_TOL = 1e-9
DEFAULT_TUPLE_CAP = 250_000


class ModelError(ValueError):
    """Model fails a structural or self-map validity requirement."""


@dataclass(frozen=True)
class ParamSpace:
    """Finite set of parameter atoms with their own metric."""

    atoms: np.ndarray           # (K, D_param)
    metric: Metric
    diameter: float = field(default=0.0)

    def __post_init__(self):
        atoms = _as_points(self.atoms)
        if not np.all(np.isfinite(atoms)):
            raise ModelError("non-finite parameter atom")
        uniq = np.unique(atoms, axis=0)
        if uniq.shape[0] != atoms.shape[0]:
            raise ModelError("parameter atoms must be distinct")
        atoms.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        diam = float(self.metric.pairwise(atoms, atoms).max()) if len(atoms) > 1 else 0.0
        object.__setattr__(self, "diameter", diam)

    def __len__(self) -> int:
        return self.atoms.shape[0]


@dataclass(frozen=True)
class MapFamily:
    kind: str
    matrices: np.ndarray | None = None   # affine: (K, D, D)
    offsets: np.ndarray | None = None    # affine: (K, D); gifs_skew: (K,)
    degree: int | None = None            # gifs_skew
    coeffs: np.ndarray | None = None     # gifs_skew: (K, m)
    exprs: tuple | None = None           # custom: one tree per coordinate


@dataclass(frozen=True)
class WeightFamily:
    kind: str
    p: np.ndarray | None = None          # constant
    base: np.ndarray | None = None       # thermodynamic
    potential: dict | None = None        # thermodynamic
    lip_potential: float | None = None   # thermodynamic (declared)
    h: dict | None = None                # mixture
    lip_h: float | None = None           # mixture (declared)
    nu1: np.ndarray | None = None        # mixture
    nu2: np.ndarray | None = None        # mixture
    table: dict | None = None            # table


@dataclass(frozen=True)
class IfsmModel:
    box: np.ndarray                      # (D, 2)
    metric: Metric                       # metric on the state space
    params: ParamSpace
    maps: MapFamily
    weights: WeightFamily

    def __post_init__(self):
        box = np.asarray(self.box, dtype=float)
        if box.ndim != 2 or box.shape[1] != 2 or np.any(box[:, 0] >= box[:, 1]):
            raise ModelError("domain box must be (D, 2) with lo < hi")
        box.setflags(write=False)
        object.__setattr__(self, "box", box)

    @property
    def dim(self) -> int:
        return self.box.shape[0]

    @property
    def n_maps(self) -> int:
        return len(self.params)


# ---------------------------------------------------------------------------
# map evaluation
# ---------------------------------------------------------------------------

def _confine(images: np.ndarray, box: np.ndarray) -> np.ndarray:
    """Clip images to the box; escapes beyond 1e-9 are a model error."""
    lo, hi = box[:, 0], box[:, 1]
    overflow = max(float(np.max(lo - images, initial=0.0)),
                   float(np.max(images - hi, initial=0.0)))
    if overflow > _ESCAPE_TOL:
        raise ModelError(f"map image escapes bounding box by {overflow:.3g}")
    return np.clip(images, lo, hi)


def _state_env(X: np.ndarray) -> dict:
    return {f"x{d}": X[:, d] for d in range(X.shape[1])}


def eval_map_batch(model: IfsmModel, j: int, X: np.ndarray) -> np.ndarray:
    """Apply map ``j`` to the rows of ``X``; images stay inside the box."""
    if not 0 <= j < model.n_maps:
        raise ModelError(f"map index {j} out of range")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    fam = model.maps
    if fam.kind == "affine":
        out = X @ fam.matrices[j].T + fam.offsets[j]
    elif fam.kind == "gifs_skew":
        phi = X @ fam.coeffs[j] + fam.offsets[j]
        out = np.concatenate([X[:, 1:], phi[:, None]], axis=1)
    elif fam.kind == "custom":
        env = _state_env(X)
        atom = model.params.atoms[j]
        env.update({f"lam{d}": atom[d] for d in range(atom.shape[0])})
        cols = [np.broadcast_to(np.asarray(expr.evaluate(e, env), dtype=float),
                                (X.shape[0],)) for e in fam.exprs]
        out = np.stack(cols, axis=1)
    else:
        raise ModelError(f"unknown map kind {fam.kind!r}")
    return _confine(out, model.box)


def eval_map(model: IfsmModel, j: int, x) -> np.ndarray:
    """Image of a single point under map ``j``."""
    x = np.asarray(x, dtype=float).ravel()
    return eval_map_batch(model, j, x[None, :])[0]


def compose_map(model: IfsmModel, indices, x) -> np.ndarray:
    """Left-to-right composition: the first index is applied first."""
    pt = np.asarray(x, dtype=float).ravel()
    for j in indices:
        pt = eval_map(model, int(j), pt)
    return pt


def apply_tuples(model: IfsmModel, tuples: np.ndarray, x) -> np.ndarray:
    """Endpoints of many composition tuples started from the same point."""
    tuples = np.atleast_2d(np.asarray(tuples, dtype=int))
    pts = np.tile(np.asarray(x, dtype=float).ravel(), (tuples.shape[0], 1))
    for step in range(tuples.shape[1]):
        col = tuples[:, step]
        for j in np.unique(col):
            mask = col == j
            pts[mask] = eval_map_batch(model, int(j), pts[mask])
    return pts


# ---------------------------------------------------------------------------
# weight evaluation
# ---------------------------------------------------------------------------

def weight_matrix(model: IfsmModel, X: np.ndarray) -> np.ndarray:
    """Probability vector over the atoms for each row of ``X``: shape (N, K)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    k = model.n_maps
    fam = model.weights
    if fam.kind == "constant":
        return np.broadcast_to(fam.p, (n, k)).copy()
    if fam.kind == "mixture":
        h = np.clip(np.broadcast_to(
            np.asarray(expr.evaluate(fam.h, _state_env(X)), dtype=float), (n,)), 0.0, 1.0)
        return (1.0 - h)[:, None] * fam.nu1 + h[:, None] * fam.nu2
    if fam.kind == "thermodynamic":
        raw = np.empty((n, k))
        for j in range(k):
            y = eval_map_batch(model, j, X)
            a = np.broadcast_to(
                np.asarray(expr.evaluate(fam.potential, _state_env(y)), dtype=float), (n,))
            raw[:, j] = np.exp(a) * fam.base[j]
        z = raw.sum(axis=1)
        if np.any(z <= 0):
            raise ModelError("all thermodynamic weights vanish at some state")
        return raw / z[:, None]
    if fam.kind == "table":
        raw = np.empty((n, k))
        for j in range(k):
            env = _state_env(X)
            atom = model.params.atoms[j]
            env.update({f"lam{d}": atom[d] for d in range(atom.shape[0])})
            raw[:, j] = np.broadcast_to(
                np.asarray(expr.evaluate(fam.table, env), dtype=float), (n,))
        if np.any(raw < 0):
            raise ModelError("weight table produced a negative weight")
        z = raw.sum(axis=1)
        if np.any(z <= 0):
            raise ModelError("all weights zero at some state")
        return raw / z[:, None]
    raise ModelError(f"unknown weight kind {fam.kind!r}")


def weights_at(model: IfsmModel, x) -> DiscreteMeasure:
    """The weight distribution over parameter atoms at state ``x``."""
    x = np.asarray(x, dtype=float).ravel()
    row = weight_matrix(model, x[None, :])[0]
    return DiscreteMeasure(model.params.atoms, row)


def thermo_normalizer_range(model: IfsmModel, X: np.ndarray) -> tuple[float, float]:
    """Range of the pre-normalization constant of a thermodynamic family.

    The family is normalized per state numerically; this reports how far the
    model is from having a state-independent normalizer.
    """
    fam = model.weights
    if fam.kind != "thermodynamic":
        raise ModelError("normalizer range only applies to thermodynamic weights")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    z = np.zeros(X.shape[0])
    for j in range(model.n_maps):
        y = eval_map_batch(model, j, X)
        a = np.broadcast_to(
            np.asarray(expr.evaluate(fam.potential, _state_env(y)), dtype=float),
            (X.shape[0],))
        z += np.exp(a) * fam.base[j]
    return float(z.min()), float(z.max())


# ---------------------------------------------------------------------------
# composed measures on tuple space
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComposedMeasure:
    """Chained weight measure over index tuples of a fixed depth.

    ``tuples`` holds one row per surviving tuple (first-applied index first),
    ``endpoints`` the image of the base point under each tuple's composition.
    Pruned mass is recorded; weights are renormalized only when pruning
    removed anything, and that is flagged.
    """

    depth: int
    base: np.ndarray
    tuples: np.ndarray
    weights: np.ndarray
    endpoints: np.ndarray
    discarded_mass: float = 0.0
    renormalized: bool = False

    def __post_init__(self):
        if abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise ModelError("composed-measure weights must sum to 1")

    def __len__(self) -> int:
        return self.tuples.shape[0]


def composed_measure(model: IfsmModel, depth: int, x, prune_floor: float = 0.0,
                     cap: int = DEFAULT_TUPLE_CAP) -> ComposedMeasure:
    """Distribution of depth-``depth`` index tuples chained from state ``x``.

    The weight of (j0, ..., j_{M-1}) is the product of the place-dependent
    weights along the trajectory that applies j0 first.  Tuples whose weight
    ever drops to ``prune_floor`` or below are discarded and their mass
    recorded.
    """
    if depth < 1:
        raise ModelError("depth must be >= 1")
    if prune_floor < 0:
        raise ModelError("prune_floor must be nonnegative")
    k = model.n_maps
    if prune_floor == 0.0 and k**depth > cap:
        raise ModelError(
            f"{k}^{depth} tuples exceed cap {cap}; pass a positive prune_floor")
    x = np.asarray(x, dtype=float).ravel()
    pts = x[None, :]
    tuples = np.empty((1, 0), dtype=np.int64)
    weights = np.ones(1)
    discarded = 0.0
    for _ in range(depth):
        w_step = weight_matrix(model, pts)                     # (T, K)
        new_w = (weights[:, None] * w_step).reshape(-1)        # order: t*K + j
        t_count = tuples.shape[0]
        new_tuples = np.concatenate(
            [np.repeat(tuples, k, axis=0),
             np.tile(np.arange(k, dtype=np.int64), t_count)[:, None]], axis=1)
        new_pts = np.empty((t_count, k, pts.shape[1]))
        for j in range(k):
            new_pts[:, j, :] = eval_map_batch(model, j, pts)
        new_pts = new_pts.reshape(t_count * k, pts.shape[1])
        if prune_floor > 0.0:
            keep = new_w > prune_floor
            discarded += float(new_w[~keep].sum())
            new_w, new_tuples, new_pts = new_w[keep], new_tuples[keep], new_pts[keep]
            if new_w.size == 0:
                raise ModelError("prune_floor removed all tuples")
        if new_w.size > cap:
            raise ModelError(
                f"tuple count {new_w.size} exceeds cap {cap}; raise prune_floor")
        weights, tuples, pts = new_w, new_tuples, new_pts
    renorm = discarded > 0.0
    if renorm:
        weights = weights / weights.sum()
    return ComposedMeasure(depth, x, tuples, weights, pts,
                           discarded_mass=discarded, renormalized=renorm)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _maps_to_dict(fam: MapFamily) -> dict:
    if fam.kind == "affine":
        return {"kind": "affine",
                "matrices": fam.matrices.tolist(),
                "offsets": fam.offsets.tolist()}
    if fam.kind == "gifs_skew":
        return {"kind": "gifs_skew", "degree": int(fam.degree),
                "coeffs": fam.coeffs.tolist(), "offsets": fam.offsets.tolist()}
    if fam.kind == "custom":
        return {"kind": "custom", "exprs": list(fam.exprs)}
    raise ModelError(f"unknown map kind {fam.kind!r}")


def _weights_to_dict(fam: WeightFamily) -> dict:
    if fam.kind == "constant":
        return {"kind": "constant", "p": fam.p.tolist()}
    if fam.kind == "thermodynamic":
        return {"kind": "thermodynamic", "potential": fam.potential,
                "base": fam.base.tolist(),
                "lip_potential": float(fam.lip_potential)}
    if fam.kind == "mixture":
        return {"kind": "mixture", "h": fam.h, "lip_h": float(fam.lip_h),
                "nu1": fam.nu1.tolist(), "nu2": fam.nu2.tolist()}
    if fam.kind == "table":
        return {"kind": "table", "expr": fam.table}
    raise ModelError(f"unknown weight kind {fam.kind!r}")


def model_to_dict(model: IfsmModel) -> dict:
    return {
        "schema": "ifsm-model/1",
        "domain": {"dim": model.dim, "box": model.box.tolist(),
                   "metric": model.metric.kind},
        "params": {"atoms": model.params.atoms.tolist(),
                   "metric": model.params.metric.kind},
        "maps": _maps_to_dict(model.maps),
        "weights": _weights_to_dict(model.weights),
    }


def _prob_vector(values, k: int, name: str) -> np.ndarray:
    v = np.asarray(values, dtype=float).ravel()
    if v.shape[0] != k:
        raise ModelError(f"{name} must have one entry per atom")
    if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-12:
        raise ModelError(f"{name} must be a probability vector")
    v.setflags(write=False)
    return v


def _maps_from_dict(d: dict, dim: int, k: int, atom_dim: int) -> MapFamily:
    kind = d.get("kind")
    if kind == "affine":
        mats = np.asarray(d["matrices"], dtype=float)
        offs = np.asarray(d["offsets"], dtype=float)
        if mats.shape != (k, dim, dim) or offs.shape != (k, dim):
            raise ModelError("affine maps must provide (K,D,D) matrices and (K,D) offsets")
        if not (np.all(np.isfinite(mats)) and np.all(np.isfinite(offs))):
            raise ModelError("non-finite affine coefficient")
        mats.setflags(write=False)
        offs.setflags(write=False)
        return MapFamily(kind="affine", matrices=mats, offsets=offs)
    if kind == "gifs_skew":
        degree = int(d["degree"])
        coeffs = np.asarray(d["coeffs"], dtype=float)
        offs = np.asarray(d["offsets"], dtype=float).ravel()
        if degree < 2 or dim != degree:
            raise ModelError("gifs_skew needs degree >= 2 and a degree-dimensional box")
        if coeffs.shape != (k, degree) or offs.shape != (k,):
            raise ModelError("gifs_skew must provide (K,m) coeffs and (K,) offsets")
        b = np.abs(coeffs).sum(axis=1)
        if b.max() >= 1.0:
            raise ModelError(
                f"gifs_skew coefficient sums must stay below 1 (got {b.max():.6g})")
        coeffs.setflags(write=False)
        offs.setflags(write=False)
        return MapFamily(kind="gifs_skew", degree=degree, coeffs=coeffs, offsets=offs)
    if kind == "custom":
        exprs = d["exprs"]
        if len(exprs) != dim:
            raise ModelError("custom maps need one expression per coordinate")
        allowed = {f"x{i}" for i in range(dim)} | {f"lam{i}" for i in range(atom_dim)}
        for e in exprs:
            expr.validate_expr(e, allowed)
        return MapFamily(kind="custom", exprs=tuple(exprs))
    raise ModelError(f"unknown map kind {kind!r}")


def _weights_from_dict(d: dict, dim: int, k: int, atom_dim: int) -> WeightFamily:
    kind = d.get("kind")
    state_vars = {f"x{i}" for i in range(dim)}
    if kind == "constant":
        return WeightFamily(kind="constant", p=_prob_vector(d["p"], k, "p"))
    if kind == "thermodynamic":
        expr.validate_expr(d["potential"], state_vars)
        lip = float(d["lip_potential"])
        if not np.isfinite(lip) or lip < 0:
            raise ModelError("lip_potential must be a finite nonnegative number")
        return WeightFamily(kind="thermodynamic", potential=d["potential"],
                            base=_prob_vector(d["base"], k, "base"),
                            lip_potential=lip)
    if kind == "mixture":
        expr.validate_expr(d["h"], state_vars)
        lip = float(d["lip_h"])
        if not np.isfinite(lip) or lip < 0:
            raise ModelError("lip_h must be a finite nonnegative number")
        return WeightFamily(kind="mixture", h=d["h"], lip_h=lip,
                            nu1=_prob_vector(d["nu1"], k, "nu1"),
                            nu2=_prob_vector(d["nu2"], k, "nu2"))
    if kind == "table":
        allowed = state_vars | {f"lam{i}" for i in range(atom_dim)}
        expr.validate_expr(d["expr"], allowed)
        return WeightFamily(kind="table", table=d["expr"])
    raise ModelError(f"unknown weight kind {kind!r}")


def model_from_dict(d: dict) -> IfsmModel:
    try:
        dom = d["domain"]
        box = np.asarray(dom["box"], dtype=float)
        dim = int(dom["dim"])
        if box.shape != (dim, 2):
            raise ModelError("domain box shape does not match dim")
        metric = Metric(dom.get("metric", "euclidean"))
        pd = d["params"]
        if "atoms" in pd:
            atoms = np.asarray(pd["atoms"], dtype=float)
        elif "interval" in pd:
            a, b = (float(v) for v in pd["interval"])
            grid = int(pd["grid"])
            if grid < 1 or not a < b:
                raise ModelError("interval discretization needs grid >= 1 and a < b")
            atoms = np.linspace(a, b, grid)[:, None]
        else:
            raise ModelError("params must list atoms or an interval with a grid size")
        params = ParamSpace(atoms, Metric(pd.get("metric", "euclidean")))
        maps = _maps_from_dict(d["maps"], dim, len(params), params.atoms.shape[1])
        weights = _weights_from_dict(d["weights"], dim, len(params),
                                     params.atoms.shape[1])
        return IfsmModel(box=box, metric=metric, params=params,
                         maps=maps, weights=weights)
    except (KeyError, TypeError) as e:
        raise ModelError(f"malformed model document: {e}") from e


def validate_model(model: IfsmModel, samples: int = 200, seed: int = 0) -> None:
    """Sampled self-map and weight checks; raises ModelError on violation.

    Covers: map images of box corners and seeded interior points stay in the
    box (within 1e-9); weight rows are valid probability vectors; mixture
    mixing values stay in [0, 1] up to 1e-9.
    """
    box = model.box
    dim = model.dim
    corners = np.array(np.meshgrid(*[box[d] for d in range(dim)],
                                   indexing="ij")).reshape(dim, -1).T
    rng = np.random.Generator(np.random.PCG64(seed))
    interior = box[:, 0] + rng.random((samples, dim)) * (box[:, 1] - box[:, 0])
    test_pts = np.concatenate([corners, interior], axis=0)
    for j in range(model.n_maps):
        eval_map_batch(model, j, test_pts)  # raises on escape
    w = weight_matrix(model, test_pts)
    if np.any(w < 0) or np.max(np.abs(w.sum(axis=1) - 1.0)) > 1e-9:
        raise ModelError("weight family produced an invalid probability vector")
    if model.weights.kind == "mixture":
        raw = np.asarray(expr.evaluate(model.weights.h, _state_env(test_pts)),
                         dtype=float)
        if np.min(raw) < -1e-9 or np.max(raw) > 1 + 1e-9:
            raise ModelError("mixture function h leaves [0, 1] on the domain")


def save_model(model: IfsmModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> IfsmModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    model = model_from_dict(doc)
    validate_model(model)
    return model
