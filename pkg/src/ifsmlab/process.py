"""Chaos-game sampling: random trajectories and their empirical measures.

At each step an atom index is drawn from the place-dependent weights at the
current state by inverse-CDF with strict less-than comparison (deterministic
at boundary draws), and the corresponding map is applied.

Randomness is pinned to numpy's PCG64 generator; output logs record the
generator name and library version.  Independent trajectories draw from
per-trajectory streams spawned from the master seed via SeedSequence, which
is the documented split.  The batch sampler used by the Monte-Carlo checks
draws one uniform block per step from a single stream instead; that layout
is documented here and is equally reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measure import DiscreteMeasure, bin_to_grid
from .model import IfsmModel, ModelError, eval_map_batch, weight_matrix
from .markov import SampledFunction, transfer_apply_M

__all__ = [
    "RNG_NAME",
    "rng_description",
    "Trajectory",
    "sample_trajectory",
    "sample_trajectories",
    "sample_batch_states",
    "empirical_measure",
    "conditional_expectation_check",
]

RNG_NAME = "PCG64"

DEFAULT_BURN_IN = 1000


def rng_description() -> str:
    return f"{RNG_NAME} (numpy {np.__version__})"


def _make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _draw_indices(weights: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw per row: smallest j with u < cumsum_j."""
    cum = np.cumsum(weights, axis=1)
    idx = np.sum(cum <= uniforms[:, None], axis=1)
    return np.minimum(idx, weights.shape[1] - 1)


@dataclass(frozen=True)
class Trajectory:
    """One chaos-game run: points, chosen indices, and the seed that made it.

    points[k+1] is exactly the image of points[k] under the chosen map, so
    the whole trajectory is recomputable from (z0, seed).
    """

    seed: int
    points: np.ndarray           # (n_steps + 1, D)
    chosen_indices: np.ndarray   # (n_steps,)
    box: np.ndarray

    def __post_init__(self):
        if self.chosen_indices.shape[0] != self.points.shape[0] - 1:
            raise ValueError("need exactly one chosen index per transition")

    def __len__(self) -> int:
        return self.points.shape[0]


def _run_chain(model: IfsmModel, z0: np.ndarray, n_steps: int,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    points = np.empty((n_steps + 1, z0.shape[0]))
    chosen = np.empty(n_steps, dtype=np.int64)
    points[0] = z0
    if model.weights.kind == "constant" and model.maps.kind == "affine" and n_steps:
        # place-independent weights: the whole index sequence can be drawn up
        # front from the same stream (one uniform per step, identical order)
        cum = np.cumsum(model.weights.p)
        idx = np.minimum(np.searchsorted(cum, rng.random(n_steps), side="right"),
                         model.n_maps - 1)
        chosen[:] = idx
        lo, hi = model.box[:, 0], model.box[:, 1]
        mats, offs = model.maps.matrices, model.maps.offsets
        if z0.shape[0] == 1:
            slope = mats[:, 0, 0].tolist()
            shift = offs[:, 0].tolist()
            lo0, hi0 = float(lo[0]), float(hi[0])
            v = float(points[0, 0])
            col = points[:, 0]
            for k in range(n_steps):
                j = idx[k]
                v = slope[j] * v + shift[j]
                if v < lo0 or v > hi0:
                    overflow = max(lo0 - v, v - hi0)
                    if overflow > 1e-9:
                        raise ModelError(
                            f"map image escapes bounding box by {overflow:.3g}")
                    v = min(max(v, lo0), hi0)
                col[k + 1] = v
            return points, chosen
        pt = points[0]
        for k in range(n_steps):
            j = idx[k]
            img = pt @ mats[j].T + offs[j]
            overflow = max(float(np.max(lo - img, initial=0.0)),
                           float(np.max(img - hi, initial=0.0)))
            if overflow > 1e-9:
                # surface the same validity error as the generic path
                eval_map_batch(model, int(j), pt[None, :])
            pt = np.clip(img, lo, hi)
            points[k + 1] = pt
        return points, chosen
    for k in range(n_steps):
        w = weight_matrix(model, points[k][None, :])
        j = int(_draw_indices(w, rng.random(1))[0])
        chosen[k] = j
        points[k + 1] = eval_map_batch(model, j, points[k][None, :])[0]
    return points, chosen


def sample_trajectory(model: IfsmModel, z0, n_steps: int, seed: int) -> Trajectory:
    """Run the chaos game for ``n_steps`` from ``z0`` with a fixed seed."""
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    z0 = np.asarray(z0, dtype=float).ravel()
    points, chosen = _run_chain(model, z0, n_steps, _make_rng(seed))
    return Trajectory(seed=seed, points=points, chosen_indices=chosen,
                      box=model.box)


def sample_trajectories(model: IfsmModel, z0, n_steps: int, count: int,
                        master_seed: int) -> list[Trajectory]:
    """Independent trajectories on per-run streams spawned from one seed."""
    z0 = np.asarray(z0, dtype=float).ravel()
    out = []
    for ss in np.random.SeedSequence(master_seed).spawn(count):
        rng = np.random.Generator(np.random.PCG64(ss))
        points, chosen = _run_chain(model, z0, n_steps, rng)
        out.append(Trajectory(seed=master_seed, points=points,
                              chosen_indices=chosen, box=model.box))
    return out


def sample_batch_states(model: IfsmModel, z0, n_steps: int, n_samples: int,
                        seed: int) -> np.ndarray:
    """States of ``n_samples`` independent chains after ``n_steps`` steps.

    Vectorized across chains: one uniform block per step from a single
    stream.  Used by the Monte-Carlo consistency checks.
    """
    z0 = np.asarray(z0, dtype=float).ravel()
    rng = _make_rng(seed)
    states = np.tile(z0, (n_samples, 1))
    for _ in range(n_steps):
        w = weight_matrix(model, states)
        idx = _draw_indices(w, rng.random(n_samples))
        for j in np.unique(idx):
            mask = idx == j
            states[mask] = eval_map_batch(model, int(j), states[mask])
    return states


def empirical_measure(trajectory: Trajectory, burn_in: int = DEFAULT_BURN_IN,
                      resolution: int = 128) -> DiscreteMeasure:
    """Uniform mass on the trajectory tail, binned to the grid."""
    if burn_in < 0 or burn_in >= len(trajectory):
        raise ValueError("burn_in must be smaller than the trajectory length")
    tail = trajectory.points[burn_in:]
    raw = DiscreteMeasure(tail, np.full(tail.shape[0], 1.0 / tail.shape[0]))
    return bin_to_grid(raw, resolution, trajectory.box)


def conditional_expectation_check(model: IfsmModel, f: SampledFunction, x,
                                  k: int, n_samples: int, seed: int) -> dict:
    """Monte-Carlo average of f after k steps versus the k-step transfer value.

    Both sides evaluate f through the same nearest-grid interpolation, so
    the comparison isolates sampling error; the report carries the standard
    error of the Monte-Carlo side.
    """
    if k < 1 or n_samples < 1:
        raise ValueError("need k >= 1 and n_samples >= 1")
    states = sample_batch_states(model, x, k, n_samples, seed)
    vals = f(states)
    mc = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0
    op = transfer_apply_M(model, f, x, k)
    return {
        "k": k,
        "n_samples": n_samples,
        "mc_estimate": mc,
        "operator_value": op,
        "std_error": se,
        "abs_diff": abs(mc - op),
        "z_score": abs(mc - op) / se if se > 0 else 0.0,
        "rng": rng_description(),
    }
