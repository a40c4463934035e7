"""Command-line entry point.

Subcommands: attractor, invariant, chaos, check, stability, wasserstein,
hausdorff, render.  Every run writes a JSON run-manifest recording the model
hash, seed, resolution and library versions, so a run can be reproduced
byte-for-byte from its manifest.  Report commands additionally render
matplotlib figures next to their CSV/JSON outputs (disable with
--no-figures).

Exit codes: 0 success, 1 model or validation error, 2 non-convergence,
3 I/O error, 64 usage error.

The environment variable IFSM_THREADS caps the BLAS thread pools (best
effort; results are identical at any thread count because all reductions
are ordered).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import check_hypotheses, stability_experiment
from .hutchinson import attractor as run_attractor
from .markov import invariant_measure, uniform_grid_measure
from .measure import (DiscreteMeasure, grid_assign, measure_from_csv,
                      measure_to_csv, wasserstein1)
from .metric import (Metric, PointCloud, cloud_from_csv, cloud_to_csv,
                     grid_cloud, hausdorff)
from .model import ModelError, load_model
from .process import empirical_measure, rng_description, sample_trajectory
from . import plots

EXIT_OK = 0
EXIT_MODEL_ERROR = 1
EXIT_NO_CONVERGENCE = 2
EXIT_IO_ERROR = 3
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 64 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, command: str, parameters: dict,
                    outputs: list[str], model_path: Path | None = None) -> None:
    doc = {
        "command": command,
        "parameters": parameters,
        "outputs": outputs,
        "versions": {
            "ifsmlab": __version__,
            "numpy": np.__version__,
            "python": ".".join(map(str, sys.version_info[:3])),
        },
        "rng": rng_description(),
    }
    if model_path is not None:
        doc["model_sha256"] = _sha256(model_path)
    (out_dir / "manifest.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _b0_cloud(spec: str, cells: int, model) -> PointCloud:
    if spec == "grid":
        return grid_cloud(model.box, cells)
    if spec == "corners":
        corners = np.array(np.meshgrid(*[model.box[d] for d in range(model.dim)],
                                       indexing="ij")).reshape(model.dim, -1).T
        return PointCloud(corners, model.box)
    return cloud_from_csv(Path(spec).read_text(encoding="utf-8"),
                          bounding_box=model.box)


def cmd_attractor(args) -> int:
    model = load_model(args.model)
    out = _out_dir(args)
    b0 = _b0_cloud(args.b0, args.b0_cells, model)
    cloud, log = run_attractor(model, b0, args.resolution, tol=args.tol,
                               max_iter=args.max_iter)
    (out / "attractor.csv").write_text(cloud_to_csv(cloud), encoding="utf-8")
    (out / "attractor_log.json").write_text(
        json.dumps(log.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    outputs = ["attractor.csv", "attractor_log.json"]
    if args.figures:
        plots.save_cloud_plot(cloud, out / "attractor.png", title="attractor sample")
        plots.save_decay_plot(log.deltas, out / "attractor_deltas.png",
                              "Hausdorff delta")
        outputs += ["attractor.png", "attractor_deltas.png"]
    _write_manifest(out, "attractor", {
        "model": str(args.model), "resolution": args.resolution,
        "tol": log.tol, "max_iter": args.max_iter,
        "b0": args.b0, "b0_cells": args.b0_cells,
    }, outputs, model_path=Path(args.model))
    print(f"attractor: {len(cloud)} points, converged={log.converged}, "
          f"iterations={log.iterations}")
    return EXIT_OK if log.converged else EXIT_NO_CONVERGENCE


def cmd_invariant(args) -> int:
    model = load_model(args.model)
    out = _out_dir(args)
    contraction = args.contraction
    if contraction is None:
        budget = check_hypotheses(model).budget_one_step
        contraction = budget if budget < 1.0 else None
    mu0 = uniform_grid_measure(model, args.resolution)
    mu, log = invariant_measure(model, mu0, args.resolution, args.tol,
                                args.max_iter, contraction=contraction)
    (out / "invariant.csv").write_text(measure_to_csv(mu), encoding="utf-8")
    (out / "invariant_log.json").write_text(
        json.dumps(log.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    outputs = ["invariant.csv", "invariant_log.json"]
    if args.figures:
        plots.save_measure_plot(mu, out / "invariant.png", title="invariant measure")
        plots.save_decay_plot(log.deltas, out / "invariant_deltas.png", "W1 delta")
        outputs += ["invariant.png", "invariant_deltas.png"]
    _write_manifest(out, "invariant", {
        "model": str(args.model), "resolution": args.resolution,
        "tol": args.tol, "max_iter": args.max_iter,
        "contraction": contraction,
    }, outputs, model_path=Path(args.model))
    print(f"invariant: {len(mu)} atoms, converged={log.converged}, "
          f"iterations={log.iterations}")
    return EXIT_OK if log.converged else EXIT_NO_CONVERGENCE


def cmd_chaos(args) -> int:
    model = load_model(args.model)
    out = _out_dir(args)
    if args.z0 is None:
        z0 = model.box.mean(axis=1)
    else:
        z0 = np.array([float(v) for v in args.z0.split(",")])
    traj = sample_trajectory(model, z0, args.steps, args.seed)
    lines = [",".join([f"x{d}" for d in range(model.dim)] + ["chosen"])]
    chosen = np.concatenate([[-1], traj.chosen_indices])
    for pt, c in zip(traj.points, chosen):
        lines.append(",".join(_fmt(v) for v in pt) + f",{int(c)}")
    (out / "trajectory.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    emp = empirical_measure(traj, burn_in=args.burn_in, resolution=args.resolution)
    (out / "empirical.csv").write_text(measure_to_csv(emp), encoding="utf-8")
    outputs = ["trajectory.csv", "empirical.csv"]
    if args.figures:
        plots.save_measure_plot(emp, out / "empirical.png", title="empirical measure")
        outputs.append("empirical.png")
    _write_manifest(out, "chaos", {
        "model": str(args.model), "steps": args.steps, "seed": args.seed,
        "burn_in": args.burn_in, "z0": z0.tolist(),
        "resolution": args.resolution,
    }, outputs, model_path=Path(args.model))
    print(f"chaos: {len(traj)} points, empirical support {len(emp)}")
    return EXIT_OK


def cmd_check(args) -> int:
    model = load_model(args.model)
    out = _out_dir(args)
    report = check_hypotheses(model, sample_budget=args.samples, seed=args.seed)
    (out / "check_report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    _write_manifest(out, "check", {
        "model": str(args.model), "samples": args.samples, "seed": args.seed,
    }, ["check_report.json"], model_path=Path(args.model))
    print(f"s={_fmt(report.s)} r={_fmt(report.r)} t={_fmt(report.t)} "
          f"m={report.m_depth}")
    print(f"budget(one-step)={_fmt(report.budget_one_step)} "
          f"budget(m-step)={_fmt(report.budget_m_step)}")
    for name in ("M1", "C1", "W1", "CP1", "MP1", "H2", "H3", "H4"):
        print(f"  {name}: {report.verdicts[name]}")
    return EXIT_OK


def cmd_stability(args) -> int:
    target = load_model(args.target)
    models = [load_model(p) for p in args.models]
    out = _out_dir(args)
    report = stability_experiment(models, target, resolution=args.resolution,
                                  tol=args.tol, seed=args.seed)
    (out / "stability.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    rows = report["rows"]
    lines = ["index,eps,measured,bound,passes"]
    for row in rows:
        lines.append(f"{row['index']},{_fmt(row['eps'])},{_fmt(row['measured'])},"
                     f"{_fmt(row['bound'])},{int(row['passes'])}")
    (out / "stability.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    outputs = ["stability.json", "stability.csv"]
    if args.figures:
        plots.save_stability_plot(rows, out / "stability.png",
                                  title="stochastic stability")
        outputs.append("stability.png")
    _write_manifest(out, "stability", {
        "target": str(args.target), "models": [str(p) for p in args.models],
        "resolution": args.resolution, "tol": args.tol, "seed": args.seed,
    }, outputs, model_path=Path(args.target))
    print(f"stability: all_pass={report['all_pass']}")
    return EXIT_OK if report["all_pass"] else EXIT_NO_CONVERGENCE


def _load_measure_or_cloud(path: Path):
    text = path.read_text(encoding="utf-8")
    header = text.splitlines()[0] if text else ""
    if header.rstrip().endswith("weight"):
        return measure_from_csv(text)
    return cloud_from_csv(text)


def cmd_wasserstein(args) -> int:
    out = _out_dir(args)
    mu = measure_from_csv(Path(args.a).read_text(encoding="utf-8"))
    nu = measure_from_csv(Path(args.b).read_text(encoding="utf-8"))
    value = wasserstein1(mu, nu, Metric(args.metric))
    _write_manifest(out, "wasserstein", {
        "a": str(args.a), "b": str(args.b), "metric": args.metric,
    }, [])
    print(_fmt(value))
    return EXIT_OK


def cmd_hausdorff(args) -> int:
    out = _out_dir(args)
    a = cloud_from_csv(Path(args.a).read_text(encoding="utf-8"))
    b = cloud_from_csv(Path(args.b).read_text(encoding="utf-8"))
    value = hausdorff(a, b, Metric(args.metric))
    _write_manifest(out, "hausdorff", {
        "a": str(args.a), "b": str(args.b), "metric": args.metric,
    }, [])
    print(_fmt(value))
    return EXIT_OK


def render_pgm(obj, width: int, height: int, box=None) -> str:
    """Plain-text PGM (P2) density image of a measure or cloud.

    Pixel intensity is proportional to binned mass for measures and to
    membership for clouds.  Supports dimensions 1 and 2; the output bytes
    are deterministic for a fixed input.
    """
    if width < 1 or height < 1:
        raise ValueError("width and height must be >= 1")
    if isinstance(obj, DiscreteMeasure):
        pts, mass = obj.atoms, obj.weights
    else:
        pts, mass = obj.points, np.ones(len(obj))
    dim = pts.shape[1]
    if dim > 2:
        raise ValueError(f"rendering supports dimensions 1 and 2, got {dim}")
    if box is None:
        box = np.stack([pts.min(axis=0), pts.max(axis=0)], axis=1)
    else:
        box = np.asarray(box, dtype=float)
    if dim == 1:
        flat = grid_assign(pts, box, (width,))
        cells = np.zeros(width)
        np.add.at(cells, flat, mass)
        image = np.tile(cells, (height, 1))
    else:
        flat = grid_assign(pts, box, (width, height))
        cells = np.zeros(width * height)
        np.add.at(cells, flat, mass)
        grid = cells.reshape(width, height)      # [col, row]
        image = grid.T[::-1, :]                  # row 0 = top = largest x1
    peak = image.max()
    if peak > 0:
        pixels = np.rint(image / peak * 255).astype(int)
    else:
        pixels = np.zeros_like(image, dtype=int)
    lines = [f"P2", f"{width} {height}", "255"]
    for row in pixels:
        lines.append(" ".join(str(v) for v in row))
    return "\n".join(lines) + "\n"


def cmd_render(args) -> int:
    out = _out_dir(args)
    obj = _load_measure_or_cloud(Path(args.input))
    box = None
    if args.box:
        box = [[float(v) for v in axis.split(",")] for axis in args.box.split(";")]
    text = render_pgm(obj, args.width, args.height, box=box)
    (out / args.out).write_text(text, encoding="utf-8")
    _write_manifest(out, "render", {
        "input": str(args.input), "width": args.width, "height": args.height,
        "box": args.box, "out": args.out,
    }, [args.out])
    print(f"wrote {out / args.out}")
    return EXIT_OK


def _add_common(p, figures=False):
    p.add_argument("--out-dir", default=".", help="output directory")
    if figures:
        p.add_argument("--no-figures", dest="figures", action="store_false",
                       help="skip matplotlib figure output")
        p.set_defaults(figures=True)


def build_parser() -> _Parser:
    parser = _Parser(prog="ifsmlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("attractor", help="iterate the set operator to its fixed point")
    p.add_argument("--model", required=True)
    p.add_argument("--resolution", type=int, default=256)
    p.add_argument("--tol", type=float, default=None,
                   help="stopping tolerance (default: 2 grid cell diameters)")
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--b0", default="grid",
                   help="starting cloud: 'grid', 'corners', or a CSV path")
    p.add_argument("--b0-cells", type=int, default=16)
    _add_common(p, figures=True)
    p.set_defaults(func=cmd_attractor)

    p = sub.add_parser("invariant", help="iterate the measure operator to its fixed point")
    p.add_argument("--model", required=True)
    p.add_argument("--resolution", type=int, default=128)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--contraction", type=float, default=None,
                   help="operator budget for the residual bound (default: computed)")
    _add_common(p, figures=True)
    p.set_defaults(func=cmd_invariant)

    p = sub.add_parser("chaos", help="sample a random-iteration trajectory")
    p.add_argument("--model", required=True)
    p.add_argument("--steps", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--z0", default=None, help="comma-separated start point")
    p.add_argument("--resolution", type=int, default=128)
    _add_common(p, figures=True)
    p.set_defaults(func=cmd_chaos)

    p = sub.add_parser("check", help="verify contraction hypotheses and budgets")
    p.add_argument("--model", required=True)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("stability", help="invariant-measure drift under weight perturbations")
    p.add_argument("--target", required=True)
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--resolution", type=int, default=128)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p, figures=True)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("wasserstein", help="Wasserstein-1 distance of two measure CSVs")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--metric", default="euclidean",
                   choices=["euclidean", "max_coord"])
    _add_common(p)
    p.set_defaults(func=cmd_wasserstein)

    p = sub.add_parser("hausdorff", help="Hausdorff distance of two cloud CSVs")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--metric", default="euclidean",
                   choices=["euclidean", "max_coord"])
    _add_common(p)
    p.set_defaults(func=cmd_hausdorff)

    p = sub.add_parser("render", help="render a measure or cloud CSV to a PGM image")
    p.add_argument("--input", required=True)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--out", default="render.pgm")
    p.add_argument("--box", default=None,
                   help="per-axis lo,hi pairs joined by ';' (default: data box)")
    _add_common(p)
    p.set_defaults(func=cmd_render)

    return parser


def _apply_thread_cap() -> None:
    cap = os.environ.get("IFSM_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def run(argv=None) -> int:
    """Dispatch one invocation; returns the process exit code."""
    _apply_thread_cap()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except ModelError as e:
        print(f"model error: {e}", file=sys.stderr)
        return EXIT_MODEL_ERROR
    except (FileNotFoundError, IsADirectoryError, PermissionError,
            json.JSONDecodeError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO_ERROR
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO_ERROR
    except ValueError as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_MODEL_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
