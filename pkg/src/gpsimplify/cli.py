"""Command-line front end.

Subcommands: ``simplify``, ``variation``, ``eval hausdorff``,
``eval variation``, ``register``, ``synth``. Exit codes: 0 success,
1 usage error, 2 data error, 3 numerical failure. Output files are written
atomically (temp file + rename), so failures never leave partial outputs.

Parallelism for neighbor queries is controlled by the GPSIMPLIFY_THREADS
environment variable (default: all available cores).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cloud_io import PLY_BINARY_LE, XYZ, load_cloud, write_cloud
from .errors import DataError, NumericalError
from .evaluate import (
    RigidTransform,
    generate_synthetic,
    hausdorff,
    icp_point_to_point,
    mean_surface_variation,
)
from .geometry import NeighborhoodParams, surface_variation_field
from .kernels import EUCLIDEAN, MANIFOLD, KernelSpec
from .simplify import SimplifyConfig, simplify

REPORT_SCHEMA_VERSION = 1

_SHAPE_NAMES = {
    "cube": "cube_surface",
    "sphere": "sphere_surface",
    "spiked-plane": "spiked_plane",
}


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _atomic_write(path, data: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def _save(cloud, path, include_attributes=True):
    fmt = PLY_BINARY_LE if str(path).lower().endswith(".ply") else XYZ
    _atomic_write(path, write_cloud(cloud, fmt, include_attributes))


def _build_parser() -> _Parser:
    parser = _Parser(prog="gpsimplify",
                     description="Feature-preserving point cloud simplification")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simplify", help="select a feature-preserving subset")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--ratio", type=float, help="target size as a fraction of N")
    group.add_argument("--count", type=int, help="target size M")
    p.add_argument("--kernel", choices=("euclidean", "manifold"), default="manifold")
    p.add_argument("--subsample", type=int, default=None,
                   help="run selection on a random working subset of this size")
    p.add_argument("--neighbors", type=int, default=25)
    p.add_argument("--eigenpairs", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", default=None, help="write a JSON run report here")

    p = sub.add_parser("variation", help="compute per-point surface variation")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="*.csv or *.ply")
    p.add_argument("--neighbors", type=int, default=25)

    p = sub.add_parser("eval", help="evaluation metrics")
    esub = p.add_subparsers(dest="eval_command", required=True)
    ph = esub.add_parser("hausdorff", help="cloud-to-cloud Hausdorff statistics")
    ph.add_argument("--a", required=True)
    ph.add_argument("--b", required=True)
    ph.add_argument("--json", action="store_true")
    pv = esub.add_parser("variation", help="mean surface variation of a cloud")
    pv.add_argument("--input", required=True)
    pv.add_argument("--neighbors", type=int, default=25)
    pv.add_argument("--json", action="store_true")

    p = sub.add_parser("register", help="point-to-point ICP registration")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--init-json", default=None,
                   help="JSON file with rotation/translation to start from")

    p = sub.add_parser("synth", help="generate a synthetic test shape")
    p.add_argument("--shape", choices=sorted(_SHAPE_NAMES), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.0,
                   help="noise std as a fraction of the bounding-box diagonal")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    return parser


def _cmd_simplify(args) -> int:
    cloud = load_cloud(args.input)
    t0 = time.perf_counter()
    field = surface_variation_field(cloud, NeighborhoodParams(k=args.neighbors))
    t_variation = time.perf_counter() - t0
    family = EUCLIDEAN if args.kernel == "euclidean" else MANIFOLD
    config = SimplifyConfig(
        count=args.count,
        ratio=args.ratio,
        working_subsample=args.subsample,
        kernel=KernelSpec(family=family, eigenpair_count=args.eigenpairs),
        seed=args.seed,
    )
    result = simplify(cloud, field, config)
    _save(result.cloud, args.output)
    if args.report:
        report = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "command": "simplify",
            "input": {"path": args.input, "n": len(cloud)},
            "output": {"path": args.output, "m": len(result.cloud)},
            "neighbors": args.neighbors,
            "variation_radius": field.params.radius,
            **result.report,
        }
        report["timings_s"]["variation"] = t_variation
        _atomic_write(args.report, (json.dumps(report, indent=2) + "\n").encode())
    print(f"simplified {len(cloud)} -> {len(result.cloud)} points "
          f"({result.report['alpha']:.4f}) into {args.output}")
    return 0


def _cmd_variation(args) -> int:
    cloud = load_cloud(args.input)
    field = surface_variation_field(cloud, NeighborhoodParams(k=args.neighbors))
    if str(args.output).lower().endswith(".ply"):
        _save(cloud.with_attribute("sigma_n", field.values), args.output)
    else:
        _atomic_write(args.output, field.to_csv().encode())
    print(f"surface variation of {len(cloud)} points -> {args.output} "
          f"(mean {field.values.mean():.5f}, radius {field.params.radius:.6g})")
    return 0


def _cmd_eval(args) -> int:
    if args.eval_command == "hausdorff":
        report = hausdorff(load_cloud(args.a), load_cloud(args.b)).to_dict()
        if args.json:
            print(json.dumps(report, indent=2))
        else:
            for key, value in report.items():
                print(f"{key}: {value}")
        return 0
    cloud = load_cloud(args.input)
    value = mean_surface_variation(cloud, NeighborhoodParams(k=args.neighbors))
    if args.json:
        print(json.dumps({"mean_surface_variation": value, "n": len(cloud)}))
    else:
        print(f"mean_surface_variation: {value}")
    return 0


def _cmd_register(args) -> int:
    source = load_cloud(args.source)
    target = load_cloud(args.target)
    init = None
    if args.init_json:
        with open(args.init_json) as fh:
            init = RigidTransform.from_dict(json.load(fh))
    result = icp_point_to_point(source, target, init,
                                max_iter=args.max_iter, tol=args.tol)
    payload = {
        **result.transform.to_dict(),
        "inlier_rmse": result.inlier_rmse,
        "rmse": result.rmse,
        "iterations": result.iterations,
        "converged": result.converged,
        "degenerate": result.degenerate,
    }
    print(json.dumps(payload, indent=2))
    return 0


def _cmd_synth(args) -> int:
    cloud = generate_synthetic(_SHAPE_NAMES[args.shape], args.n,
                               noise_sigma=args.noise, seed=args.seed)
    _save(cloud, args.output)
    print(f"wrote {len(cloud)} {args.shape} points to {args.output}")
    return 0


_COMMANDS = {
    "simplify": _cmd_simplify,
    "variation": _cmd_variation,
    "eval": _cmd_eval,
    "register": _cmd_register,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"gpsimplify: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"gpsimplify: data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"gpsimplify: invalid value: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"gpsimplify: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
