"""Command-line harness.

Exit codes: 0 success, 2 invalid config or arguments, 3 runtime or
numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .config import config_digest, load_config
from .crb import crb
from .errors import MsdoaError, ValidationError
from .harness import resolve_experiment, run_single, run_sweep, trial_seed_sequence, write_sweep_csv
from .waveform import draw_source_amplitudes

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-c", "--config", required=True, help="config file path")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )
    parser.add_argument("-o", "--output", default=None, help="output path prefix")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msdoa",
        description="Switched-metasurface direction-finding simulator",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="parse and validate a config")
    _add_common(p_validate)

    p_single = sub.add_parser("single", help="one seeded run with spectrum dumps")
    _add_common(p_single)

    p_sweep = sub.add_parser("sweep", help="Monte Carlo sweep to CSV")
    _add_common(p_sweep)
    p_sweep.add_argument("--workers", type=int, default=1, help="parallel trial workers")

    p_crb = sub.add_parser("crb", help="angle error bound for the configured scene")
    _add_common(p_crb)
    return parser


def _cmd_validate(cfg, args) -> int:
    print(f"OK config_sha256={config_digest(cfg)}")
    return EXIT_OK


def _cmd_single(cfg, args) -> int:
    out = run_single(cfg, args.output)
    for name, path in out["paths"].items():
        print(f"{name}: {path}")
    result = out["result"]
    if result is not None:
        for est in result.estimates:
            if result.phi_grid_deg is None:
                print(f"estimate theta_deg={est.theta_deg:.4f}")
            else:
                print(f"estimate theta_deg={est.theta_deg:.4f} phi_deg={est.phi_deg:.4f}")
    return EXIT_OK


def _cmd_sweep(cfg, args) -> int:
    result = run_sweep(cfg, workers=args.workers)
    prefix = args.output if args.output is not None else cfg.output
    path = f"{prefix}_sweep.csv"
    write_sweep_csv(result, path)
    print(f"sweep: {path}")
    for row in result.rows:
        print(
            f"{row.variable}={row.value} pr={row.pr:.3f} "
            f"rmse_deg={row.rmse_deg:.4f} wall_s={row.wall_s:.3f}"
        )
    return EXIT_OK


def _cmd_crb(cfg, args) -> int:
    if cfg.scene.num_sources < 1:
        raise ValidationError("crb needs at least one configured source")
    cfg = resolve_experiment(cfg)
    amps = draw_source_amplitudes(
        cfg.scene, cfg.plan.num_snapshots, trial_seed_sequence(cfg.seed, 0, 0)
    )
    bound = crb(
        cfg.surface,
        cfg.scene,
        cfg.plan,
        cfg.max_harmonic,
        cfg.noise.variance,
        amps,
        known_elevations=cfg.estimator.kind == "1d",
    )
    for k, b in enumerate(bound.theta_bounds, 1):
        print(f"source {k}: sqrt_crb_deg={np.rad2deg(np.sqrt(b)):.6g}")
    prefix = args.output if args.output is not None else cfg.output
    path = f"{prefix}_crb.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# angle covariance floor, radians^2; azimuths then elevations\n")
        for row in bound.matrix:
            fh.write(",".join(f"{v:.10g}" for v in row) + "\n")
    print(f"crb: {path}")
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "single": _cmd_single,
    "sweep": _cmd_sweep,
    "crb": _cmd_crb,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValidationError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return _COMMANDS[args.command](cfg, args)
    except ValidationError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (MsdoaError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
