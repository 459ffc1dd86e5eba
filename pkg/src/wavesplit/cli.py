"""Command line front end.

    wavesplit run <config.json> [--output DIR]
    wavesplit sweep <config.json> --axis NAME --values v1,v2,... [--output DIR]
    wavesplit certify <config.json>

Exit codes: 0 success, 2 bad configuration or data, 3 instability during
time stepping, 4 linear solver failure.
"""

import argparse
import json
import os
import sys

from .config import (SWEEP_AXES, ExperimentConfig, build_workspace,
                     run_experiment, stability_summary, sweep)
from .errors import ConfigurationError, DataError, InstabilityError, SolverError


def _load(path):
    cfg = ExperimentConfig.from_json(path)
    return cfg, os.path.dirname(os.path.abspath(path))


def cmd_run(args):
    cfg, base = _load(args.config)
    outdir = run_experiment(cfg, base_dir=base, output_override=args.output)
    print(f"artifacts in {outdir}")
    return 0


def cmd_sweep(args):
    cfg, base = _load(args.config)
    try:
        values = [float(v) for v in args.values.split(",") if v]
    except ValueError:
        raise ConfigurationError(f"--values must be a comma list of numbers, "
                                 f"got {args.values!r}") from None
    if not values:
        raise ConfigurationError("--values must not be empty")
    path = sweep(cfg, args.axis, values, base_dir=base,
                 output_override=args.output)
    print(f"sweep table in {path}")
    return 0


def cmd_certify(args):
    cfg, base = _load(args.config)
    ws = build_workspace(cfg, base_dir=base)
    reports = stability_summary(ws, cfg.schemes, seed=cfg.seed)
    if not reports:
        raise ConfigurationError("no scheme in this config has a certification mode")
    print(json.dumps({name: json.loads(rep.to_json())
                      for name, rep in reports}, indent=2, sort_keys=True))
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="wavesplit",
        description="Partially explicit wave stepping on two-level multiscale "
                    "spaces for high-contrast media.")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run every scheme in a config, export artifacts")
    p.add_argument("config")
    p.add_argument("--output", default=None, help="override the output directory")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("sweep", help="rerun the split scheme along one axis")
    p.add_argument("config")
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--output", default=None)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("certify", help="print stability certification only")
    p.add_argument("config")
    p.set_defaults(fn=cmd_certify)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigurationError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InstabilityError as exc:
        print(f"instability: {exc}", file=sys.stderr)
        return 3
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
