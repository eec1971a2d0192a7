"""Command-line entry point: ``cfmonitor --experiment TAG [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .experiments import EXPERIMENTS, default_spec, format_signaling, run_experiment
from .scenario import SystemParams, load_params
from .spectral import ExpectationPlan

FAST_FACTOR = 10


def build_parser():
    ap = argparse.ArgumentParser(prog="cfmonitor", description=__doc__)
    ap.add_argument("--config", type=Path, help="key = value parameter file")
    ap.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    ap.add_argument("--seed", type=int, default=None,
                    help="base seed (defaults to rng_seed from the parameters)")
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--fast", action="store_true",
                    help=f"cut Monte-Carlo depths by {FAST_FACTOR}x")
    ap.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
    return ap


def _error(kind, message, code=2):
    print(json.dumps({"status": "error", "type": kind, "message": str(message)}),
          file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        return _error("ValueError", "--workers must be at least 1")
    try:
        params = load_params(args.config) if args.config else SystemParams()
        seed = params.rng_seed if args.seed is None else args.seed
        if seed < 0:
            raise ValueError("--seed must be nonnegative")
        plan = ExpectationPlan()
        if args.fast:
            plan = plan.scaled(FAST_FACTOR)
        spec = default_spec(args.experiment, plan=plan, out=args.out, seed=seed,
                            params=params)
        if args.workers > 1:
            with ProcessPoolExecutor(args.workers) as pool:
                res = run_experiment(spec, map_fn=pool.map, plot=not args.no_plot)
        else:
            res = run_experiment(spec, plot=not args.no_plot)
    except Exception as exc:  # noqa: BLE001  reported as a machine-readable line
        return _error(type(exc).__name__, exc)
    if args.experiment == "signaling":
        print(format_signaling(res.rows))
    print(json.dumps({"status": "ok", "experiment": args.experiment,
                      "files": {k: str(v) for k, v in res.files.items()},
                      "skipped": len(res.skipped)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
