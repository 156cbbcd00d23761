"""Command line entry point: ``perturbgp <subcommand> [options]``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
4 wall-time budget exceeded.
"""

import argparse
import json
import sys

from .experiments import (KINDS, BudgetExceeded, CellFailure, ConfigError, load_config,
                          run, validate)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_BUDGET = 0, 2, 3, 4


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed")
    common.add_argument("--n", type=int, help="number of observation points")
    common.add_argument("--replicates", type=int, help="Monte Carlo replicates")
    common.add_argument("--eps", type=float, nargs="+", help="regularity parameters")
    common.add_argument("--out", metavar="PATH", help="CSV output (JSON sidecar at PATH.json)")
    common.add_argument("--threads", type=int, help="worker threads")
    common.add_argument("--estimate", help="free parameters: ell, nu or ell,nu")
    common.add_argument("--estimator", help="ML or CV")
    common.add_argument("--points", help="parameter points as ell:nu,ell:nu")
    common.add_argument("--map-type", dest="map_type", help="local or global (map)")
    common.add_argument("--n-starts", dest="n_starts", type=int,
                        help="optimizer multistart count")
    common.add_argument("--delta", type=float, help="epsilon step for second differences")
    common.add_argument("--budget-seconds", dest="budget_seconds", type=float,
                        help="wall-time budget")
    p = argparse.ArgumentParser(prog="perturbgp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sub.add_parser(kind, parents=[common], help=f"run the {kind} experiment")
    v = sub.add_parser("validate", parents=[common], help="check a configuration")
    v.add_argument("--kind", choices=KINDS, help="experiment kind to validate")
    return p


def _overrides(args):
    keys = ("seed", "n", "replicates", "eps", "out", "threads", "estimate", "estimator",
            "points", "map_type", "n_starts", "delta", "budget_seconds")
    out = {k: getattr(args, k) for k in keys}
    if args.command != "validate":
        out["kind"] = args.command
    elif getattr(args, "kind", None):
        out["kind"] = args.kind
    return out


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        diag = validate(cfg)
        print(json.dumps(diag, indent=2))
        return EXIT_CONFIG if diag["errors"] else EXIT_OK
    try:
        rows = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CellFailure as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_NUMERICAL
    except BudgetExceeded as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_BUDGET
    print(f"wrote {len(rows)} rows to {cfg.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
