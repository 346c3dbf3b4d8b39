"""Command line front end.

Commands: run (one config or a canned experiment), sweep (cartesian
override grid), list-experiments, validate-config.  Exit codes: 0 success,
2 config problem, 3 functional mismatch, 4 internal protocol violation.
"""

import argparse
import sys
import traceback

from . import experiments, stats
from .config import ConfigError, apply_overrides, load_file, validate
from .engine import ProtocolError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISMATCH = 3
EXIT_PROTOCOL = 4


def _parser():
    p = argparse.ArgumentParser(
        prog="maco-sim",
        description="cycle-approximate multi-core matrix engine simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one config or a canned "
                                     "experiment set")
    run.add_argument("--config", help="YAML config path")
    run.add_argument("--experiment", help="canned experiment name")
    run.add_argument("--out", help="CSV path (config run) or output "
                                   "directory (experiment)")
    run.add_argument("--seed", type=int, help="override run.seed")
    run.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="SECTION.KEY=VALUE", help="config override, "
                     "repeatable")

    sw = sub.add_parser("sweep", help="run the cartesian product of "
                                      "override axes")
    sw.add_argument("--config", required=True)
    sw.add_argument("--axis", action="append", default=[],
                    metavar="SECTION.KEY=V1,V2,...", help="sweep axis, "
                    "repeatable")
    sw.add_argument("--out", required=True, help="output directory")
    sw.add_argument("--seed", type=int)
    sw.add_argument("--jobs", type=int, default=1,
                    help="parallel simulation instances")
    sw.add_argument("--set", dest="overrides", action="append", default=[],
                    metavar="SECTION.KEY=VALUE")

    sub.add_parser("list-experiments", help="show canned experiment names")

    val = sub.add_parser("validate-config", help="parse, validate, and "
                                                 "echo a config")
    val.add_argument("--config", required=True)
    val.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="SECTION.KEY=VALUE")
    return p


def _cmd_run(args):
    if bool(args.config) == bool(args.experiment):
        print("run needs exactly one of --config or --experiment",
              file=sys.stderr)
        return EXIT_CONFIG
    if args.experiment:
        out_dir = args.out or ("results/%s" % args.experiment)
        manifest = experiments.run_experiment(
            args.experiment, out_dir, seed=args.seed,
            overrides=args.overrides)
        failed = [m for m in manifest if m["status"] != "ok"]
        for entry in manifest:
            print("%-28s %-6s %s" % (entry["label"], entry["status"],
                                     entry.get("csv") or
                                     entry.get("error", "")))
        return EXIT_OK if not failed else EXIT_MISMATCH
    cfg = load_file(args.config)
    apply_overrides(cfg, args.overrides)
    if args.seed is not None:
        cfg.run.seed = args.seed
    validate(cfg)
    result = experiments.run_config(cfg, out_path=args.out)
    total = result.total
    print("elapsed %.6f ms, %.2f GFLOPS, efficiency %.4f"
          % (total["elapsed_seconds"] * 1e3, total["gflops"],
             total["efficiency"]))
    if result.csv_path:
        print("wrote %s" % result.csv_path)
    return EXIT_OK


def _cmd_sweep(args):
    manifest = experiments.sweep(args.config, args.axis, args.out,
                                 seed=args.seed, jobs=args.jobs,
                                 extra=args.overrides)
    for entry in manifest:
        print("%-10s %-6s %s" % (entry["label"], entry["status"],
                                 entry.get("csv") or
                                 entry.get("error", "")))
    bad = [m for m in manifest if m["status"] != "ok"]
    print("%d/%d runs ok, manifest in %s" % (len(manifest) - len(bad),
                                             len(manifest), args.out))
    return EXIT_OK if not bad else EXIT_MISMATCH


def _cmd_list(_args):
    for name, desc in experiments.list_experiments():
        print("%-20s %s" % (name, desc))
    return EXIT_OK


def _cmd_validate(args):
    cfg = load_file(args.config)
    apply_overrides(cfg, args.overrides)
    validate(cfg)
    for key, val in stats.flatten_config(cfg):
        print("%s=%s" % (key, val))
    return EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    handler = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "list-experiments": _cmd_list,
        "validate-config": _cmd_validate,
    }[args.command]
    try:
        return handler(args)
    except (ConfigError, FileNotFoundError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except experiments.FunctionalMismatch as exc:
        print("functional mismatch: %s" % exc, file=sys.stderr)
        return EXIT_MISMATCH
    except (ProtocolError, AssertionError):
        traceback.print_exc()
        return EXIT_PROTOCOL


if __name__ == "__main__":
    sys.exit(main())
