"""Command line: ``orbitstat <experiment> [--config FILE] [--set key=value]...``.

Exit codes: 0 success, 1 criterion failure, 2 config error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import sys
import traceback
import warnings

from .config import EXPERIMENTS, ConfigError, load_config

warnings.filterwarnings("ignore", message="The TBB threading layer")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="orbitstat", description="Lattice orbit-sampling experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="TOML configuration file")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (TOML value syntax); repeatable")
        s.add_argument("--out", help="output directory")
        s.add_argument("--workers", type=int, help="worker threads")
        s.add_argument("--seed", type=int, help="base seed (u64)")
        s.add_argument("--family", help="lattice family")
        s.add_argument("--model", help="space model")
        s.add_argument("--stabilizer", help="stabilizer model")
        s.add_argument("--t", type=float, help="height")
        s.add_argument("--count-only", action="store_true", default=None, help="enum-ball: print the count only")
        s.add_argument("--traceback", action="store_true", help="print tracebacks on runtime errors")
    v = sub.add_parser("verify", help="recompute output digests of a run")
    v.add_argument("run_dir")
    c = sub.add_parser("compare", help="compare the CSV outputs of two runs")
    c.add_argument("run_a")
    c.add_argument("run_b")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "verify":
        from .harness import verify
        try:
            bad = verify(args.run_dir)
        except (OSError, ValueError, KeyError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        for name in bad:
            print(f"digest mismatch: {name}")
        print("ok" if not bad else f"{len(bad)} file(s) changed")
        return EXIT_OK if not bad else EXIT_FAIL
    if args.command == "compare":
        from .harness import compare_runs
        try:
            rep = compare_runs(args.run_a, args.run_b)
        except (OSError, ValueError, KeyError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        for e in rep.entries:
            flag = "ok " if e.within_tolerance else "BAD"
            print(f"{flag} {e.file}:{e.row}:{e.column} {e.a} -> {e.b} (rel {e.rel_diff:.3g})")
        print("no differences" if rep.empty else f"{len(rep.entries)} difference(s), {len(rep.flagged)} flagged")
        return EXIT_OK if not rep.flagged else EXIT_FAIL

    extra = {"out": args.out, "workers": args.workers, "seed": args.seed, "family": args.family,
             "model": args.model, "stabilizer": args.stabilizer, "t": args.t, "count_only": args.count_only}
    try:
        cfg = load_config(args.config, args.set, experiment=args.command, extra=extra)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "enum-ball" and cfg["count_only"] and args.out is None:
        # pure query: no files written
        from .arithmetic_groups import GroupSpec, ball_count
        try:
            print(ball_count(GroupSpec(cfg["family"]), cfg["t"]))
        except (OverflowError, ValueError) as e:
            print(f"runtime error: {e}", file=sys.stderr)
            return EXIT_RUNTIME
        return EXIT_OK

    from .harness import run
    try:
        manifest = run(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # module errors carry their own context
        if args.traceback:
            traceback.print_exc()
        print(f"runtime error in {cfg.experiment}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    summary = manifest.summary
    if cfg.experiment == "enum-ball":
        print(summary["count"])
    elif cfg.experiment == "accept":
        for c in summary["criteria"]:
            print(c["line"])
        return EXIT_OK if summary["passed"] else EXIT_FAIL
    else:
        print(json.dumps({k: v for k, v in summary.items() if k != "base_points"}, indent=2)[:4000])
        print(f"outputs written to {cfg['out'] if args.out is None else args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
