"""Command line entry point: ``fsd replay | bench | oracle``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..geomatch import BACKEND
from .bench import bench
from .config import ConfigError, load_config
from .metrics import FORMATS, format_metrics
from .oracle import campaign_config, oracle_check
from .replay import replay
from .scenario import ParseError, parse_scenario


def _write_metrics(rows, args, default_stream):
    text = format_metrics(rows, args.metrics_format)
    if args.metrics_out:
        Path(args.metrics_out).write_text(text, encoding="utf-8")
    else:
        default_stream.write(text)


def cmd_replay(args) -> int:
    cfg = load_config(args.config)
    events = parse_scenario(Path(args.scenario).read_text(encoding="utf-8"))
    report = replay(events, cfg.geo)
    if args.out:
        Path(args.out).write_text(report.log, encoding="utf-8")
    else:
        sys.stdout.write(report.log)
    # the log owns stdout unless --out moved it
    _write_metrics(report.metrics(), args, sys.stdout if args.out else sys.stderr)
    return 0 if report.counts.conserved else 1


def cmd_bench(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    report = bench(cfg.gen, cfg.geo, seconds=args.seconds, seed=seed, rate=args.rate)
    _write_metrics(report.metrics(), args, sys.stdout)
    return 0


def cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    if args.scenario:
        targets = [(args.scenario, parse_scenario(Path(args.scenario).read_text(encoding="utf-8")))]
    else:
        first = cfg.seed if args.seed is None else args.seed
        targets = [(f"seed {s}", s) for s in range(first, first + args.count)]
    failures = 0
    rows = []
    for label, target in targets:
        if isinstance(target, int):
            gen = cfg.gen if cfg.custom_generator else campaign_config(target, args.full_size)
            result = oracle_check(target, cfg.geo, gen)
        else:
            result = oracle_check(target, cfg.geo)
        failures += not result.ok
        print(f"{label}: {result.summary()}", file=sys.stderr)
        rows.append((f"oracle.{label.replace(' ', '_')}.ok", int(result.ok), "bool"))
    rows.append(("oracle.failures", failures, "count"))
    _write_metrics(rows, args, sys.stdout)
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fsd", description="Geo-matching pipeline harness "
                                f"(distance kernels: {BACKEND})")
    p.add_argument("--metrics-format", choices=FORMATS, default="csv")
    p.add_argument("--metrics-out", metavar="F", help="write metrics here instead of a std stream")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("replay", help="replay a scenario file on a simulated clock")
    r.add_argument("scenario")
    r.add_argument("--config", metavar="F")
    r.add_argument("--out", metavar="F", help="write the action log here (default: stdout)")
    r.set_defaults(func=cmd_replay)

    b = sub.add_parser("bench", help="wall-clock benchmark on a generated workload")
    b.add_argument("--config", metavar="F")
    b.add_argument("--seconds", type=float, default=60.0)
    b.add_argument("--seed", type=int)
    b.add_argument("--rate", type=float, help="cap on admitted events per second")
    b.set_defaults(func=cmd_bench)

    o = sub.add_parser("oracle", help="check the pipeline against a brute-force twin")
    o.add_argument("scenario", nargs="?")
    o.add_argument("--seed", type=int)
    o.add_argument("--count", type=int, default=1, help="number of consecutive seeds")
    o.add_argument("--full-size", action="store_true",
                   help="10,000 candidates / 1,000 questions for every seed")
    o.add_argument("--config", metavar="F")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "scenario", None) and getattr(args, "seed", None) is not None \
            and args.command == "oracle":
        parser.error("oracle takes either --seed or a scenario file, not both")
    try:
        return args.func(args)
    except (ParseError, ConfigError, OSError) as err:
        print(f"fsd: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
