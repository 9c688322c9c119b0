"""Command-line harness.

    xchan run --config scenario.json [--seed N] [--trace out.jsonl] [--metrics out.json]
    xchan sweep --config scenario.json --channels 10:100:10
    xchan enumerate --config scenario.json --bound 12

Exit code 0 means every invariant assertion held during the run.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .contract import REFUNDED, SUCCESS
from .scenario import (
    ConfigError,
    ScenarioConfig,
    run_scaling_sweep,
    run_scenario,
    write_trace,
)


def _load(path: str) -> ScenarioConfig:
    try:
        return ScenarioConfig.from_json(path)
    except ConfigError as e:
        for v in e.violations:
            print("config error: %s" % v, file=sys.stderr)
        raise SystemExit(2)


def cmd_run(args) -> int:
    config = _load(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    metrics, trace = run_scenario(config)
    if args.trace:
        write_trace(trace, args.trace)
    if args.metrics:
        with open(args.metrics, "w") as fh:
            fh.write(metrics.to_json())
    print(metrics.to_json())
    return 0 if metrics.invariants_ok else 1


def cmd_sweep(args) -> int:
    config = _load(args.config)
    lo, hi, step = (int(x) for x in args.channels.split(":"))
    result = run_scaling_sweep(config, range(lo, hi + 1, step))
    print("channels  receipts  ticks  receipts_per_tick")
    for row in result.rows:
        print("%8d  %8d  %5d  %17.4f" % (row.channels, row.receipts, row.ticks, row.receipts_per_tick))
    print(
        "fit: slope=%.5f intercept=%.5f r2=%.5f single_channel_rate=%.5f"
        % (result.slope, result.intercept, result.r_squared, result.single_channel_rate)
    )
    return 0


def cmd_enumerate(args) -> int:
    from .atomicity import enumerate_close_phase

    config = _load(args.config)
    result = enumerate_close_phase(
        profile=args.profile,
        assist_enabled=config.assist_enabled,
        seed=config.seed,
        bound=args.bound,
    )
    print(json.dumps({
        "profile": args.profile,
        "assist_enabled": config.assist_enabled,
        "outcomes": sorted(",".join(o) for o in result.outcomes),
        "schedules": result.schedules,
    }, indent=2))
    bad = [o for o in result.outcomes if not _atomic(o)]
    return 0 if not bad else 1


def _atomic(outcome) -> bool:
    a, b = outcome
    return (a, b) in ((SUCCESS, SUCCESS), (REFUNDED, REFUNDED))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="xchan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--trace", default=None)
    p_run.add_argument("--metrics", default=None)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="throughput over channel counts")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--channels", default="10:100:10", help="lo:hi:step")
    p_sweep.set_defaults(func=cmd_sweep)

    p_enum = sub.add_parser("enumerate", help="exhaustive close-phase schedules")
    p_enum.add_argument("--config", required=True)
    p_enum.add_argument("--bound", type=int, default=12)
    p_enum.add_argument(
        "--profile",
        default="honest",
        choices=["honest", "withhold_pre", "delay_r", "delay_s", "withhold_delay"],
    )
    p_enum.set_defaults(func=cmd_enumerate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
