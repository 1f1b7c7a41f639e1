"""``agentry-bench`` command line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Any, Callable

from agentry.bench import scenarios
from agentry.bench.config import ExchangeMode
from agentry.bench.records import write_csv


def _sizes(text: str) -> list[int]:
    sizes = [int(float(s)) for s in text.split(",") if s]
    if sizes != sorted(sizes):
        raise argparse.ArgumentTypeError("payload sizes must be sorted ascending")
    return sizes


def _ints(text: str) -> list[int]:
    return [int(s) for s in text.split(",") if s]


def _reps(text: str) -> int:
    n = int(text)
    if n < 3:
        raise argparse.ArgumentTypeError("repetitions must be at least 3")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="agentry-bench", description="Agent middleware microbenchmarks.")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="scenario", required=True)

    def add(name: str, help: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--csv", help="write records to this CSV file")
        sp.add_argument("--append", action="store_true", help="append to the CSV file")
        return sp

    modes = [m.value for m in ExchangeMode]

    sp = add("startup", "warm start time for n agents")
    sp.add_argument("-n", "--agents", type=int, default=1)
    sp.add_argument("--repetitions", type=_reps, default=10)

    sp = add("weak-scaling", "fixed sleep work per agent against agent count")
    sp.add_argument("--agents", type=_ints, default=[1, 8, 64])
    sp.add_argument("--actions", type=int, default=30)
    sp.add_argument("--sleep", type=float, default=1.0)

    sp = add("latency", "no-op round trip against payload size")
    sp.add_argument("--sizes", type=_sizes, default=[10, 1_000, 10_000, 100_000, 1_000_000])
    sp.add_argument("--mode", choices=modes, default="dist-direct")
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--inject-latency-ms", type=float, default=0.0)
    sp.add_argument("--in-process", action="store_true", help="run the agent in a thread")

    sp = add("throughput", "bag of no-op actions over a worker pool")
    sp.add_argument("--workers", type=int, default=8)
    sp.add_argument("--tasks", type=int, default=5000)
    sp.add_argument("--repetitions", type=_reps, default=5)
    sp.add_argument("--mode", choices=modes, default="local")
    sp.add_argument("--no-multiplex", action="store_true", help="one listener per handle")

    sp = add("multiplex", "throughput with and without handle multiplexing")
    sp.add_argument("--handles", type=int, default=32)
    sp.add_argument("--tasks", type=int, default=5000)
    sp.add_argument("--repetitions", type=_reps, default=5)
    sp.add_argument("--mode", choices=modes, default="local")

    sp = add("chain", "data passed through a chain of agents")
    sp.add_argument("-n", "--agents", type=int, default=4)
    sp.add_argument("--payload", type=int, default=10_000_000)
    sp.add_argument("--baseline", action="store_true", help="pass data by value")
    sp.add_argument("--repetitions", type=_reps, default=3)
    sp.add_argument("--inject-latency-ms", type=float, default=0.0)

    sp = add("reference", "large no-op action by value against by reference")
    sp.add_argument("--payload", type=int, default=10_000_000)
    sp.add_argument("--inject-latency-ms", type=float, default=30.0)
    sp.add_argument("--repetitions", type=_reps, default=7)

    sp = add("conversation", "two agents exchanging messages")
    sp.add_argument("--rounds", type=int, default=10)
    sp.add_argument("--size", type=int, default=1_000)
    sp.add_argument("--mode", choices=modes, default="dist-direct")
    sp.add_argument("--repetitions", type=_reps, default=5)

    sp = add("memory", "resident memory against agent count")
    sp.add_argument("--counts", type=_ints, default=[0, 1, 2, 4, 8, 16])
    sp.add_argument("--launchers", default="thread,subprocess")
    sp.add_argument("--settle", type=float, default=0.5)

    sp = add("pipeline", "four-stage pipeline with by-reference handoff")
    sp.add_argument("--items", type=int, default=100)
    sp.add_argument("--size", type=int, default=200_000)
    sp.add_argument("--kill", action="store_true", help="kill the validator mid-run")
    sp.add_argument("--trace", help="keep the JSON-lines trace at this path")
    return p


def _run(args: argparse.Namespace) -> scenarios.ScenarioResult:
    s = args.scenario
    calls: dict[str, Callable[[], Any]] = {
        "startup": lambda: scenarios.startup(args.agents, args.repetitions),
        "weak-scaling": lambda: scenarios.weak_scaling(args.agents, args.actions, args.sleep),
        "latency": lambda: scenarios.latency(
            args.sizes, args.mode, args.trials, args.inject_latency_ms, processes=not args.in_process
        ),
        "throughput": lambda: scenarios.throughput(
            args.workers, args.tasks, args.repetitions, args.mode, multiplex=not args.no_multiplex
        ),
        "multiplex": lambda: scenarios.multiplex_ablation(args.handles, args.tasks, args.repetitions, args.mode),
        "chain": lambda: scenarios.chain(
            args.agents, args.payload, not args.baseline, args.repetitions, args.inject_latency_ms
        ),
        "reference": lambda: scenarios.reference(args.payload, args.inject_latency_ms, args.repetitions),
        "conversation": lambda: scenarios.conversation(args.rounds, args.size, args.mode, args.repetitions),
        "memory": lambda: scenarios.memory(args.counts, args.launchers.split(","), args.settle),
        "pipeline": lambda: scenarios.pipeline(args.items, args.size, args.kill, trace_path=args.trace),
    }
    return calls[s]()


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s %(message)s")
    try:
        result = _run(args)
    except ValueError as exc:
        parser.error(str(exc))
    for record in result.records:
        print(f"{record.scenario:<13} {record.metric:<28} {record.value:>14.6g} {record.unit:<10} {record.parameters}")
    for check in result.checks:
        print(check.line())
    if args.csv:
        write_csv(result.records, args.csv, append=args.append)
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
