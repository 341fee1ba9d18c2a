"""Command-line interface: run experiments, tune, stress, dump edges."""

from __future__ import annotations

import argparse
import sys
from typing import Optional

from .harness import (CSV_COLUMNS, ExperimentSpec, audit_rows, emit_csv,
                      run_experiment, run_stress_suite)
from .policies import (Fixed, PolicyKind, Tuned, UniformRange, tune_stad)
from .workload import (RmatParams, SharedGraph, dump_edges, insertion_bodies,
                       rmat_edges)

_POLICY_NAMES = {k.value: k for k in PolicyKind}


class CliError(Exception):
    """Invalid arguments or values; maps to exit code 2."""


def _parse_range(text: str) -> UniformRange:
    parts = text.split(":")
    if len(parts) != 2:
        raise CliError(f"bad range {text!r}: expected LO:HI")
    try:
        lo, hi = int(parts[0]), int(parts[1])
    except ValueError:
        raise CliError(f"bad range {text!r}: LO and HI must be integers") from None
    try:
        return UniformRange(lo, hi)
    except ValueError as exc:
        raise CliError(f"bad range {text!r}: {exc}") from None


def _parse_int_list(text: str, flag: str) -> list:
    try:
        values = [int(p) for p in text.split(",") if p.strip() != ""]
    except ValueError:
        raise CliError(f"{flag} expects a comma-separated integer list") from None
    if not values or any(v < 1 for v in values):
        raise CliError(f"{flag} expects positive integers")
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hytmlab",
        description="Hybrid transactional memory laboratory over SSCA-2-style "
                    "graph kernels")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run kernels under one policy, emit CSV")
    run_p.add_argument("--policy", required=True, choices=sorted(_POLICY_NAMES),
                       help="synchronization policy")
    retry = run_p.add_mutually_exclusive_group()
    retry.add_argument("--retries", type=int, metavar="N",
                       help="fixed retry budget (Tuned for --policy stad)")
    retry.add_argument("--retry-range", metavar="LO:HI",
                       help="uniform per-section retry draw (rnd policy)")
    run_p.add_argument("--scale", type=int, default=10)
    run_p.add_argument("--edgefactor", type=int, default=8)
    run_p.add_argument("--threads", type=int, default=4)
    run_p.add_argument("--rcap", type=int, default=512,
                       help="read-set capacity in lines")
    run_p.add_argument("--wcap", type=int, default=64,
                       help="write-set capacity in lines")
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--runs", type=int, default=1)
    run_p.add_argument("--kernel", choices=("generate", "compute", "both"),
                       default="both")
    run_p.add_argument("--csv", metavar="PATH",
                       help="write CSV here (default: stdout)")
    run_p.add_argument("--spurious", type=float, default=0.0,
                       help="per-operation spurious abort probability")

    tune_p = sub.add_parser("tune", help="design-space sweep for the statically "
                                         "tuned policy")
    tune_p.add_argument("--ranges", default="1:20,20:50,50:100",
                        metavar="LO:HI,LO:HI,...")
    tune_p.add_argument("--trials", type=int, default=3)
    tune_p.add_argument("--scale", type=int, default=8)
    tune_p.add_argument("--edgefactor", type=int, default=8)
    tune_p.add_argument("--threads", type=int, default=4)
    tune_p.add_argument("--seed", type=int, default=0)

    stress_p = sub.add_parser("stress", help="counter-increment correctness "
                                             "suite across all nine policies")
    stress_p.add_argument("--threads", default="1,2,4,8",
                          metavar="N,N,...", help="thread counts to sweep")
    stress_p.add_argument("--increments", type=int, default=10000)
    stress_p.add_argument("--seeds", type=int, default=50,
                          help="number of seeds per configuration")

    dump_p = sub.add_parser("dump-edges", help="write an R-MAT edge list")
    dump_p.add_argument("--scale", type=int, required=True)
    dump_p.add_argument("--edgefactor", type=int, default=8)
    dump_p.add_argument("--seed", type=int, default=0)
    dump_p.add_argument("--out", metavar="PATH",
                        help="output file (default: stdout)")
    return parser


def _retry_spec_from_args(args) -> Optional[object]:
    kind = _POLICY_NAMES[args.policy]
    if args.retry_range is not None:
        if kind is not PolicyKind.HYTM_RND:
            raise CliError("--retry-range applies only to --policy rnd")
        return _parse_range(args.retry_range)
    if args.retries is not None:
        if args.retries < 0:
            raise CliError("--retries must be >= 0")
        if kind is PolicyKind.HYTM_RND:
            raise CliError("--policy rnd takes --retry-range, not --retries")
        return Tuned(args.retries) if kind is PolicyKind.HYTM_STAD \
            else Fixed(args.retries)
    return None


def _cmd_run(args) -> int:
    spec = ExperimentSpec(
        policy=_POLICY_NAMES[args.policy],
        retries=_retry_spec_from_args(args),
        scale=args.scale, edgefactor=args.edgefactor, n_threads=args.threads,
        r_cap=args.rcap, w_cap=args.wcap, spurious=args.spurious,
        seeds=(args.seed,), runs=args.runs, kernel=args.kernel)
    result = run_experiment(spec)
    problems = audit_rows([dict(zip(CSV_COLUMNS, r.as_record()))
                           for r in result.rows])
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            n = emit_csv(result, f)
        print(f"wrote {n} rows to {args.csv}")
    else:
        emit_csv(result, sys.stdout)
    if problems:
        for p in problems:
            print(f"audit: {p}", file=sys.stderr)
        return 1
    return 0


def _cmd_tune(args) -> int:
    ranges = [_parse_range(part) for part in args.ranges.split(",") if part]
    if not ranges:
        raise CliError("--ranges must list at least one LO:HI range")
    if args.trials < 1:
        raise CliError("--trials must be >= 1")
    params = RmatParams(scale=args.scale, edgefactor=args.edgefactor,
                        seed=args.seed)
    edges = rmat_edges(params)
    scratch = SharedGraph(None, args.scale, args.edgefactor)

    def body_generator(trial: int):
        # Wipe the scratch graph so every trial inserts into an empty one.
        scratch.reset()
        return insertion_bodies(scratch, edges)

    tuned = tune_stad(body_generator, scratch.heap, ranges, args.trials,
                      args.seed, n_threads=args.threads)
    print(str(tuned))
    return 0


def _cmd_stress(args) -> int:
    thread_counts = _parse_int_list(args.threads, "--threads")
    if args.increments < 1:
        raise CliError("--increments must be >= 1")
    if args.seeds < 1:
        raise CliError("--seeds must be >= 1")
    outcomes = run_stress_suite(thread_counts=thread_counts,
                                increments=args.increments,
                                n_seeds=args.seeds)
    failures = [o for o in outcomes if not o.ok]
    by_policy: dict = {}
    for o in outcomes:
        ok, total = by_policy.get(o.policy.value, (0, 0))
        by_policy[o.policy.value] = (ok + (1 if o.ok else 0), total + 1)
    for name in sorted(by_policy):
        ok, total = by_policy[name]
        print(f"{name:8s} {ok}/{total} runs correct")
    if failures:
        for f in failures[:10]:
            print(f"FAIL {f.policy.value} threads={f.n_threads} "
                  f"seed={f.seed}: {f.final_value} != {f.expected}",
                  file=sys.stderr)
        print(f"{len(failures)} failing runs", file=sys.stderr)
        return 1
    print(f"all {len(outcomes)} runs correct")
    return 0


def _cmd_dump_edges(args) -> int:
    params = RmatParams(scale=args.scale, edgefactor=args.edgefactor,
                        seed=args.seed)
    edges = rmat_edges(params)
    if args.out:
        with open(args.out, "w") as f:
            n = dump_edges(edges, f)
        print(f"wrote {n} edges to {args.out}")
    else:
        dump_edges(edges, sys.stdout)
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "tune": _cmd_tune,
    "stress": _cmd_stress,
    "dump-edges": _cmd_dump_edges,
}


def main(argv: Optional[list] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AssertionError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
