"""Command line front end: run traces, generate corpora, run experiments.

Exit codes: 0 for a clean halt, 1 when a bug is reported, 2 for usage,
parse, or I/O errors.  The MTESIM_SEED environment variable supplies a
default seed; an explicit --seed always wins.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import List, Optional, Tuple

from .allocator import AllocationError
from .cpu import TraceRuntimeError
from .detector import ProtocolError
from .experiments import (
    exp_collision_rate,
    exp_detection_rate,
    exp_recovery_transparency,
    exp_vulnerable_fraction,
    uniform_sizes,
)
from .runner import ALWAYS_ARM, SimConfig, run_program
from .trace import (
    TraceParseError,
    WorkloadError,
    WorkloadSpec,
    generate_workload,
    parse_program,
    render_program,
)

EXIT_CLEAN = 0
EXIT_BUG = 1
EXIT_USAGE = 2


def _default_seed() -> int:
    env = os.environ.get("MTESIM_SEED")
    return int(env) if env else 0


def _parse_sizes(text: str) -> Tuple[Tuple[int, float], ...]:
    out = []
    for part in text.split(","):
        size, _, weight = part.partition(":")
        out.append((int(size), float(weight) if weight else 1.0))
    return tuple(out)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=["off", "async", "sync"], default="sync")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sampling-rate", type=int, default=1000)
    p.add_argument("--alloc-threshold", type=int, default=1000)
    p.add_argument("--access-threshold", type=int, default=64)
    p.add_argument("--no-tripwires", action="store_true")
    p.add_argument("--overread-skip", action="store_true")
    p.add_argument("--no-odd-even", action="store_true")
    p.add_argument("--large-threshold", type=int, default=65536)
    p.add_argument("--include-zero-tag", action="store_true")
    p.add_argument("--always-arm", action="store_true",
                   help="arm every short granule (no sampling phase)")


def _config_from_args(args) -> SimConfig:
    seed = args.seed if args.seed is not None else _default_seed()
    return SimConfig(
        mode=args.mode,
        seed=seed,
        sampling_rate=args.sampling_rate,
        alloc_threshold=ALWAYS_ARM if args.always_arm else args.alloc_threshold,
        access_threshold=args.access_threshold,
        tripwires=not args.no_tripwires,
        overread_skip=args.overread_skip,
        odd_even=not args.no_odd_even,
        large_threshold=args.large_threshold,
        include_zero_tag=args.include_zero_tag,
    )


def cmd_run(args) -> int:
    try:
        text = Path(args.trace).read_text()
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        program = parse_program(text)
    except TraceParseError as e:
        print(f"error: {args.trace}: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = run_program(program, _config_from_args(args))
    except (AllocationError, TraceRuntimeError, ProtocolError) as e:
        print(f"error: {args.trace}: {e}", file=sys.stderr)
        return EXIT_USAGE
    payload = report.to_json()
    if args.report:
        Path(args.report).write_text(payload + "\n")
    else:
        print(payload)
    return report.exit_code


def cmd_gen(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    try:
        spec = WorkloadSpec(
            kind=args.kind,
            size_distribution=_parse_sizes(args.sizes),
            count=args.count,
            seed=seed,
            preamble_allocs=args.preamble,
            adjacent=not args.non_adjacent,
            reuse_cycles=args.reuse_cycles,
            accesses=args.accesses,
        )
        programs = generate_workload(spec)
    except (WorkloadError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    kind_dir = out / spec.kind
    try:
        kind_dir.mkdir(parents=True, exist_ok=True)
        for i, program in enumerate(programs):
            (kind_dir / f"{i:05d}.mtr").write_text(render_program(program))
        manifest = {
            "kind": spec.kind,
            "seed": spec.seed,
            "count": spec.count,
            "size_distribution": [list(sw) for sw in spec.size_distribution],
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    print(f"wrote {len(programs)} programs to {kind_dir}")
    return EXIT_CLEAN


def cmd_exp(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    config = _config_from_args(args)
    if args.experiment == "detection":
        try:
            spec = WorkloadSpec(
                kind=args.kind,
                size_distribution=_parse_sizes(args.sizes),
                seed=seed,
                adjacent=not args.non_adjacent,
                reuse_cycles=args.reuse_cycles,
            )
            result = exp_detection_rate(args.kind, config, args.trials, seed, spec)
        except (WorkloadError, ValueError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_USAGE
        print(result.to_json())
    elif args.experiment == "collision":
        result = exp_collision_rate(args.trials, seed, include_zero=args.include_zero_tag)
        print(result.to_json())
    elif args.experiment == "vulnerable-fraction":
        if args.uniform:
            lo, hi = (int(x) for x in args.uniform.split(":"))
            dist = uniform_sizes(lo, hi)
        else:
            dist = list(_parse_sizes(args.sizes))
        fraction = exp_vulnerable_fraction(dist, args.trials, seed)
        print(json.dumps({"name": "vulnerable_fraction", "trials": args.trials,
                          "fraction": fraction, "seed": seed}, indent=2))
    elif args.experiment == "transparency":
        spec = WorkloadSpec(kind="benign", size_distribution=_parse_sizes(args.sizes),
                            count=args.trials, seed=seed)
        result = exp_recovery_transparency(generate_workload(spec), config, seed)
        print(json.dumps(result.to_json_dict(), indent=2))
        return EXIT_CLEAN if result.passed else EXIT_BUG
    return EXIT_CLEAN


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtesim",
                                     description="tagged-memory machine simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a trace program")
    p_run.add_argument("trace")
    p_run.add_argument("--report", help="write the run report JSON here instead of stdout")
    _add_config_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_gen = sub.add_parser("gen", help="generate a workload corpus")
    p_gen.add_argument("--kind", required=True,
                       choices=["intra", "cross", "uaf", "double_free", "benign"])
    p_gen.add_argument("--count", type=int, default=100)
    p_gen.add_argument("--seed", type=int, default=None)
    p_gen.add_argument("--sizes", default="24:1,40:1,47:1,64:1")
    p_gen.add_argument("--out", default="corpus")
    p_gen.add_argument("--preamble", type=int, default=4)
    p_gen.add_argument("--non-adjacent", action="store_true")
    p_gen.add_argument("--reuse-cycles", type=int, default=0)
    p_gen.add_argument("--accesses", type=int, default=8)
    p_gen.set_defaults(func=cmd_gen)

    p_exp = sub.add_parser("exp", help="run a statistical experiment")
    p_exp.add_argument("experiment",
                       choices=["detection", "collision", "vulnerable-fraction", "transparency"])
    p_exp.add_argument("--kind", default="intra",
                       choices=["intra", "cross", "uaf", "double_free", "benign"])
    p_exp.add_argument("--trials", type=int, default=1000)
    p_exp.add_argument("--sizes", default="24:1,40:1,47:1,64:1")
    p_exp.add_argument("--uniform", help="uniform size range lo:hi (vulnerable-fraction)")
    p_exp.add_argument("--non-adjacent", action="store_true")
    p_exp.add_argument("--reuse-cycles", type=int, default=0)
    _add_config_flags(p_exp)
    p_exp.set_defaults(func=cmd_exp)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else 0
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
