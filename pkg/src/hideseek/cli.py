"""Command line entry points: benchmark harness and learning smoke test.

Environment variable overrides (applied when the matching flag is absent):
  HIDESEEK_WORKERS      worker count (same as --workers)
  HIDESEEK_WAIT_POLICY  spin | yield (same as --wait-policy)
  HIDESEEK_UNPADDED     1 forces the unpadded_stride variant
"""

from __future__ import annotations

import argparse
import os
import sys

from .bench import BenchConfig, BenchError, VARIANTS, emit_report, run_benchmark
from .observation import ContractError, ObsMode
from .smoke import SmokeConfig, curve_to_csv, train_q_smoke
from .vecenv import WAIT_POLICIES

USAGE_EXIT = 2


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hideseek", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="throughput and ablation benchmark")
    b.add_argument("--envs", type=_int_list, default=(128,), help="comma-separated batch sizes")
    b.add_argument("--agents", type=_int_list, default=(1,), help="comma-separated agent counts")
    b.add_argument("--mode", default="Void", help="observation mode name or number")
    b.add_argument("--steps", type=int, default=100_000, help="env steps per measured repeat")
    b.add_argument("--workers", type=int, default=None, help="worker threads (0 = hardware)")
    b.add_argument("--wait-policy", choices=WAIT_POLICIES, default=None)
    b.add_argument("--variant", choices=VARIANTS, default="dense")
    b.add_argument("--repeats", type=int, default=6)
    b.add_argument("--warmup-s", type=float, default=5.0)
    b.add_argument("--out", default=None, help="write report here instead of stdout")
    b.add_argument("--format", choices=("csv", "markdown"), default="csv")

    s = sub.add_parser("smoke-train", help="tabular Q-learning smoke test")
    s.add_argument("--steps", type=int, default=200_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None, help="write the learning curve CSV here")
    return p


def _env_overrides(args) -> None:
    if args.workers is None:
        args.workers = int(os.environ.get("HIDESEEK_WORKERS", "0"))
    if args.wait_policy is None:
        args.wait_policy = os.environ.get("HIDESEEK_WAIT_POLICY", "yield")
    if os.environ.get("HIDESEEK_UNPADDED") == "1" and args.variant == "dense":
        args.variant = "unpadded_stride"


def _run_bench(args) -> int:
    _env_overrides(args)
    try:
        cfg = BenchConfig(
            envs=args.envs,
            agents=args.agents,
            mode=ObsMode.parse(args.mode),
            steps=args.steps,
            workers=args.workers,
            wait_policy=args.wait_policy,
            variant=args.variant,
            warmup_seconds=args.warmup_s,
            repeats=args.repeats,
        )
        cfg.validate()
    except (BenchError, ContractError) as e:
        print(f"hideseek bench: {e}", file=sys.stderr)
        return USAGE_EXIT
    report = run_benchmark(cfg)
    text = emit_report(report, args.format)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _run_smoke(args) -> int:
    if args.steps < 1:
        print("hideseek smoke-train: --steps must be >= 1", file=sys.stderr)
        return USAGE_EXIT
    cfg = SmokeConfig(steps=args.steps)
    curve = train_q_smoke(cfg, args.seed)
    text = curve_to_csv(curve)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "bench":
        return _run_bench(args)
    return _run_smoke(args)


if __name__ == "__main__":
    sys.exit(main())
