"""Command line entry point: ``hocbf train | rollout | eval | demo``."""

from __future__ import annotations

import argparse
import sys

from . import experiments as ex
from .residual_learner import CheckpointError
from .scenario import ParseError, ValidationError


def _triple(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected x,y,theta")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not numeric: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hocbf", description="Barrier-filtered differential drive experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="fit per-barrier estimators and write a checkpoint")
    tr.add_argument("cfg", help="scenario file or bundled scenario name")
    tr.add_argument("-o", "--output", required=True, help="checkpoint path (loss CSV written alongside)")

    ro = sub.add_parser("rollout", help="simulate one trajectory and write it as CSV")
    ro.add_argument("cfg")
    ro.add_argument("--model", help="checkpoint; omit for the nominal filter")
    ro.add_argument("--init", required=True, type=_triple, metavar="X,Y,THETA",
                    help="initial state; write --init=-2.5,-2.5,0 when x is negative")
    ro.add_argument("-o", "--output", required=True)

    ev = sub.add_parser("eval", help="safe-rate evaluation over seeded initial states")
    ev.add_argument("cfg")
    ev.add_argument("--model", help="checkpoint; omit for the nominal filter")
    ev.add_argument("-n", type=int, default=50, help="number of rollouts (default 50)")
    ev.add_argument("--seed", type=int, default=None, help="sampling seed (default: scenario seed)")
    ev.add_argument("--workers", type=int, default=1)
    ev.add_argument("-o", "--output", required=True, help="key=value report path")

    de = sub.add_parser("demo", help="built-in demonstrations")
    de.add_argument("which", choices=["counterexamples"])
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            result = ex.run_train(args.cfg, args.output)
            tails = [f"{sum(l[-100:]) / max(len(l[-100:]), 1):.3e}" for l in result.losses]
            print(f"wrote {args.output} and {ex.loss_csv_path(args.output)}")
            print(f"updates {len(result.losses[0]) if result.losses else 0}, recent loss {' '.join(tails)}")
        elif args.command == "rollout":
            log = ex.run_rollout(args.cfg, args.model, args.init, args.output)
            print(f"wrote {args.output}: {len(log) - 1} steps, reason {log.reason}, min h {log.min_h:.5f}")
        elif args.command == "eval":
            report = ex.run_eval(args.cfg, args.model, args.n, args.seed, args.workers)
            ex.write_report(report, args.output)
            print(report.table())
        else:
            print(f"{'x0':>6} {'h(x0)':>9} {'t(h<=0)':>9} {'min h, Lipschitz, 10x horizon':>30}")
            for row in ex.counterexample_table():
                print(f"{row['x0']:>6.2f} {row['h0']:>9.4f} {row['t_hit']:>9.3f} {row['lipschitz_min_h']:>30.3e}")
    except (ParseError, ValidationError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
