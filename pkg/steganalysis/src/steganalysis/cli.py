"""Command line for the SVM detection harness.

    steganalysis --csv features.csv --kernel both --train-pairs 50 \
                 --test-pairs 10 --seed 0 [--json report.json]

Prints one report line per kernel; --json additionally writes the combined
report. Exit codes: 0 success, 2 input I/O, 3 schema violation, 4 bad
options.
"""

from __future__ import annotations

import argparse
import sys

from .harness import KERNELS, HarnessError, InputError, reports_to_json, train_eval


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steganalysis",
        description="Train SVM detectors on a labeled weight-feature CSV "
        "and report held-out accuracy.",
    )
    parser.add_argument("--csv", required=True, help="feature CSV (label,f0001,...)")
    parser.add_argument(
        "--kernel",
        default="both",
        choices=[*KERNELS, "both"],
        help="SVM kernel (default: both)",
    )
    parser.add_argument("--train-pairs", type=int, default=50)
    parser.add_argument("--test-pairs", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0, help="split shuffle seed")
    parser.add_argument("--json", help="also write a JSON report here")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    kernels = list(KERNELS) if args.kernel == "both" else [args.kernel]
    try:
        reports = [
            train_eval(
                args.csv,
                split=(args.train_pairs, args.test_pairs),
                kernel=k,
                seed=args.seed,
            )
            for k in kernels
        ]
        for report in reports:
            print(report.to_text())
        if args.json:
            try:
                with open(args.json, "w", encoding="utf-8") as fh:
                    fh.write(reports_to_json(args.csv, reports))
            except OSError as exc:
                raise InputError(f"cannot write report {args.json}: {exc}") from exc
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
