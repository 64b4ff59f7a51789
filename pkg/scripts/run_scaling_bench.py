#!/usr/bin/env python3
"""Wall-clock scaling experiment: exact vs approximate product on the
clustered synthetic family, with optional JSON/SVG outputs.

Example:
    python scripts/run_scaling_bench.py --sizes 1024,2048,4096,8192 \
        --d 64 --eps 0.5 --json bench.json --svg ratio.svg
"""

import argparse

from kmv.bench import run_scaling_bench, write_ratio_svg


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="1024,2048,4096,8192")
    ap.add_argument("--d", type=int, default=64)
    ap.add_argument("--eps", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--estimator", default="hashing_based",
                    choices=("exact", "uniform_sampling", "hashing_based"))
    ap.add_argument("--uniform-budget", action="store_true",
                    help="flat per-row budgets instead of adaptive ones")
    ap.add_argument("--json", default="")
    ap.add_argument("--svg", default="")
    args = ap.parse_args()

    report = run_scaling_bench(
        [int(s) for s in args.sizes.split(",") if s],
        d=args.d,
        eps=args.eps,
        seed=args.seed,
        repeats=args.repeats,
        estimator_kind=args.estimator,
        uniform_budget=args.uniform_budget,
    )
    print(report.to_text())
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(report.to_json(indent=2))
        print(f"wrote {args.json}")
    if args.svg:
        write_ratio_svg(report, args.svg)
        print(f"wrote {args.svg}")


if __name__ == "__main__":
    main()
