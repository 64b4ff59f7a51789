#!/usr/bin/env python3
"""Head/tail assumption measurements on synthetic families or KMV1 files.

Without --keys/--queries, runs the three measurements (max prefix ratio,
order-statistic ratios, ratio-vs-length curve) on seeded instances of the
clustered generator and on the attention-derived embedding generator
(through the kernel reduction).

Example on exported data:
    python scripts/run_assumption_checks.py --keys k.kmv --queries q.kmv \
        --sigma 3.1623 --json report.json
"""

import argparse
import json

import numpy as np

from kmv.core import GaussianKernel, KernelProblem, PointSet
from kmv.io import read_matrix
from kmv.reduction import AttentionInstance, reduce_instance
from kmv.synth import ClusteredSpec, clustered_embeddings, clustered_problem
from kmv.validator import validate_problem


def synthetic_suite(seed: int) -> dict:
    out = {}
    clustered = clustered_problem(ClusteredSpec(n=512, d=8), seed=seed)
    out["clustered"] = validate_problem(clustered, min_prefix=50).to_json_dict()

    q, k = clustered_embeddings(512, 64, seed=seed)
    red = reduce_instance(AttentionInstance(queries=PointSet(q), keys=PointSet(k)))
    out["reduced_embeddings"] = validate_problem(red.problem, min_prefix=50).to_json_dict()
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--keys", default="")
    ap.add_argument("--queries", default="")
    ap.add_argument("--sigma", type=float, default=1.0)
    ap.add_argument("--format", default="kmv1", choices=("kmv1", "csv"))
    ap.add_argument("--min-prefix", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", default="")
    args = ap.parse_args()

    if args.keys and args.queries:
        problem = KernelProblem(
            queries=PointSet(read_matrix(args.queries, args.format)),
            keys=PointSet(read_matrix(args.keys, args.format)),
            kernel=GaussianKernel(args.sigma),
        )
        blob = validate_problem(problem, min_prefix=args.min_prefix).to_json_dict()
    else:
        blob = synthetic_suite(args.seed)

    print(json.dumps(blob, indent=2)[:2000])
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(blob, fh, indent=2)
        print(f"wrote {args.json}")


if __name__ == "__main__":
    main()
