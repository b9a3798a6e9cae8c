"""Fixed-point fraction against M around the theoretical capacity.

    python scripts/capacity_curve.py --model classical --N 2000 --mixture 3
"""
import argparse
import csv
import sys

from mixmem.experiments import (
    CSV_FIELDS,
    CapacityQuery,
    capacity_sweep,
    isotonic_decreasing,
    parse_mixture,
    theoretical_capacity,
)
from mixmem.solver import ActivationSpec

THEOREM = {"classical": "classical_single", "dense": "dense_single", "modern": "modern"}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", default="classical")
    ap.add_argument("--N", type=int, default=2000)
    ap.add_argument("--mixture", default="3")
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--points", type=int, default=8)
    ap.add_argument("--map", default="gradient", choices=("gradient", "hk"))
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    F = ActivationSpec.parse(args.model)
    m = parse_mixture(args.mixture, args.N)
    q = CapacityQuery(THEOREM[F.variant], args.N, m=m, eps=0.5, p=F.p if F.variant == "dense" else 3, beta=F.beta or 1.0)
    m_max = theoretical_capacity(q)
    print(f"theoretical M_max = {m_max}", file=sys.stderr)

    top = max(2 * m_max, m.n + args.points)
    grid = sorted({max(m.n, round(m.n + k * (top - m.n) / (args.points - 1))) for k in range(args.points)})
    results = capacity_sweep(F, args.N, m, grid, args.map, args.trials, args.seed)
    smooth = isotonic_decreasing([r.fixed_fraction for r in results])

    out = csv.DictWriter(sys.stdout, fieldnames=(*CSV_FIELDS, "monotone_fraction"))
    out.writeheader()
    for r, s in zip(results, smooth):
        out.writerow({**r.to_row(), "monotone_fraction": f"{s:.4f}"})


if __name__ == "__main__":
    main()
