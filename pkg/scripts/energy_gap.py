"""Energy of stored patterns against a mixed memory, over increasing N."""
import argparse

from mixmem.experiments import energy_gap_bound, energy_gap_experiment, parse_mixture


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--M", type=int, default=13)
    ap.add_argument("--mixture", default="3")
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--sizes", type=int, nargs="+", default=[1500, 4000, 10000])
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    m = parse_mixture(args.mixture, args.M)
    print(f"upper bound on mixture energy: {float(energy_gap_bound(m)):.4f}")
    print(f"{'N':>7} {'E(pattern)':>11} {'E(mixture)':>11} {'gap':>8} {'ordered':>8}")
    for N in args.sizes:
        r = energy_gap_experiment(N, args.M, m, args.trials, args.seed)
        print(f"{N:>7} {r.mean_pattern_energy:>11.4f} {r.mean_mixture_energy:>11.4f} "
              f"{r.gap:>8.4f} {r.ordered_fraction:>8.0%}")


if __name__ == "__main__":
    main()
