"""Print admissible compositions per model and odd n, with separation constants."""
import argparse

from mixmem.mixtures import block_vector
from mixmem.solver import ActivationSpec, classical_closed_form, canonical_set, gamma_admissible, separation_constant


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-n", type=int, default=11)
    ap.add_argument("--models", nargs="+", default=["classical", "dense:3", "dense:4"])
    args = ap.parse_args()

    for label in args.models:
        F = ActivationSpec.parse(label)
        print(f"== {label}")
        for n in range(1, args.max_n + 1, 2):
            admissible = gamma_admissible(n, F)
            names = []
            for g in admissible:
                sep = separation_constant(block_vector(g, n).coefficients(), F)
                names.append(f"{g.source}(C={sep.exact_min})")
            extra = ""
            if F.variant == "classical" and n >= 3:
                extra = "  closed form ok" if canonical_set(admissible) == canonical_set(classical_closed_form(n)) else "  CLOSED FORM MISMATCH"
            print(f"n={n:>2}: {', '.join(names)}{extra}")


if __name__ == "__main__":
    main()
