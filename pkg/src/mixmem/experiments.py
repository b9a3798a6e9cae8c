"""Capacity formulas and Monte Carlo stability campaigns.

Trial ``t`` of an experiment with base seed ``s`` at pattern count ``M``
draws its patterns from the seed derived from ``(s, M, t)``, so a sweep can
share one base seed across grid points and any thread count gives the same
numbers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction
from typing import Sequence

import numpy as np

from .mixtures import Composition, MixtureVector, block_vector, gamma_vector, infer_gamma, mixture_from_coefficients
from .network import (
    MapName,
    TiePolicy,
    build_mixed_memory,
    energy,
    is_fixed_point,
    partition_report,
    sample_patterns,
)
from .rademacher import max_n
from .solver import ActivationSpec, SignedLog, distinct_block_vectors, separation_constant

CSV_FIELDS = (
    "model",
    "N",
    "M",
    "n",
    "composition",
    "map",
    "trials",
    "fixed_fraction",
    "mean_violations",
    "max_abs_overlap_dev",
    "mean_energy",
    "seed",
)


# --- scalar functions -------------------------------------------------------------

def entropy_I(x: float) -> float:
    """``(1+x)/2 ln(1+x) + (1-x)/2 ln(1-x)`` with ``0 ln 0 = 0``."""
    x = float(x)
    if not -1.0 <= x <= 1.0:
        raise ValueError(f"entropy_I needs |x| <= 1, got {x}")

    def h(y: float) -> float:
        # (1 + y)/2 * ln(1 + y), via log1p so that small |x| keeps its precision
        return 0.0 if y == -1.0 else (1 + y) / 2 * math.log1p(y)

    return h(x) + h(-x)


def f_beta(beta: float) -> float:
    """``2 beta - ln cosh(2 beta)``, evaluated as ``ln 2 - log1p(exp(-4 beta))``."""
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    return math.log(2) - math.log1p(math.exp(-4 * beta))


def double_factorial_odd(p: int) -> int:
    """``(2p-3)!!``, the Gaussian moment of order ``2(p-1)``."""
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    return math.prod(range(2 * p - 3, 0, -2))


# --- capacity ---------------------------------------------------------------------

THEOREMS = ("classical_single", "classical_uniform", "dense_single", "dense_uniform", "modern", "modern_n1")


@dataclass(frozen=True)
class CapacityQuery:
    """Inputs for one capacity formula.

    The constant (``C`` for classical, ``C_p`` for dense, ``beta_c`` for
    modern) is taken from ``scalar`` when given, otherwise derived from
    ``m``; ``n`` defaults to the support size of ``m``.  ``C_const`` is the
    unspecified constant of the single-pattern modern bound.
    """

    theorem: str
    N: int
    n: int | None = None
    m: MixtureVector | None = None
    scalar: Fraction | float | None = None
    eps: float = 0.1
    p: int = 3
    beta: float = 1.0
    C_const: float = 3.0

    def __post_init__(self) -> None:
        if self.theorem not in THEOREMS:
            raise ValueError(f"unknown theorem {self.theorem!r}; choose from {THEOREMS}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if self.theorem.startswith("dense") and self.p < 3:
            raise ValueError("dense capacity needs p >= 3")
        if self.theorem.startswith("modern") and not self.beta > 0:
            raise ValueError("modern capacity needs beta > 0")

    @property
    def support_size(self) -> int:
        if self.n is not None:
            return self.n
        if self.m is not None:
            return self.m.n
        return 1


def separation_scalar(m: MixtureVector | Sequence[Fraction], F: ActivationSpec) -> Fraction:
    """Separation constant used in the capacity formulas.

    The certified lower bound ``min(margins, f(gamma_last))`` when ``m`` comes
    from a gamma vector, otherwise the brute-force minimum.
    """
    rep = separation_constant(m, F)
    value = rep.block_lower_bound if rep.block_lower_bound is not None else rep.exact_min
    if isinstance(value, SignedLog) or value <= 0:
        raise ValueError("separation constant is not positive; no capacity bound applies")
    return value


def beta_c(m: MixtureVector | Sequence[Fraction]) -> Fraction:
    """Smallest positive absolute coefficient."""
    coeffs = m.coefficients() if isinstance(m, MixtureVector) else [Fraction(c) for c in m]
    positive = [abs(c) for c in coeffs if c != 0]
    if not positive:
        raise ValueError("mixture has no nonzero coefficient")
    return min(positive)


def _uniform_constant(n: int, F: ActivationSpec) -> Fraction:
    vectors = distinct_block_vectors(n, F)
    if not vectors:
        raise ValueError(f"no admissible mixture of support {n} for {F.label()}")
    return min(separation_scalar(block_vector(g, n), F) for g in vectors.values())


def _floor_exp(x: float) -> int:
    """``floor(exp(x))`` as an exact integer, also far beyond float range."""
    if x < 0:
        return 0
    with localcontext() as ctx:
        ctx.prec = int(x / math.log(10)) + 30
        return int(Decimal(x).exp().to_integral_value(rounding="ROUND_FLOOR"))


def _scalar_for(q: CapacityQuery, F: ActivationSpec) -> Fraction:
    if q.scalar is not None:
        return Fraction(q.scalar)
    if q.theorem.endswith("uniform") and q.m is None:
        return _uniform_constant(q.support_size, F)
    if q.m is None:
        if q.support_size == 1:
            return Fraction(1)
        raise ValueError(f"{q.theorem} needs a mixture or an explicit scalar")
    return separation_scalar(q.m, F)


def theoretical_capacity(q: CapacityQuery) -> int:
    """Floor of the capacity bound ``M_max(N)`` for the chosen theorem."""
    N = q.N
    lnN = math.log(N)
    n = q.support_size
    if q.theorem.startswith("classical"):
        C = float(_scalar_for(q, ActivationSpec.classical()))
        extra = n if q.theorem == "classical_uniform" else 0
        return math.floor(C * C * N / (2 * (2 + extra + q.eps) * lnN))
    if q.theorem.startswith("dense"):
        C = float(_scalar_for(q, ActivationSpec.dense(q.p)))
        extra = n * (q.p - 1) if q.theorem == "dense_uniform" else 0
        # N**(p-1) stays an exact int; only the quotient is rounded
        value = Fraction(N ** (q.p - 1)) * Fraction(C * C) / Fraction(
            2 * (2 + extra + q.eps) * double_factorial_odd(q.p) * lnN
        )
        return math.floor(value)
    if q.theorem == "modern":
        bc = Fraction(q.scalar) if q.scalar is not None else (beta_c(q.m) if q.m is not None else Fraction(1))
        return _floor_exp(N * min(q.beta, 0.5) * (entropy_I(float(bc)) - q.eps))
    penalty = q.beta * math.sqrt((1 << n) / N) + q.C_const * lnN / N
    return _floor_exp(N * (f_beta(q.beta) - penalty))


# --- stability experiments --------------------------------------------------------

def trial_seed(seed: int, M: int, t: int) -> int:
    return int(np.random.SeedSequence([seed, M, t]).generate_state(1, dtype=np.uint64)[0])


@dataclass
class TrialRecord:
    seed: int
    fixed: bool
    violations: int
    tie_sites: int
    overlap_dev: float
    nonsupport_overlap: float
    energy: float
    reduced_disagreements: int
    partition_within: bool | None
    overlaps: list[float] = field(default_factory=list)


@dataclass
class ExperimentResult:
    model: str
    N: int
    M: int
    n: int
    composition: str
    map: str
    seed: int
    records: list[TrialRecord]

    @property
    def trials(self) -> int:
        return len(self.records)

    @property
    def fixed_fraction(self) -> float:
        return sum(r.fixed for r in self.records) / self.trials if self.records else 0.0

    @property
    def mean_violations(self) -> float:
        return float(np.mean([r.violations for r in self.records])) if self.records else 0.0

    @property
    def max_violations(self) -> int:
        return max((r.violations for r in self.records), default=0)

    @property
    def max_abs_overlap_dev(self) -> float:
        return max((r.overlap_dev for r in self.records), default=0.0)

    @property
    def mean_energy(self) -> float:
        return float(np.mean([r.energy for r in self.records])) if self.records else 0.0

    @property
    def reduced_agree_all(self) -> bool:
        return all(r.reduced_disagreements == 0 for r in self.records)

    def to_row(self) -> dict:
        return {
            "model": self.model,
            "N": self.N,
            "M": self.M,
            "n": self.n,
            "composition": self.composition,
            "map": self.map,
            "trials": self.trials,
            "fixed_fraction": self.fixed_fraction,
            "mean_violations": self.mean_violations,
            "max_abs_overlap_dev": self.max_abs_overlap_dev,
            "mean_energy": self.mean_energy,
            "seed": self.seed,
        }

    def to_dict(self) -> dict:
        out = self.to_row()
        out["max_violations"] = self.max_violations
        out["tie_sites"] = sum(r.tie_sites for r in self.records)
        out["reduced_disagreements"] = sum(r.reduced_disagreements for r in self.records)
        out["records"] = [asdict(r) for r in self.records]
        return out


def mixture_label(m: MixtureVector) -> str:
    if m.source is not None:
        return str(m.source.source)
    return ",".join(str(c) for c in m.coefficients())


def parse_mixture(text: str, M: int) -> MixtureVector:
    """``pattern``, a composition such as ``2+3``, or a coefficient list ``1/2,1/2,1/2``."""
    text = text.strip()
    if text == "pattern":
        return block_vector(gamma_vector((1,)), M)
    if "," in text or "/" in text:
        return mixture_from_coefficients([Fraction(x) for x in text.split(",")], M)
    parts = tuple(int(x) for x in text.split("+"))
    comp = Composition(parts)
    if not comp.allowable:
        raise ValueError(f"composition {comp} is not allowable")
    return block_vector(gamma_vector(comp), M)


def _one_trial(
    F: ActivationSpec,
    N: int,
    M: int,
    m: MixtureVector,
    map: MapName,
    seed: int,
    tie_policy: TiePolicy,
) -> TrialRecord:
    patterns = sample_patterns(M, N, seed)
    mem = build_mixed_memory(patterns, m, F)
    report = is_fixed_point(patterns, mem.config, F, map, tie_policy)
    q = patterns.dots(mem.config) / N
    support = m.support()
    targets = m.coefficients()
    dev = max(abs(q[mu - 1] - float(c)) for mu, c in zip(support, targets))
    rest = np.delete(q, np.asarray(support) - 1)
    within = partition_report(patterns, support).within if len(support) <= max_n() else None
    return TrialRecord(
        seed=seed,
        fixed=report.fixed,
        violations=report.violations,
        tie_sites=report.tie_sites + mem.tie_sites,
        overlap_dev=float(dev),
        nonsupport_overlap=float(np.abs(rest).max()) if rest.size else 0.0,
        energy=energy(patterns, mem.config, F),
        reduced_disagreements=mem.reduced_disagreements,
        partition_within=within,
        overlaps=[float(q[mu - 1]) for mu in support],
    )


def stability_experiment(
    model: ActivationSpec,
    N: int,
    M: int,
    mixture: MixtureVector,
    map: MapName = "gradient",
    trials: int = 10,
    seed: int = 0,
    threads: int = 1,
    tie_policy: TiePolicy = "keep",
) -> ExperimentResult:
    """Build the mixed memory on fresh patterns per trial and test it for stability."""
    n = mixture.n
    if M < n:
        raise ValueError(f"M={M} is smaller than the support size {n}")
    if max(mixture.support()) > M:
        raise ValueError(f"mixture support {mixture.support()} exceeds M={M}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    F = model.with_N(N) if model.variant == "modern" else model
    seeds = [trial_seed(seed, M, t) for t in range(trials)]

    def run(s: int) -> TrialRecord:
        return _one_trial(F, N, M, mixture, map, s, tie_policy)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(run, seeds))
    else:
        records = [run(s) for s in seeds]
    return ExperimentResult(F.label(), N, M, n, mixture_label(mixture), map, seed, records)


def capacity_sweep(
    model: ActivationSpec,
    N: int,
    mixture: MixtureVector,
    M_grid: Sequence[int],
    map: MapName = "gradient",
    trials: int = 10,
    seed: int = 0,
    threads: int = 1,
    tie_policy: TiePolicy = "keep",
) -> list[ExperimentResult]:
    grid = [int(M) for M in M_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("M_grid must be strictly ascending")
    return [
        stability_experiment(model, N, M, mixture, map, trials, seed, threads, tie_policy)
        for M in grid
    ]


def isotonic_decreasing(values: Sequence[float]) -> list[float]:
    """Least-squares non-increasing fit (pool adjacent violators)."""
    blocks: list[list[float]] = []  # [mean, weight]
    for v in values:
        blocks.append([float(v), 1.0])
        while len(blocks) > 1 and blocks[-2][0] < blocks[-1][0]:
            m2, w2 = blocks.pop()
            m1, w1 = blocks.pop()
            blocks.append([(m1 * w1 + m2 * w2) / (w1 + w2), w1 + w2])
    out: list[float] = []
    for mean, weight in blocks:
        out.extend([mean] * int(weight))
    return out


# --- energy gap -------------------------------------------------------------------

@dataclass
class EnergyGapResult:
    N: int
    M: int
    composition: str
    trials: int
    seed: int
    pattern_energies: list[float]
    mixture_energies: list[float]
    max_pattern_energies: list[float]
    upper_bound: float

    @property
    def mean_pattern_energy(self) -> float:
        return float(np.mean(self.pattern_energies))

    @property
    def mean_mixture_energy(self) -> float:
        return float(np.mean(self.mixture_energies))

    @property
    def gap(self) -> float:
        return self.mean_mixture_energy - self.mean_pattern_energy

    @property
    def ordered_fraction(self) -> float:
        """Share of trials where the mixture lies strictly above every pattern."""
        pairs = zip(self.mixture_energies, self.max_pattern_energies)
        return sum(e > top for e, top in pairs) / self.trials

    @property
    def within_bounds(self) -> bool:
        return -0.5 <= self.mean_mixture_energy <= self.upper_bound

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(
            mean_pattern_energy=self.mean_pattern_energy,
            mean_mixture_energy=self.mean_mixture_energy,
            gap=self.gap,
            ordered_fraction=self.ordered_fraction,
            within_bounds=self.within_bounds,
        )
        return out


def energy_gap_bound(m: MixtureVector) -> float:
    """``-exp(-2 eps)/pi`` with ``eps = 1/(6k)`` for a leading even block ``2k``.

    ``1/(6k)`` is the largest admissible value of the Stirling remainder,
    which makes this the weakest form of the bound.
    """
    g = m.source if m.source is not None else infer_gamma(m.coefficients())
    if g is None:
        raise ValueError("energy gap bound needs a mixture built from a gamma vector")
    parts = g.source.parts
    n1 = parts[0] if len(parts) > 1 else parts[0] - 1
    if n1 < 2:
        raise ValueError("energy gap bound needs support size >= 3")
    k = n1 // 2
    return -math.exp(-2 / (6 * k)) / math.pi


def energy_gap_experiment(
    N: int,
    M: int,
    mixture: MixtureVector,
    trials: int = 10,
    seed: int = 0,
) -> EnergyGapResult:
    """Classical energies of the stored patterns and of the mixed memory."""
    if M * 100 > N:
        raise ValueError(f"M={M} too large for the M << N regime (need M <= N/100)")
    if max(mixture.support()) > M:
        raise ValueError(f"mixture support exceeds M={M}")
    F = ActivationSpec.classical()
    bound = energy_gap_bound(mixture)
    pattern_e, mix_e, top_e = [], [], []
    for t in range(trials):
        patterns = sample_patterns(M, N, trial_seed(seed, M, t))
        per_pattern = [energy(patterns, patterns.pattern(mu), F) for mu in range(1, M + 1)]
        pattern_e.append(float(np.mean(per_pattern)))
        top_e.append(float(max(per_pattern)))
        mix_e.append(energy(patterns, build_mixed_memory(patterns, mixture, F).config, F))
    return EnergyGapResult(N, M, mixture_label(mixture), trials, seed, pattern_e, mix_e, top_e, bound)
