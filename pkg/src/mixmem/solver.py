"""Deterministic side of the construction: the inequality system on gamma
vectors, brute-force verification of the mixed-memory equations over all
Rademacher columns, separation constants and mixed-memory counts.

Classical and dense activations are handled in exact rational arithmetic.
The modern activation ``F(x) = exp(N*beta*x)`` is handled in the log domain
with the largest exponent factored out; its positive prefactor ``N*beta`` in
``F'`` never changes a sign and is dropped throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Sequence, Union

import numpy as np

from .mixtures import (
    Composition,
    GammaVector,
    MixtureVector,
    allowable_compositions,
    block_vector,
    gamma_all,
    gamma_vector,
    infer_gamma,
    multinomial_placements,
)
from .rademacher import ResourceError, build_matrix, max_n

# relative size below which a floating log-domain sum counts as an exact zero
MODERN_TIE_RTOL = 1e-12


@dataclass(frozen=True, order=True)
class SignedLog:
    """The real number ``sign * exp(log)``; ``sign == 0`` encodes zero."""

    sign: int
    log: float = -math.inf

    @classmethod
    def zero(cls) -> "SignedLog":
        return cls(0, -math.inf)

    def __float__(self) -> float:
        if self.sign == 0:
            return 0.0
        try:
            return self.sign * math.exp(self.log)
        except OverflowError:
            return self.sign * math.inf

    def key(self) -> tuple[int, float]:
        # total order consistent with the real value
        if self.sign > 0:
            return (1, self.log)
        if self.sign < 0:
            return (-1, -self.log)
        return (0, 0.0)

    def __str__(self) -> str:
        if self.sign == 0:
            return "0"
        return f"{'-' if self.sign < 0 else ''}exp({self.log:.12g})"


Scalar = Union[Fraction, SignedLog]


def _min_scalar(values: Sequence[Scalar]) -> Scalar:
    if isinstance(values[0], SignedLog):
        return min(values, key=SignedLog.key)
    return min(values)


@dataclass(frozen=True)
class ActivationSpec:
    """Which energy: ``classical`` (x^2/2), ``dense`` (x^p/p) or ``modern`` (exp(N beta x))."""

    variant: str
    p: int = 2
    beta: float | None = None
    N: int | None = None

    def __post_init__(self) -> None:
        if self.variant == "classical":
            object.__setattr__(self, "p", 2)
        elif self.variant == "dense":
            if int(self.p) != self.p or self.p < 3:
                raise ValueError(f"dense model needs an integer p >= 3, got {self.p}")
        elif self.variant == "modern":
            if self.beta is None or not self.beta > 0:
                raise ValueError("modern model needs beta > 0")
            if self.N is not None and self.N < 1:
                raise ValueError("modern model needs N >= 1")
        else:
            raise ValueError(f"unknown model variant {self.variant!r}")

    @classmethod
    def classical(cls) -> "ActivationSpec":
        return cls("classical")

    @classmethod
    def dense(cls, p: int) -> "ActivationSpec":
        return cls("dense", p=int(p))

    @classmethod
    def modern(cls, beta: float, N: int | None = None) -> "ActivationSpec":
        return cls("modern", beta=float(beta), N=None if N is None else int(N))

    @classmethod
    def parse(cls, text: str, N: int | None = None) -> "ActivationSpec":
        """``classical``, ``dense:<p>`` or ``modern:<beta>[,<N>]``."""
        name, _, args = text.partition(":")
        name = name.strip().lower()
        if name == "classical":
            if args:
                raise ValueError("classical takes no parameters")
            return cls.classical()
        if name == "dense":
            return cls.dense(int(args))
        if name == "modern":
            beta_s, _, n_s = args.partition(",")
            return cls.modern(float(beta_s), int(n_s) if n_s else N)
        raise ValueError(f"unknown model {text!r}")

    @property
    def exact(self) -> bool:
        return self.variant != "modern"

    @property
    def odd_derivative(self) -> bool:
        # x^(p-1) is odd iff p is even; exp is never odd
        return self.variant != "modern" and self.p % 2 == 0

    def with_N(self, N: int) -> "ActivationSpec":
        if self.variant != "modern" or self.N == N:
            return self
        return ActivationSpec.modern(self.beta, N)

    def require_N(self) -> int:
        if self.N is None:
            raise ValueError("modern model needs N for this operation")
        return self.N

    def F(self, x: float) -> float:
        if self.variant == "modern":
            return math.exp(self.require_N() * self.beta * x)
        return x**self.p / self.p

    def dF(self, x: Fraction) -> Fraction:
        """Exact derivative ``x**(p-1)`` for the polynomial models."""
        if self.variant == "modern":
            raise TypeError("modern derivative lives in the log domain; use exponent()")
        return Fraction(x) ** (self.p - 1)

    def exponent(self, x: Fraction) -> float:
        """``N*beta*x``, the log of the modern derivative without its prefactor."""
        return self.require_N() * self.beta * float(x)

    def f_value(self, x: Fraction) -> Scalar:
        if self.variant == "modern":
            return SignedLog(1, self.exponent(x))
        return self.dF(x)

    def label(self) -> str:
        if self.variant == "classical":
            return "classical"
        if self.variant == "dense":
            return f"dense:{self.p}"
        return f"modern:{self.beta:g}" + ("" if self.N is None else f",{self.N}")


def sign3(t: Fraction | int | float | SignedLog) -> int:
    if isinstance(t, SignedLog):
        return t.sign
    if t > 0:
        return 1
    if t < 0:
        return -1
    return 0


@dataclass(frozen=True)
class SystemVerdict:
    satisfied: bool
    margins: tuple[Scalar, ...]


def _modern_weighted_sum(coeffs: Sequence[int], exponents: Sequence[Fraction], scale: float) -> SignedLog:
    """Sign/log of ``sum c_r exp(scale * e_r)``, grouping equal exponents exactly."""
    groups: dict[Fraction, int] = {}
    for c, e in zip(coeffs, exponents):
        groups[e] = groups.get(e, 0) + c
    groups = {e: c for e, c in groups.items() if c != 0}
    if not groups:
        return SignedLog.zero()
    top = max(groups)
    total = 0.0
    largest = 0.0
    for e, c in groups.items():
        term = c * math.exp(scale * float(e - top))
        total += term
        largest = max(largest, abs(term))
    if abs(total) < MODERN_TIE_RTOL * largest:
        return SignedLog.zero()
    return SignedLog(1 if total > 0 else -1, scale * float(top) + math.log(abs(total)))


def system_margins(g: GammaVector, F: ActivationSpec) -> list[Scalar]:
    """Slacks ``2 f(g_k) - sum_{r>k} n_r f(g_r)`` for ``k = 1..l-1``."""
    parts = g.source.parts
    vals = g.values
    margins: list[Scalar] = []
    for k in range(len(vals) - 1):
        if F.exact:
            rhs = sum((parts[r] * F.dF(vals[r]) for r in range(k + 1, len(vals))), Fraction(0))
            margins.append(2 * F.dF(vals[k]) - rhs)
        else:
            coeffs = [2] + [-parts[r] for r in range(k + 1, len(vals))]
            exps = [vals[k]] + [vals[r] for r in range(k + 1, len(vals))]
            margins.append(_modern_weighted_sum(coeffs, exps, F.require_N() * F.beta))
    return margins


def satisfies_system(g: GammaVector, F: ActivationSpec) -> SystemVerdict:
    margins = system_margins(g, F)
    return SystemVerdict(all(sign3(m) > 0 for m in margins), tuple(margins))


def gamma_admissible(n: int, F: ActivationSpec) -> list[GammaVector]:
    return [g for g in gamma_all(n) if satisfies_system(g, F).satisfied]


def classical_closed_form(n: int) -> list[Composition]:
    """Compositions ``n1 + 2 + ... + 2 + n_last`` with ``n1`` even and ``n_last`` in {1,3,5}, plus ``(n)``."""
    if n < 3 or n % 2 == 0:
        raise ValueError(f"closed form needs an odd n >= 3, got {n}")
    found = {(n,)}
    for last in (1, 3, 5):
        twos = 0
        while True:
            first = n - last - 2 * twos
            if first < 2:
                break
            if first % 2 == 0:
                found.add((first,) + (2,) * twos + (last,))
            twos += 1
    return [Composition(p) for p in sorted(found, reverse=True)]


def canonical_set(comps: Sequence[Composition | GammaVector]) -> set[tuple[int, ...]]:
    out = set()
    for c in comps:
        comp = c.source if isinstance(c, GammaVector) else c
        out.add(comp.canonical().parts)
    return out


def modern_threshold_N(g: GammaVector, beta: float, N_max: int = 1 << 40) -> int | None:
    """Smallest ``N`` from which every modern margin of ``g`` stays positive.

    Each normalised margin ``2 - sum n_r exp(-N beta (g_k - g_r))`` is
    nondecreasing in ``N``; ``None`` means it never becomes positive.
    """
    parts = g.source.parts
    vals = g.values
    for k in range(len(vals) - 1):
        tied = sum(parts[r] for r in range(k + 1, len(vals)) if vals[r] == vals[k])
        if 2 - tied <= 0:
            return None

    def ok(N: int) -> bool:
        return satisfies_system(g, ActivationSpec.modern(beta, N)).satisfied

    if ok(1):
        return 1
    hi = 2
    while not ok(hi):
        hi *= 2
        if hi > N_max:
            return None
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


# --- brute force over the Rademacher columns -------------------------------------

def _support_coefficients(m: MixtureVector | Sequence) -> list[Fraction]:
    if isinstance(m, MixtureVector):
        return m.coefficients()
    return [Fraction(x) for x in m]


def _columns(n: int) -> np.ndarray:
    if n > max_n():
        raise ResourceError(f"support size {n} exceeds the matrix cap {max_n()}")
    return build_matrix(n).columns()


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


@dataclass(frozen=True)
class ColumnSums:
    """Inner products of every Rademacher column with ``f(m)``.

    Exact models: ``values`` are integers equal to the inner products times
    ``scale``.  Modern: ``values`` are floats equal to the inner products
    times ``exp(-top)``, with exact zeros where the grouped coefficients
    cancel and flagged ties set to 0.
    """

    columns: np.ndarray
    values: np.ndarray
    signs: np.ndarray
    scale: int = 1
    top: float = 0.0


def column_sums(coeffs: Sequence[Fraction], F: ActivationSpec) -> ColumnSums:
    n = len(coeffs)
    cols = _columns(n)
    if F.exact:
        f = [F.dF(c) for c in coeffs]
        scale = reduce(_lcm, (x.denominator for x in f), 1)
        ints = [int(x * scale) for x in f]
        bound = sum(abs(x) for x in ints)
        if bound < 2**62:
            values = cols.astype(np.int64) @ np.array(ints, dtype=np.int64)
        else:
            values = cols.astype(object) @ np.array(ints, dtype=object)
        signs = np.sign(values).astype(np.int64)
        return ColumnSums(cols, values, signs, scale)
    # modern: group equal coefficients so exact cancellations stay exact
    levels = sorted(set(coeffs), reverse=True)
    member = np.zeros((n, len(levels)), dtype=np.int64)
    for nu, c in enumerate(coeffs):
        member[nu, levels.index(c)] = 1
    grouped = cols.astype(np.int64) @ member
    exps = np.array([F.exponent(c) for c in levels])
    top = float(exps.max())
    weights = np.exp(exps - top)
    values = grouped @ weights
    largest = np.abs(grouped) @ weights
    tie = np.abs(values) < MODERN_TIE_RTOL * np.maximum(largest, np.finfo(float).tiny)
    values = np.where(tie, 0.0, values)
    signs = np.sign(values).astype(np.int64)
    return ColumnSums(cols, values, signs, 1, top)


def verify_fixed_point_equation(m: MixtureVector | Sequence, F: ActivationSpec) -> list[Fraction]:
    """Residuals ``m_nu - 2**-n sum_i r_nu,i sign(<r_i, f(m)>)`` over the support."""
    coeffs = _support_coefficients(m)
    n = len(coeffs)
    sums = column_sums(coeffs, F)
    d = 1 << n
    totals = sums.columns.astype(np.int64).T @ sums.signs
    return [coeffs[nu] - Fraction(int(totals[nu]), d) for nu in range(n)]


@dataclass(frozen=True)
class SeparationReport:
    exact_min: Scalar
    block_lower_bound: Scalar | None
    zero_hit: bool
    zero_columns: tuple[tuple[int, ...], ...] = field(default=())


def block_separation_bound(g: GammaVector, F: ActivationSpec) -> Scalar:
    """``min(min_k margin_k, f(g_last))``."""
    candidates = list(system_margins(g, F)) + [F.f_value(g.values[-1])]
    return _min_scalar(candidates)


def separation_constant(m: MixtureVector | Sequence, F: ActivationSpec) -> SeparationReport:
    coeffs = _support_coefficients(m)
    sums = column_sums(coeffs, F)
    absvals = np.abs(sums.values)
    zero_mask = sums.signs == 0
    zero_cols = tuple(tuple(int(x) for x in sums.columns[i]) for i in np.flatnonzero(zero_mask))
    if F.exact:
        exact_min: Scalar = Fraction(int(absvals.min()), sums.scale)
    else:
        lo = float(absvals.min())
        exact_min = SignedLog.zero() if lo == 0 else SignedLog(1, sums.top + math.log(lo))
    source = m.source if isinstance(m, MixtureVector) and m.source is not None else infer_gamma(coeffs)
    bound = block_separation_bound(source, F) if source is not None else None
    return SeparationReport(exact_min, bound, bool(zero_mask.any()), zero_cols)


# --- counting ----------------------------------------------------------------------

@dataclass(frozen=True)
class CountReport:
    n: int
    M: int
    exact_count: int
    lower_bound: int
    upper_bound: int
    A: Fraction
    sign_factor: int
    distinct_vectors: tuple[tuple[int, ...], ...]
    # variant that charges (2**n)**a sign patterns even when signs are invisible
    alt_sign_factor: int
    alt_A: Fraction
    alt_lower_bound: int
    alt_upper_bound: int

    @property
    def within_bounds(self) -> bool:
        return self.lower_bound <= self.exact_count <= self.upper_bound

    @property
    def within_alt_bounds(self) -> bool:
        return self.alt_lower_bound <= self.exact_count <= self.alt_upper_bound


def distinct_block_vectors(n: int, F: ActivationSpec) -> dict[tuple[int, ...], GammaVector]:
    """Admissible gamma vectors keyed by canonical composition (one per distinct vector)."""
    out: dict[tuple[int, ...], GammaVector] = {}
    for g in gamma_admissible(n, F):
        key = g.source.canonical().parts
        out.setdefault(key, gamma_vector(key))
    return out


def _value_multiplicities(g: GammaVector) -> list[int]:
    counts: dict[Fraction, int] = {}
    for v in g.coefficients():
        counts[v] = counts.get(v, 0) + 1
    return list(counts.values())


def _ceil(x: Fraction) -> int:
    return -((-x.numerator) // x.denominator)


def _floor(x: Fraction) -> int:
    return x.numerator // x.denominator


def count_mixed_memories(n: int, F: ActivationSpec, M: int) -> CountReport:
    """Distinct decorated mixture vectors with support size ``n`` among ``M`` patterns."""
    if M < n:
        raise ValueError(f"M={M} is smaller than n={n}")
    vectors = distinct_block_vectors(n, F)
    sign_factor = 2**n if F.odd_derivative else 1
    alt_sign_factor = (2**n) ** (1 if F.odd_derivative else 2)
    placements = 0
    inv_fact = Fraction(0)
    for g in vectors.values():
        mult = _value_multiplicities(g)
        placements += multinomial_placements(M, mult)
        inv_fact += Fraction(1, math.prod(math.factorial(c) for c in mult))
    exact = sign_factor * placements
    A = sign_factor * inv_fact
    alt_A = alt_sign_factor * inv_fact
    shrink = Fraction(M - n, M) ** (n - 1)
    return CountReport(
        n=n,
        M=M,
        exact_count=exact,
        lower_bound=_ceil(A * M**n * shrink),
        upper_bound=_floor(A * M**n),
        A=A,
        sign_factor=sign_factor,
        distinct_vectors=tuple(sorted(vectors, reverse=True)),
        alt_sign_factor=alt_sign_factor,
        alt_A=alt_A,
        alt_lower_bound=_ceil(alt_A * M**n * shrink),
        alt_upper_bound=_floor(alt_A * M**n),
    )


def enumerate_mixed_memories(n: int, F: ActivationSpec, M: int) -> set[tuple[Fraction, ...]]:
    """Brute-force set of all decorated vectors as dense tuples (small ``M`` only)."""
    from itertools import permutations, product

    out: set[tuple[Fraction, ...]] = set()
    sign_choices = list(product((1, -1), repeat=n)) if F.odd_derivative else [(1,) * n]
    for g in gamma_admissible(n, F):
        coeffs = g.coefficients()
        for targets in permutations(range(M), n):
            for signs in sign_choices:
                vec = [Fraction(0)] * M
                for t, s, c in zip(targets, signs, coeffs):
                    vec[t] = s * c
                out.add(tuple(vec))
    return out
