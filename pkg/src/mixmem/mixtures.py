"""Mixture coefficients: alpha values, allowable compositions, gamma vectors,
block vectors and their decorations.

All coefficients are :class:`fractions.Fraction`; nothing here touches floats.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb
from typing import Iterable, Iterator, Mapping, Sequence


@lru_cache(maxsize=None)
def alpha(s: int) -> Fraction:
    """Overlap level of the symmetric ``s``-mixture, ``2**(1-s) * C(s-1, (s-1)//2)``."""
    if s < 1:
        raise ValueError(f"alpha is defined for s >= 1, got {s}")
    return Fraction(comb(s - 1, (s - 1) // 2), 1 << (s - 1))


@dataclass(frozen=True, order=True)
class Composition:
    parts: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "parts", tuple(int(p) for p in self.parts))
        if not self.parts or any(p < 1 for p in self.parts):
            raise ValueError(f"composition parts must be positive: {self.parts}")

    @property
    def n(self) -> int:
        return sum(self.parts)

    @property
    def length(self) -> int:
        return len(self.parts)

    @property
    def allowable(self) -> bool:
        *head, last = self.parts
        return all(p >= 2 and p % 2 == 0 for p in head) and last % 2 == 1

    def canonical(self) -> "Composition":
        """Merge a trailing part 1 into its predecessor (same block vector)."""
        if len(self.parts) >= 2 and self.parts[-1] == 1:
            return Composition(self.parts[:-2] + (self.parts[-2] + 1,))
        return self

    def __str__(self) -> str:
        return "+".join(str(p) for p in self.parts)


def _even_then_odd(n: int) -> Iterator[tuple[int, ...]]:
    # descending lexicographic: larger leading parts first, (n) itself first
    if n % 2 == 1:
        yield (n,)
    for first in range(n - 1, 1, -1):
        if first % 2:
            continue
        for rest in _even_then_odd(n - first):
            yield (first,) + rest


def allowable_compositions(n: int) -> list[Composition]:
    if n < 1 or n % 2 == 0:
        return []
    return [Composition(p) for p in _even_then_odd(n)]


@dataclass(frozen=True)
class GammaVector:
    values: tuple[Fraction, ...]
    source: Composition

    @property
    def n(self) -> int:
        return self.source.n

    def blocks(self) -> Iterator[tuple[Fraction, int]]:
        return zip(self.values, self.source.parts)

    def coefficients(self) -> list[Fraction]:
        out: list[Fraction] = []
        for value, size in self.blocks():
            out.extend([value] * size)
        return out


def gamma_vector(c: Composition | Sequence[int]) -> GammaVector:
    comp = c if isinstance(c, Composition) else Composition(tuple(c))
    values = []
    acc = Fraction(1)
    for part in comp.parts:
        acc *= alpha(part)
        values.append(acc)
    return GammaVector(tuple(values), comp)


def gamma_all(n: int) -> list[GammaVector]:
    return [gamma_vector(c) for c in allowable_compositions(n)]


@dataclass(frozen=True)
class MixtureVector:
    """Sparse coefficient vector over patterns ``1..M``.

    ``entries`` maps a 1-based pattern index to its nonzero coefficient.
    ``permutation`` lists, for each support position of the source block
    vector, the pattern index it was sent to; ``signs`` is aligned with it.
    """

    M: int
    entries: Mapping[int, Fraction]
    source: GammaVector | None = None
    permutation: tuple[int, ...] = ()
    signs: tuple[int, ...] = ()
    _order: tuple[int, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self) -> None:
        entries = {int(k): Fraction(v) for k, v in dict(self.entries).items() if v != 0}
        for k in entries:
            if not 1 <= k <= self.M:
                raise ValueError(f"pattern index {k} outside 1..{self.M}")
        object.__setattr__(self, "entries", entries)
        if not self._order:
            object.__setattr__(self, "_order", tuple(sorted(entries)))

    @property
    def n(self) -> int:
        return len(self.entries)

    def support(self) -> tuple[int, ...]:
        """Support indices in the order of the source block positions."""
        return self._order

    def coefficients(self) -> list[Fraction]:
        """Nonzero coefficients in support-position order."""
        return [self.entries[k] for k in self._order]

    def __getitem__(self, mu: int) -> Fraction:
        if not 1 <= mu <= self.M:
            raise IndexError(mu)
        return self.entries.get(mu, Fraction(0))

    def dense(self) -> list[Fraction]:
        return [self[mu] for mu in range(1, self.M + 1)]

    def abs_values(self) -> tuple[Fraction, ...]:
        return tuple(sorted((abs(v) for v in self.entries.values()), reverse=True))


def block_vector(g: GammaVector, M: int) -> MixtureVector:
    n = g.n
    if M < n:
        raise ValueError(f"M={M} is smaller than the support size {n}")
    coeffs = g.coefficients()
    entries = {mu: coeffs[mu - 1] for mu in range(1, n + 1)}
    perm = tuple(range(1, n + 1))
    return MixtureVector(M, entries, g, perm, (1,) * n, perm)


def mixture_from_coefficients(coeffs: Iterable[Fraction | int | str], M: int | None = None) -> MixtureVector:
    """Explicit coefficient list placed on patterns ``1..len(coeffs)``."""
    values = [Fraction(c) for c in coeffs]
    if any(v == 0 for v in values):
        raise ValueError("explicit mixtures list only the nonzero coefficients")
    M = len(values) if M is None else M
    entries = {mu: v for mu, v in enumerate(values, start=1)}
    order = tuple(range(1, len(values) + 1))
    return MixtureVector(M, entries, None, order, tuple(1 if v > 0 else -1 for v in values), order)


def decorate(
    m: MixtureVector,
    permutation: Sequence[int] | None = None,
    signs: Sequence[int] | None = None,
    *,
    odd: bool = True,
) -> MixtureVector:
    """Relocate the support of ``m`` and (for odd derivatives only) flip signs.

    ``permutation[k]`` is the new pattern index of support position ``k``.
    With a non-odd derivative the signs enter squared, so they are ignored.
    """
    support = m.support()
    coeffs = m.coefficients()
    targets = tuple(support if permutation is None else (int(t) for t in permutation))
    if len(targets) != len(support):
        raise ValueError("permutation must list one target per support position")
    if len(set(targets)) != len(targets):
        raise ValueError(f"duplicate targets in permutation {targets}")
    if any(not 1 <= t <= m.M for t in targets):
        raise ValueError(f"targets must lie in 1..{m.M}")
    if signs is None:
        signs = (1,) * len(support)
    signs = tuple(int(s) for s in signs)
    if len(signs) != len(support) or any(s not in (-1, 1) for s in signs):
        raise ValueError("signs must be a +-1 list aligned with the support")
    if not odd:
        signs = (1,) * len(support)
    entries = {t: s * c for t, s, c in zip(targets, signs, coeffs)}
    return MixtureVector(m.M, entries, m.source, targets, signs, targets)


def infer_gamma(coeffs: Sequence[Fraction]) -> GammaVector | None:
    """Recover the allowable gamma vector behind a coefficient list, if any.

    Absolute values are grouped into blocks of equal value in decreasing
    order; the result is returned only when the blocks form an allowable
    composition whose gamma values match exactly.
    """
    values = sorted((abs(Fraction(c)) for c in coeffs), reverse=True)
    if not values or values[-1] == 0:
        return None
    parts: list[int] = []
    levels: list[Fraction] = []
    for v in values:
        if levels and levels[-1] == v:
            parts[-1] += 1
        else:
            levels.append(v)
            parts.append(1)
    comp = Composition(tuple(parts))
    candidates = [comp]
    if comp.length == 1 and comp.n > 1 and comp.n % 2 == 1:
        candidates.append(Composition((comp.n - 1, 1)))
    for cand in candidates:
        if not cand.allowable:
            continue
        g = gamma_vector(cand)
        if sorted(g.coefficients(), reverse=True) == values:
            return g
    return None


def multinomial_placements(M: int, block_sizes: Sequence[int]) -> int:
    """Number of ways to place labelled blocks of the given sizes on ``M`` slots."""
    total = 1
    free = M
    for size in block_sizes:
        total *= comb(free, size)
        free -= size
    return total
