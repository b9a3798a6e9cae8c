"""Random patterns, mixed memories built on them, and the retrieval maps.

Every update decision reduces to the sign of

    u_i = sum_mu b_mu * g(a_mu),    b_mu = xi^mu_i sigma_i,   a_mu = S_mu - b_mu,

where ``S_mu = sum_j xi^mu_j sigma_j`` and ``a_mu`` is the same sum with site
``i`` removed.  The map sends ``sigma_i`` to ``sigma_i * sign(u_i)``.  For the
gradient map ``g(a) = F'(a)`` up to a positive factor, for the Hopfield-Krotov
map ``g(a) = F(a + 1) - F(a - 1)``.  Polynomial models evaluate ``u_i`` with
exact integers (Python ints when ``int64`` could overflow); the modern model
uses doubles with the largest exponent factored out per site.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Literal, Sequence

import numpy as np

from .mixtures import MixtureVector
from .rademacher import BinaryVector, ResourceError, pack_spins, spins_to_index, unpack_spins
from .solver import MODERN_TIE_RTOL, ActivationSpec

SpinConfig = BinaryVector

MapName = Literal["gradient", "hk"]
TiePolicy = Literal["keep", "plus", "random"]

DEFAULT_MEMORY_BUDGET_BITS = 8 * 2**30  # 1 GiB of packed patterns
_CHUNK_ELEMENTS = 1 << 22


@dataclass(frozen=True, eq=False)
class PatternSet:
    M: int
    N: int
    seed: int
    bits: np.ndarray  # (M, ceil(N/8)) packed, +1 -> 0

    def pattern(self, mu: int) -> SpinConfig:
        if not 1 <= mu <= self.M:
            raise ValueError(f"pattern index {mu} outside 1..{self.M}")
        return BinaryVector(self.N, self.bits[mu - 1].copy())

    def spins(self, rows: Sequence[int] | None = None) -> np.ndarray:
        """Dense ``(len(rows), N)`` int8 array; ``rows`` are 1-based."""
        block = self.bits if rows is None else self.bits[np.asarray(rows, dtype=np.int64) - 1]
        return unpack_spins(block, self.N)

    def dots(self, sigma: SpinConfig) -> np.ndarray:
        """``S_mu = sum_i xi^mu_i sigma_i`` for every pattern (int64)."""
        if sigma.length != self.N:
            raise ValueError(f"configuration has length {sigma.length}, patterns {self.N}")
        ham = np.bitwise_count(np.bitwise_xor(self.bits, sigma.bits)).sum(axis=1, dtype=np.int64)
        return self.N - 2 * ham

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PatternSet):
            return NotImplemented
        return (self.M, self.N) == (other.M, other.N) and np.array_equal(self.bits, other.bits)


def _row_bits(seed: int, mu: int, N: int) -> np.ndarray:
    # counter-based: key (seed, mu); the Philox counter walks the words of the row
    gen = np.random.Philox(key=np.array([seed & (2**64 - 1), mu], dtype=np.uint64))
    words = gen.random_raw((N + 63) // 64).astype("<u8")
    return words.view(np.uint8)[: (N + 7) // 8].copy()


def sample_patterns(
    M: int, N: int, seed: int, memory_budget_bits: int = DEFAULT_MEMORY_BUDGET_BITS
) -> PatternSet:
    if M < 1 or N < 1:
        raise ValueError("need M >= 1 and N >= 1")
    if M * N > memory_budget_bits:
        raise ResourceError(f"M*N = {M * N} bits exceeds the budget of {memory_budget_bits}")
    nbytes = (N + 7) // 8
    bits = np.empty((M, nbytes), dtype=np.uint8)
    for mu in range(1, M + 1):
        bits[mu - 1] = _row_bits(seed, mu, N)
    if N % 8:
        bits[:, -1] &= np.uint8((1 << (N % 8)) - 1)
    return PatternSet(M, N, int(seed), bits)


def patterns_from_spins(spins: np.ndarray, seed: int = 0) -> PatternSet:
    """Wrap an explicit ``(M, N)`` +-1 array (tests, golden vectors)."""
    arr = np.asarray(spins)
    return PatternSet(arr.shape[0], arr.shape[1], seed, pack_spins(arr))


def overlap(a: SpinConfig, b: SpinConfig) -> Fraction:
    if a.length != b.length:
        raise ValueError(f"length mismatch: {a.length} vs {b.length}")
    return Fraction(a.length - 2 * a.hamming(b), a.length)


def overlaps(p: PatternSet, sigma: SpinConfig) -> np.ndarray:
    return p.dots(sigma) / p.N


def _logsumexp(x: np.ndarray) -> float:
    top = float(np.max(x))
    return top + math.log(float(np.exp(x - top).sum()))


def energy(p: PatternSet, sigma: SpinConfig, F: ActivationSpec) -> float:
    """``-sum_mu F(overlap_mu)``; for the modern model the log of ``sum_mu exp(N beta overlap_mu)``.

    The modern energy itself is ``-exp(returned value)``.
    """
    S = p.dots(sigma)
    if F.variant == "modern":
        return _logsumexp(F.beta * S.astype(np.float64))
    q = S.astype(np.float64) / p.N
    return float(-(q**F.p).sum() / F.p)


def scaled_energy(S: np.ndarray, F: ActivationSpec) -> int:
    """Exact ``p N**p E`` for the polynomial models: ``-sum S_mu**p``."""
    if not F.exact:
        raise TypeError("exact energy only exists for polynomial models")
    return -sum(int(s) ** F.p for s in S)


# --- site scores -------------------------------------------------------------------

def _poly_g(a: np.ndarray, F: ActivationSpec, map: MapName) -> np.ndarray:
    """``g(a)`` for the polynomial models on an integer array (int64 or object)."""
    if map == "gradient":
        return a ** (F.p - 1)
    return (a + 1) ** F.p - (a - 1) ** F.p


def _poly_fits_int64(N: int, M: int, F: ActivationSpec, map: MapName) -> bool:
    top = N + 1
    bound = top ** (F.p - 1) if map == "gradient" else 2 * F.p * top ** (F.p - 1)
    return 2 * M * bound < 2**62


def _check_map(map: str) -> None:
    if map not in ("gradient", "hk"):
        raise ValueError(f"unknown map {map!r}")


def site_scores(
    p: PatternSet,
    sigma: SpinConfig,
    F: ActivationSpec,
    map: MapName = "gradient",
    sites: Sequence[int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Signs of ``u_i`` (see module docstring) at the given 0-based sites.

    Returns ``(signs, ties)``: ``signs`` in {-1, 0, 1}; ``ties`` marks sites where
    the modern log-domain sum fell below the relative tie threshold (for the
    polynomial models it coincides with ``signs == 0``).
    """
    _check_map(map)
    F = F.with_N(p.N) if F.variant == "modern" else F
    S = p.dots(sigma)
    all_sites = np.arange(p.N) if sites is None else np.asarray(sites, dtype=np.int64)
    if all_sites.size and (all_sites.min() < 0 or all_sites.max() >= p.N):
        raise ValueError("site index out of range")
    signs = np.zeros(all_sites.size, dtype=np.int64)
    ties = np.zeros(all_sites.size, dtype=bool)
    if F.exact:
        exact64 = _poly_fits_int64(p.N, p.M, F, map)
        S_ = S if exact64 else S.astype(object)
        g_agree = _poly_g(S_ - 1, F, map)
        g_dis = _poly_g(S_ + 1, F, map)
        weight = g_agree + g_dis
        base = g_agree.sum()
    chunk = max(8, (_CHUNK_ELEMENTS // max(p.M, 1)) // 8 * 8)
    # walk sites grouped by the byte block they live in
    order = np.argsort(all_sites, kind="stable")
    sorted_sites = all_sites[order]
    start = 0
    while start < sorted_sites.size:
        b0 = sorted_sites[start] // 8
        b1 = b0 + chunk // 8
        stop = int(np.searchsorted(sorted_sites, b1 * 8, side="left"))
        block_sites = sorted_sites[start:stop]
        xor = np.bitwise_xor(p.bits[:, b0:b1], sigma.bits[b0:b1])
        flags = np.unpackbits(xor, axis=1, bitorder="little")
        X = flags[:, block_sites - b0 * 8]  # (M, k): 1 where xi^mu_i != sigma_i
        if F.exact:
            if exact64:
                s = np.sign(base - X.T.astype(np.int64) @ weight)
            else:
                u = base - X.T.astype(object) @ weight
                s = np.array([int(v > 0) - int(v < 0) for v in u], dtype=np.int64)
            t = s == 0
        else:
            s, t = _modern_scores(S, X, F.beta, map)
        signs[order[start:stop]] = s
        ties[order[start:stop]] = t
        start = stop
    return signs, ties


def _modern_scores(S: np.ndarray, X: np.ndarray, beta: float, map: MapName) -> tuple[np.ndarray, np.ndarray]:
    dis = X.astype(bool)
    a = np.where(dis, S[:, None] + 1, S[:, None] - 1).astype(np.float64)
    b = np.where(dis, -1.0, 1.0)
    if map == "gradient":
        e = beta * a
        top = e.max(axis=0)
        terms = b * np.exp(e - top)
    else:
        hi = beta * (a + 1)
        lo = beta * (a - 1)
        top = hi.max(axis=0)
        terms = b * (np.exp(hi - top) - np.exp(lo - top))
    total = terms.sum(axis=0)
    largest = np.abs(terms).max(axis=0)
    tie = np.abs(total) < MODERN_TIE_RTOL * largest
    s = np.where(tie, 0, np.sign(total)).astype(np.int64)
    return s, tie


def _resolve(sigma_i: np.ndarray, s: np.ndarray, tie_policy: TiePolicy, rng: np.random.Generator | None) -> np.ndarray:
    new = sigma_i * s
    zero = s == 0
    if not zero.any():
        return new
    if tie_policy == "keep":
        new[zero] = sigma_i[zero]
    elif tie_policy == "plus":
        new[zero] = 1
    elif tie_policy == "random":
        if rng is None:
            rng = np.random.default_rng(0)
        new[zero] = rng.choice(np.array([-1, 1]), size=int(zero.sum()))
    else:
        raise ValueError(f"unknown tie policy {tie_policy!r}")
    return new


def apply_map(
    p: PatternSet,
    sigma: SpinConfig,
    F: ActivationSpec,
    map: MapName = "gradient",
    sites: Sequence[int] | None = None,
    tie_policy: TiePolicy = "keep",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """``T_i(sigma)`` at every requested 0-based site, plus the tie mask."""
    all_sites = np.arange(p.N) if sites is None else np.asarray(sites, dtype=np.int64)
    s, ties = site_scores(p, sigma, F, map, all_sites)
    current = sigma.spins()[all_sites].astype(np.int64)
    return _resolve(current, s, tie_policy, rng), ties


def update_gradient(p: PatternSet, sigma: SpinConfig, i: int, F: ActivationSpec, tie_policy: TiePolicy = "keep") -> int:
    """Gradient map at 0-based site ``i``."""
    new, _ = apply_map(p, sigma, F, "gradient", [i], tie_policy)
    return int(new[0])


def update_hk(p: PatternSet, sigma: SpinConfig, i: int, F: ActivationSpec, tie_policy: TiePolicy = "keep") -> int:
    """Hopfield-Krotov map at 0-based site ``i``."""
    new, _ = apply_map(p, sigma, F, "hk", [i], tie_policy)
    return int(new[0])


@dataclass(frozen=True)
class FixedPointReport:
    fixed: bool
    violations: int
    tie_sites: int


def is_fixed_point(
    p: PatternSet,
    sigma: SpinConfig,
    F: ActivationSpec,
    map: MapName = "gradient",
    tie_policy: TiePolicy = "keep",
) -> FixedPointReport:
    s, ties = site_scores(p, sigma, F, map)
    current = sigma.spins().astype(np.int64)
    new = _resolve(current, s, tie_policy, np.random.default_rng(p.seed))
    violations = int((s < 0).sum())
    changed = int((new != current).sum())
    return FixedPointReport(changed == 0, violations, int(ties.sum()))


# --- mixed memories ----------------------------------------------------------------

@dataclass(frozen=True)
class MixedMemory:
    config: SpinConfig
    tie_sites: int = 0
    reduced_disagreements: int = 0
    reduced: SpinConfig | None = None


def _exact_weights(coeffs: Sequence[Fraction], F: ActivationSpec) -> list[int]:
    f = [F.dF(c) for c in coeffs]
    scale = reduce(lambda a, b: a * b // math.gcd(a, b), (x.denominator for x in f), 1)
    return [int(x * scale) for x in f]


def build_mixed_memory(p: PatternSet, m: MixtureVector, F: ActivationSpec) -> MixedMemory:
    """``xi_i(m) = sign(sum_mu xi^mu_i F'(m_mu))``.

    For polynomial models ``F'(0) = 0`` so only the support enters, summed
    exactly.  For the modern model ``F'(0) > 0`` and every non-support
    pattern contributes; both that full sum and the support-only sum are
    evaluated and their disagreements counted.  Ties resolve to ``+1``.
    """
    support = m.support()
    if any(mu > p.M for mu in support):
        raise ValueError(f"mixture support {support} exceeds M={p.M}")
    coeffs = m.coefficients()
    xi = p.spins(support).astype(np.int64)  # (n, N)
    if F.exact:
        w = _exact_weights(coeffs, F)
        if sum(abs(x) for x in w) < 2**62:
            field_ = np.array(w, dtype=np.int64) @ xi
        else:
            field_ = np.array(w, dtype=object) @ xi.astype(object)
        s = np.array([int(v > 0) - int(v < 0) for v in field_], dtype=np.int64)
        ties = int((s == 0).sum())
        s[s == 0] = 1
        return MixedMemory(BinaryVector.from_spins(s), ties)
    F = F.with_N(p.N)
    exps = np.array([F.exponent(c) for c in coeffs])
    top = max(float(exps.max()), 0.0)
    reduced_val = np.exp(exps - float(exps.max())) @ xi
    # non-support patterns each contribute exp(0) * xi^mu_i
    rest = _column_sums(p) - xi.sum(axis=0)
    full_val = np.exp(exps - top) @ xi + rest * math.exp(-top)
    full_scale = np.exp(exps - top).sum() + (p.M - len(support)) * math.exp(-top)
    red_scale = np.exp(exps - float(exps.max())).sum()
    full_tie = np.abs(full_val) < MODERN_TIE_RTOL * full_scale
    red_tie = np.abs(reduced_val) < MODERN_TIE_RTOL * red_scale
    full_s = np.where(full_tie | (full_val > 0), 1, -1)
    red_s = np.where(red_tie | (reduced_val > 0), 1, -1)
    return MixedMemory(
        BinaryVector.from_spins(full_s),
        int(full_tie.sum()),
        int((full_s != red_s).sum()),
        BinaryVector.from_spins(red_s),
    )


def _column_sums(p: PatternSet) -> np.ndarray:
    """``sum_mu xi^mu_i`` for every site, via chunked unpacking."""
    out = np.zeros(p.N, dtype=np.int64)
    rows = max(1, _CHUNK_ELEMENTS // max(p.N, 1))
    for r0 in range(0, p.M, rows):
        block = np.unpackbits(p.bits[r0 : r0 + rows], axis=1, count=p.N, bitorder="little")
        out += block.shape[0] - 2 * block.sum(axis=0, dtype=np.int64)
    return out


# --- dynamics ----------------------------------------------------------------------

@dataclass
class DynamicsResult:
    final: SpinConfig
    sweeps_used: int
    converged: bool
    energy_trace: list[float] = field(default_factory=list)
    flips: int = 0


def _site_sign(b: np.ndarray, S: np.ndarray, F: ActivationSpec, map: MapName, exact64: bool) -> int:
    a = S - b
    if F.exact:
        if not exact64:
            a = a.astype(object)
        g = _poly_g(a, F, map)
        u = int((b * g).sum()) if exact64 else sum(int(x) * int(y) for x, y in zip(b, g))
        return (u > 0) - (u < 0)
    s, _ = _modern_scores(S, (b < 0)[:, None].astype(np.uint8), F.beta, map)
    return int(s[0])


def run_dynamics(
    p: PatternSet,
    sigma0: SpinConfig,
    F: ActivationSpec,
    map: MapName = "gradient",
    schedule: str = "sequential",
    max_sweeps: int = 100,
    seed: int = 0,
    tie_policy: TiePolicy = "keep",
    trace_every_flip: bool = False,
) -> DynamicsResult:
    """Asynchronous single-site updates until a full sweep changes nothing.

    ``energy_trace`` holds the energy at the start and after every sweep
    (after every accepted flip with ``trace_every_flip``).
    """
    _check_map(map)
    if max_sweeps < 1:
        raise ValueError("max_sweeps must be >= 1")
    if schedule not in ("sequential", "random"):
        raise ValueError(f"unknown schedule {schedule!r}")
    F = F.with_N(p.N) if F.variant == "modern" else F
    xi_t = np.ascontiguousarray(p.spins().T.astype(np.int64))  # (N, M)
    sigma = sigma0.spins().astype(np.int64)
    S = xi_t.T @ sigma
    exact64 = F.exact and _poly_fits_int64(p.N, p.M, F, map)
    rng = np.random.default_rng(seed)

    def current_energy() -> float:
        if F.variant == "modern":
            return _logsumexp(F.beta * S.astype(np.float64))
        q = S.astype(np.float64) / p.N
        return float(-(q**F.p).sum() / F.p)

    trace = [current_energy()]
    flips = 0
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        order = rng.permutation(p.N) if schedule == "random" else range(p.N)
        changed = 0
        for i in order:
            b = xi_t[i] * sigma[i]
            s = _site_sign(b, S, F, map, exact64)
            new = _resolve(np.array([sigma[i]]), np.array([s]), tie_policy, rng)[0]
            if new != sigma[i]:
                S += 2 * new * xi_t[i]
                sigma[i] = new
                changed += 1
                if trace_every_flip:
                    trace.append(current_energy())
        flips += changed
        if not trace_every_flip:
            trace.append(current_energy())
        if changed == 0:
            converged = True
            break
    return DynamicsResult(BinaryVector.from_spins(sigma), sweeps, converged, trace, flips)


# --- partition diagnostics --------------------------------------------------------

@dataclass(frozen=True)
class PartitionReport:
    sizes: tuple[int, ...]
    lambdas: tuple[float, ...]
    max_abs_lambda: float
    delta_N: float
    within: bool


def delta_N(N: int, n: int) -> float:
    """``sqrt(8 * 2**n * ln N / N)``."""
    return math.sqrt(8 * (1 << n) * math.log(N) / N)


def partition_report(p: PatternSet, support: Sequence[int]) -> PartitionReport:
    support = [int(mu) for mu in support]
    if not support or any(not 1 <= mu <= p.M for mu in support) or len(set(support)) != len(support):
        raise ValueError(f"invalid support {support} for M={p.M}")
    n = len(support)
    from .rademacher import max_n

    if n > max_n():
        raise ResourceError(f"support size {n} exceeds the matrix cap {max_n()}")
    d = 1 << n
    idx = spins_to_index(p.spins(support))
    sizes = np.bincount(idx, minlength=d)
    lambdas = sizes * d / p.N - 1
    dn = delta_N(p.N, n)
    worst = float(np.abs(lambdas).max())
    return PartitionReport(tuple(int(x) for x in sizes), tuple(float(x) for x in lambdas), worst, dn, worst <= dn)
