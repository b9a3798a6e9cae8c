import math
from decimal import Decimal, getcontext
from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixmem.mixtures import block_vector, decorate, gamma_vector
from mixmem.network import (
    build_mixed_memory,
    delta_N,
    energy,
    is_fixed_point,
    overlap,
    partition_report,
    patterns_from_spins,
    run_dynamics,
    sample_patterns,
    scaled_energy,
    site_scores,
    update_gradient,
    update_hk,
)
from mixmem.rademacher import BinaryVector, ResourceError
from mixmem.solver import ActivationSpec

CL = ActivationSpec.classical()
D3 = ActivationSpec.dense(3)


def spins_from_text(text):
    # "21*++- 1*+" means 21 copies of (+,+,-) followed by one +
    out = []
    for chunk in text.split():
        count, _, body = chunk.partition("*")
        out.extend([1 if c == "+" else -1 for c in body] * int(count))
    return out


def naive_sign(xi, sigma, i, F, map):
    """Direct evaluation of the update argument at site i, exact where possible."""
    M, N = xi.shape
    total = Fr(0) if F.exact else Decimal(0)
    for mu in range(M):
        a = sum(int(xi[mu, j]) * int(sigma[j]) for j in range(N) if j != i)
        x = int(xi[mu, i])
        if F.exact:
            if map == "gradient":
                total += x * Fr(a, N) ** (F.p - 1)
            else:
                total += (Fr(x + a, N) ** F.p - Fr(-x + a, N) ** F.p) / F.p
        else:
            b = Decimal(F.beta)
            if map == "gradient":
                total += x * (b * a).exp()
            else:
                total += (b * (x + a)).exp() - (b * (-x + a)).exp()
    return (total > 0) - (total < 0)


def random_instance(seed, M, N):
    rng = np.random.default_rng(seed)
    p = sample_patterns(M, N, seed)
    sigma = BinaryVector.from_spins(rng.choice([-1, 1], size=N))
    return p, sigma


# --- patterns ---------------------------------------------------------------------

def test_sampling_is_deterministic():
    a, b = sample_patterns(1, 64, 5), sample_patterns(1, 64, 5)
    assert a == b
    assert not np.array_equal(sample_patterns(4, 256, 5).bits, sample_patterns(4, 256, 6).bits)


def test_golden_row(golden):
    g = golden["pattern_row"]
    p = sample_patterns(g["M"], g["N"], g["seed"])
    assert p.spins()[0].tolist() == g["spins"]


def test_rows_depend_only_on_seed_and_index():
    big = sample_patterns(7, 300, 11)
    small = sample_patterns(3, 300, 11)
    assert np.array_equal(big.bits[:3], small.bits)


def test_row_means_concentrate():
    N = 10**5
    inside = 0
    for seed in range(200):
        means = sample_patterns(2, N, seed).spins().mean(axis=1)
        inside += bool(np.all(np.abs(means) <= 5 / math.sqrt(N)))
    assert inside >= 198


def test_bit_balance_across_positions():
    # padding bits must be masked and every position fair
    p = sample_patterns(4000, 13, 1)
    freq = (p.spins() < 0).mean(axis=0)
    assert np.all(np.abs(freq - 0.5) < 0.04)


def test_memory_budget():
    with pytest.raises(ResourceError):
        sample_patterns(1000, 1000, 0, memory_budget_bits=10_000)


# --- overlaps and energies --------------------------------------------------------

def test_overlap_examples(golden):
    s = BinaryVector.from_spins([1, -1, -1, 1, 1])
    assert overlap(s, s) == 1
    assert overlap(s, -s) == -1
    for pair in golden["overlap_pairs"]:
        a = BinaryVector.from_spins(spins_from_text(pair["a"]))
        b = BinaryVector.from_spins(spins_from_text(pair["b"]))
        assert a.length == b.length == 64
        assert overlap(a, b) == Fr(pair["overlap"])
    with pytest.raises(ValueError):
        overlap(s, BinaryVector.from_spins([1]))


@given(st.data())
def test_overlap_matches_naive(data):
    n = data.draw(st.integers(1, 500))
    a = data.draw(st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n))
    b = data.draw(st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n))
    assert overlap(BinaryVector.from_spins(a), BinaryVector.from_spins(b)) == Fr(sum(x * y for x, y in zip(a, b)), n)


def test_energy_examples():
    p = sample_patterns(1, 100, 3)
    x = p.pattern(1)
    assert energy(p, x, CL) == pytest.approx(-0.5)
    assert energy(p, x, D3) == pytest.approx(-1 / 3)
    assert energy(p, x, ActivationSpec.modern(1.0)) == pytest.approx(100.0)


def test_scaled_energy_is_exact():
    p, sigma = random_instance(2, 5, 40)
    S = p.dots(sigma)
    assert scaled_energy(S, D3) == -sum(int(s) ** 3 for s in S)
    assert scaled_energy(S, CL) / (2 * 40**2) == pytest.approx(energy(p, sigma, CL))


# --- update maps ------------------------------------------------------------------

@pytest.mark.parametrize("F", [CL, D3, ActivationSpec.modern(1.0)], ids=["classical", "dense3", "modern"])
def test_single_pattern_is_stable(F):
    p = sample_patterns(1, 50, 4)
    x = p.pattern(1)
    spins = x.tolist()
    for i in range(50):
        assert update_gradient(p, x, i, F) == spins[i]
        assert update_hk(p, x, i, F) == spins[i]


@pytest.mark.parametrize(
    "F",
    [CL, D3, ActivationSpec.dense(4), ActivationSpec.modern(0.3), ActivationSpec.modern(1.0)],
    ids=["classical", "dense3", "dense4", "modern0.3", "modern1"],
)
@pytest.mark.parametrize("map", ["gradient", "hk"])
def test_site_scores_match_naive(F, map):
    getcontext().prec = 60
    for seed in range(4):
        p, sigma = random_instance(seed, 7, 23)
        xi, s = p.spins(), sigma.spins()
        got, _ = site_scores(p, sigma, F, map)
        for i in range(p.N):
            assert got[i] * s[i] == naive_sign(xi, s, i, F, map)


def test_big_integer_path_matches_naive():
    # p = 10 at N = 200 overflows int64, forcing arbitrary precision
    F = ActivationSpec.dense(10)
    p, sigma = random_instance(9, 5, 200)
    xi, s = p.spins(), sigma.spins()
    for map in ("gradient", "hk"):
        got, _ = site_scores(p, sigma, F, map, sites=range(0, 200, 7))
        for k, i in enumerate(range(0, 200, 7)):
            assert got[k] * s[i] == naive_sign(xi, s, i, F, map)


def test_exact_ties_match_naive_zeros():
    found = 0
    for seed in range(200):
        p, sigma = random_instance(seed, 2, 5)
        xi, s_ = p.spins(), sigma.spins()
        signs, ties = site_scores(p, sigma, CL)
        for i in range(p.N):
            zero = naive_sign(xi, s_, i, CL, "gradient") == 0
            assert bool(ties[i]) == zero == (signs[i] == 0)
            found += zero
        rep = is_fixed_point(p, sigma, CL)
        assert rep.tie_sites == int(ties.sum())
    assert found > 0


@settings(max_examples=40)
@given(st.integers(0, 2**32), st.integers(1, 30), st.integers(2, 120))
def test_hk_equals_gradient_classical_and_modern(seed, M, N):
    p, sigma = random_instance(seed, M, N)
    for F in (CL, ActivationSpec.modern(0.7)):
        g, tg = site_scores(p, sigma, F, "gradient")
        h, th = site_scores(p, sigma, F, "hk")
        ok = (g == h) | tg | th
        assert ok.all()


@given(st.integers(0, 2**32), st.integers(1, 20), st.integers(2, 80))
def test_global_flip_symmetry(seed, M, N):
    p, sigma = random_instance(seed, M, N)
    for F in (CL, ActivationSpec.dense(4)):
        assert is_fixed_point(p, sigma, F) == is_fixed_point(p, -sigma, F)


def test_fixed_point_examples():
    p = sample_patterns(1, 40, 8)
    x = p.pattern(1)
    assert is_fixed_point(p, x, CL).fixed
    assert is_fixed_point(p, -x, CL) == is_fixed_point(p, x, CL)
    flipped = x.spins().copy()
    flipped[5] *= -1
    rep = is_fixed_point(p, BinaryVector.from_spins(flipped), CL)
    assert (rep.fixed, rep.violations, rep.tie_sites) == (False, 1, 0)


# --- mixed memories ---------------------------------------------------------------

def test_pattern_mixture_is_pattern():
    p = sample_patterns(5, 300, 1)
    for F in (CL, D3):
        assert build_mixed_memory(p, block_vector(gamma_vector((1,)), 5), F).config == p.pattern(1)


def test_mixed_memory_matches_naive_sign():
    p = sample_patterns(6, 500, 2)
    m = decorate(block_vector(gamma_vector((2, 3)), 6), (6, 2, 3, 4, 5), (1, -1, 1, 1, -1))
    xi = p.spins()
    for F in (CL, ActivationSpec.dense(4)):
        mem = build_mixed_memory(p, m, F)
        field_ = sum(float(F.dF(m[mu])) * xi[mu - 1] for mu in range(1, 7))
        assert mem.config.tolist() == [1 if v >= 0 else -1 for v in field_]
        assert mem.tie_sites == 0


def test_mixed_memory_overlaps_classical():
    N = 10**4
    m = block_vector(gamma_vector((3,)), 4)
    good = 0
    for seed in range(20):
        p = sample_patterns(4, N, seed)
        q = p.dots(build_mixed_memory(p, m, CL).config) / N
        dn = delta_N(N, 3)
        good += bool(np.all(np.abs(q[:3] - 0.5) <= dn) and abs(q[3]) <= dn)
    assert good >= 19


def test_modern_full_and_reduced_agree_for_pattern():
    F = ActivationSpec.modern(1.0)
    for seed in range(5):
        p = sample_patterns(2000, 100, seed)
        mem = build_mixed_memory(p, block_vector(gamma_vector((1,)), 2000), F)
        assert mem.reduced_disagreements == 0
        assert mem.config == p.pattern(1)


def test_mixed_memory_support_check():
    p = sample_patterns(3, 20, 0)
    with pytest.raises(ValueError):
        build_mixed_memory(p, block_vector(gamma_vector((2, 3)), 5), CL)


# --- dynamics ---------------------------------------------------------------------

def test_dynamics_at_fixed_point():
    p = sample_patterns(3, 200, 0)
    r = run_dynamics(p, p.pattern(2), CL)
    assert (r.final == p.pattern(2), r.sweeps_used, r.converged) == (True, 1, True)


def test_basin_of_attraction():
    N = 10**4
    for seed in range(50):
        p = sample_patterns(1, N, seed)
        x = p.spins()[0].copy()
        flip = np.random.default_rng(seed).choice(N, N // 20, replace=False)
        x[flip] *= -1
        r = run_dynamics(p, BinaryVector.from_spins(x), CL, schedule="random", seed=seed)
        assert r.converged and r.final == p.pattern(1)


@pytest.mark.parametrize("F", [CL, D3, ActivationSpec.dense(4)], ids=["classical", "dense3", "dense4"])
def test_hk_energy_monotone_exact(F):
    for seed in range(5):
        p, sigma = random_instance(seed, 8, 60)
        s = sigma.spins().astype(np.int64)
        last = scaled_energy(p.dots(sigma), F)
        for _ in range(3):
            for i in range(p.N):
                cur = BinaryVector.from_spins(s)
                s[i] = update_hk(p, cur, i, F)
                now = scaled_energy(p.dots(BinaryVector.from_spins(s)), F)
                assert now <= last
                last = now


def test_hk_energy_trace_modern():
    F = ActivationSpec.modern(0.2)
    for seed in range(5):
        p, sigma = random_instance(seed, 30, 80)
        r = run_dynamics(p, sigma, F, "hk", max_sweeps=20, trace_every_flip=True)
        trace = r.energy_trace  # log of minus the energy: must not decrease
        assert all(b >= a - 1e-10 * abs(a) for a, b in zip(trace, trace[1:]))


def test_run_dynamics_rejects_bad_args():
    p = sample_patterns(1, 10, 0)
    with pytest.raises(ValueError):
        run_dynamics(p, p.pattern(1), CL, max_sweeps=0)
    with pytest.raises(ValueError):
        run_dynamics(p, p.pattern(1), CL, schedule="parallel")


# --- partitions -------------------------------------------------------------------

def test_partition_single_pattern():
    p = sample_patterns(1, 1000, 4)
    rep = partition_report(p, [1])
    plus = int((p.spins()[0] > 0).sum())
    assert rep.sizes == (plus, 1000 - plus)


def test_partition_three_patterns():
    N = 10**4
    within = 0
    for seed in range(100):
        rep = partition_report(sample_patterns(3, N, seed), [1, 2, 3])
        assert sum(rep.sizes) == N
        assert rep.within == (rep.max_abs_lambda <= rep.delta_N)
        within += rep.within
    assert within >= 99


def test_partition_rejects_bad_support():
    p = sample_patterns(3, 20, 0)
    for bad in ([], [0], [4], [1, 1]):
        with pytest.raises(ValueError):
            partition_report(p, bad)
