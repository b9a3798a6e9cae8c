import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mixmem.rademacher import (
    BinaryVector,
    ResourceError,
    build_from_tree,
    build_matrix,
    column,
    column_index,
    concatenate,
    dilate,
    rademacher_entry,
    spins_to_index,
)


def compositions(n):
    # all 2**(n-1) compositions via cut positions
    for cuts in itertools.product((0, 1), repeat=n - 1):
        parts, run = [], 1
        for c in cuts:
            if c:
                parts.append(run)
                run = 1
            else:
                run += 1
        parts.append(run)
        yield tuple(parts)


def float_entry(n, nu, j):
    # independent oracle: fractional part of 2**(nu-n-1) * (j-1) against 1/2
    x = (j - 1) / 2 ** (n + 1 - nu)
    return 1 if x - np.floor(x) < 0.5 else -1


@pytest.mark.parametrize("args,expected", [((5, 1, 1), 1), ((5, 1, 17), -1), ((1, 1, 2), -1)])
def test_entry_examples(args, expected):
    assert rademacher_entry(*args) == expected


@pytest.mark.parametrize("n", range(1, 9))
def test_entry_matches_fractional_part_oracle(n):
    for nu in range(1, n + 1):
        for j in range(1, (1 << n) + 1):
            assert rademacher_entry(n, nu, j) == float_entry(n, nu, j)


@pytest.mark.parametrize("args", [(0, 1, 1), (3, 0, 1), (3, 4, 1), (3, 1, 0), (3, 1, 9)])
def test_entry_rejects_bad_indices(args):
    with pytest.raises(ValueError):
        rademacher_entry(*args)


def test_build_matrix_small():
    assert build_matrix(1).to_array().tolist() == [[1, -1]]
    assert build_matrix(2).to_array().tolist() == [[1, 1, -1, -1], [1, -1, 1, -1]]


def test_build_matrix_n5_figure_layout():
    text = build_matrix(5).to_text().splitlines()
    assert text[0] == " ".join(["+"] * 16 + ["-"] * 16)
    assert text[4] == " ".join(["+", "-"] * 16)
    assert len(text) == 5


@pytest.mark.parametrize("n", range(1, 9))
def test_build_matrix_agrees_with_entry(n):
    arr = build_matrix(n).to_array()
    expected = [[rademacher_entry(n, nu, j) for j in range(1, (1 << n) + 1)] for nu in range(1, n + 1)]
    assert arr.tolist() == expected


@pytest.mark.parametrize("n", range(1, 13))
def test_row_structure(n):
    mat = build_matrix(n)
    arr = mat.to_array()
    for nu in range(1, n + 1):
        row = arr[nu - 1]
        blocks = row.reshape(1 << nu, -1)
        assert np.all(blocks == blocks[:, :1])
        assert blocks[0, 0] == 1
        assert np.all(blocks[1:, 0] == -blocks[:-1, 0])


def test_build_matrix_bad_n():
    with pytest.raises(ValueError):
        build_matrix(0)


def test_build_matrix_cap(monkeypatch):
    monkeypatch.setenv("MIXMEM_MAX_N", "4")
    with pytest.raises(ResourceError):
        build_matrix(5)
    assert build_matrix(4).d == 16


def test_columns_examples():
    m2 = build_matrix(2)
    assert column(m2, 1).tolist() == [1, 1]
    assert column(m2, 4).tolist() == [-1, -1]
    assert column(build_matrix(1), 2).tolist() == [-1]
    assert column_index(m2, [1, 1]) == 1
    assert column_index(m2, BinaryVector.from_spins([-1, -1])) == 4
    assert column_index(build_matrix(1), [1]) == 1
    with pytest.raises(ValueError):
        column(m2, 5)
    with pytest.raises(ValueError):
        column_index(m2, [1, 1, 1])


@pytest.mark.parametrize("n", range(1, 13))
def test_orthogonality(n):
    mat = build_matrix(n)
    d = mat.d
    for nu in range(n + 1):
        for nu2 in range(n + 1):
            assert mat.inner(nu, nu2) == (d if nu == nu2 else 0)


@pytest.mark.parametrize("n", range(1, 13))
def test_axial_symmetry(n):
    arr = build_matrix(n).to_array()
    assert np.array_equal(arr, -arr[:, ::-1])


@pytest.mark.parametrize("n", range(1, 13))
def test_column_bijection(n):
    mat = build_matrix(n)
    idx = spins_to_index(mat.to_array())
    assert np.array_equal(np.sort(idx), np.arange(mat.d))


@pytest.mark.parametrize("n", range(1, 7))
def test_column_roundtrip(n):
    mat = build_matrix(n)
    for j in range(1, mat.d + 1):
        assert column_index(mat, column(mat, j)) == j


@pytest.mark.parametrize("n", range(1, 11))
def test_tree_equivalence_all_compositions(n):
    ref = build_matrix(n)
    for comp in compositions(n):
        assert build_from_tree(n, comp) == ref


def test_tree_examples():
    assert build_from_tree(5, (2, 3)) == build_matrix(5)
    assert build_from_tree(5, (1,) * 5) == build_matrix(5)
    with pytest.raises(ValueError):
        build_from_tree(5, (2, 2))


@pytest.mark.parametrize("n", range(1, 8))
def test_hadamard_closure(n):
    mat = build_matrix(n)
    cols = [column(mat, j) for j in range(1, mat.d + 1)]
    for ci in cols:
        image = sorted(column_index(mat, cj * ci) for cj in cols)
        assert image == list(range(1, mat.d + 1))


def test_dilate_and_concatenate():
    v = BinaryVector.from_spins
    assert dilate(v([1, -1]), 2).tolist() == [1, 1, -1, -1]
    assert dilate(v([1]), 3).tolist() == [1, 1, 1]
    assert dilate(v([1, -1, 1]), 1).tolist() == [1, -1, 1]
    assert concatenate(v([1]), v([-1])).tolist() == [1, -1]
    assert concatenate(v([1, 1]), v([])).tolist() == [1, 1]
    assert concatenate(v([1, -1]), v([1, -1])).tolist() == [1, -1, 1, -1]


spin_lists = st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=200)


@given(spin_lists)
def test_pack_roundtrip(spins):
    assert BinaryVector.from_spins(spins).tolist() == spins


@given(spin_lists, st.integers(1, 5))
def test_dilate_length_and_content(spins, k):
    out = dilate(BinaryVector.from_spins(spins), k).tolist()
    assert out == [s for s in spins for _ in range(k)]


@given(st.data())
def test_dot_matches_naive(data):
    n = data.draw(st.integers(1, 300))
    a = data.draw(st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n))
    b = data.draw(st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n))
    va, vb = BinaryVector.from_spins(a), BinaryVector.from_spins(b)
    assert va.dot(vb) == sum(x * y for x, y in zip(a, b))
    assert (va * vb).tolist() == [x * y for x, y in zip(a, b)]
    assert (-va).tolist() == [-x for x in a]
