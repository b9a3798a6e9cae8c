"""Rademacher system on the discrete hypercube.

Row ``nu`` of the ``n x 2**n`` matrix is piecewise constant on intervals of
length ``2**(n - nu)``, alternating in sign and starting with ``+1``.  Column
``j`` (1-based) is therefore the binary expansion of ``j - 1`` read most
significant bit first, with a set bit meaning ``-1``.

Everything here is stored bit-packed (``+1`` -> bit 0, ``-1`` -> bit 1, little
bit order within a byte) so that inner products reduce to population counts.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DEFAULT_MAX_N = 24


class ResourceError(RuntimeError):
    """Requested object would exceed a configured size cap."""


def max_n() -> int:
    """Matrix size cap, overridable through ``MIXMEM_MAX_N``."""
    raw = os.environ.get("MIXMEM_MAX_N")
    if raw is None:
        return DEFAULT_MAX_N
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ValueError(f"MIXMEM_MAX_N must be an integer, got {raw!r}") from exc
    if cap < 1:
        raise ValueError("MIXMEM_MAX_N must be positive")
    return cap


def pack_spins(spins: Sequence[int] | np.ndarray) -> np.ndarray:
    arr = np.asarray(spins)
    if arr.size and not np.all((arr == 1) | (arr == -1)):
        raise ValueError("spins must be +1 or -1")
    return np.packbits(arr < 0, axis=-1, bitorder="little")


def unpack_spins(bits: np.ndarray, length: int) -> np.ndarray:
    flags = np.unpackbits(bits, axis=-1, count=length, bitorder="little")
    return (1 - 2 * flags.astype(np.int8)).astype(np.int8)


@dataclass(frozen=True, eq=False)
class BinaryVector:
    """A +-1 vector stored one bit per coordinate."""

    length: int
    bits: np.ndarray

    @classmethod
    def from_spins(cls, spins: Iterable[int] | np.ndarray) -> "BinaryVector":
        arr = np.asarray(list(spins) if not isinstance(spins, np.ndarray) else spins)
        arr = arr.astype(np.int64).reshape(-1)
        return cls(int(arr.size), pack_spins(arr))

    def spins(self) -> np.ndarray:
        return unpack_spins(self.bits, self.length)

    def tolist(self) -> list[int]:
        return [int(s) for s in self.spins()]

    def __len__(self) -> int:
        return self.length

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryVector):
            return NotImplemented
        return self.length == other.length and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash((self.length, self.bits.tobytes()))

    def __neg__(self) -> "BinaryVector":
        return BinaryVector.from_spins(-self.spins())

    def __mul__(self, other: "BinaryVector") -> "BinaryVector":
        # Hadamard product of +-1 vectors is XOR of the sign bits
        if self.length != other.length:
            raise ValueError("length mismatch")
        return BinaryVector(self.length, np.bitwise_xor(self.bits, other.bits))

    def hamming(self, other: "BinaryVector") -> int:
        if self.length != other.length:
            raise ValueError(f"length mismatch: {self.length} vs {other.length}")
        return int(np.bitwise_count(np.bitwise_xor(self.bits, other.bits)).sum())

    def dot(self, other: "BinaryVector") -> int:
        return self.length - 2 * self.hamming(other)

    def __repr__(self) -> str:
        body = "".join("+" if s > 0 else "-" for s in self.spins()[:64])
        tail = "..." if self.length > 64 else ""
        return f"BinaryVector({body}{tail})"


def dilate(v: BinaryVector, k: int) -> BinaryVector:
    """Repeat every coordinate of ``v`` ``k`` times in place."""
    if k < 1:
        raise ValueError("dilation factor must be >= 1")
    return BinaryVector.from_spins(np.repeat(v.spins(), k))


def concatenate(a: BinaryVector, b: BinaryVector) -> BinaryVector:
    return BinaryVector.from_spins(np.concatenate([a.spins(), b.spins()]))


def rademacher_entry(n: int, nu: int, j: int) -> int:
    """Entry ``(nu, j)`` of the Rademacher matrix, 1-based, integer arithmetic only.

    The fractional part of ``(j-1) / 2**(n+1-nu)`` lies below one half exactly
    when bit ``n - nu`` of ``j - 1`` is clear.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 1 <= nu <= n:
        raise ValueError(f"row index {nu} outside 1..{n}")
    if not 1 <= j <= 1 << n:
        raise ValueError(f"column index {j} outside 1..{1 << n}")
    return -1 if ((j - 1) >> (n - nu)) & 1 else 1


@dataclass(frozen=True, eq=False)
class RademacherMatrix:
    n: int
    rows: np.ndarray  # (n, ceil(d/8)) packed
    composition: tuple[int, ...] = field(default=())

    @property
    def d(self) -> int:
        return 1 << self.n

    def row(self, nu: int) -> BinaryVector:
        """Row ``nu``; ``nu = 0`` is the all-ones row."""
        if nu == 0:
            return BinaryVector.from_spins(np.ones(self.d, dtype=np.int8))
        if not 1 <= nu <= self.n:
            raise ValueError(f"row index {nu} outside 0..{self.n}")
        return BinaryVector(self.d, self.rows[nu - 1].copy())

    def to_array(self) -> np.ndarray:
        """Dense ``int8`` array of shape ``(n, d)``."""
        return unpack_spins(self.rows, self.d)

    def columns(self) -> np.ndarray:
        """Dense ``int8`` array of shape ``(d, n)``; row ``j-1`` is column ``j``."""
        return np.ascontiguousarray(self.to_array().T)

    def inner(self, nu: int, nu2: int) -> int:
        return self.row(nu).dot(self.row(nu2))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RademacherMatrix):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.rows, other.rows)

    def __hash__(self) -> int:
        return hash((self.n, self.rows.tobytes()))

    def to_text(self) -> str:
        lines = []
        for r in self.to_array():
            lines.append(" ".join("+" if s > 0 else "-" for s in r))
        return "\n".join(lines)


def _check_cap(n: int) -> None:
    if n < 1:
        raise ValueError("n must be >= 1")
    cap = max_n()
    if n > cap:
        raise ResourceError(f"n={n} exceeds the matrix cap {cap} (set MIXMEM_MAX_N)")


def build_matrix(n: int) -> RademacherMatrix:
    _check_cap(n)
    j = np.arange(1 << n, dtype=np.int64)
    flags = np.stack([(j >> (n - nu)) & 1 for nu in range(1, n + 1)]).astype(np.uint8)
    rows = np.packbits(flags, axis=-1, bitorder="little")
    return RademacherMatrix(n, rows, (n,))


def column(mat: RademacherMatrix, j: int) -> BinaryVector:
    if not 1 <= j <= mat.d:
        raise ValueError(f"column index {j} outside 1..{mat.d}")
    return BinaryVector.from_spins(
        [rademacher_entry(mat.n, nu, j) for nu in range(1, mat.n + 1)]
    )


def column_index(mat: RademacherMatrix, v: BinaryVector | Sequence[int]) -> int:
    """Inverse of :func:`column`."""
    spins = v.spins() if isinstance(v, BinaryVector) else np.asarray(v)
    if spins.shape != (mat.n,):
        raise ValueError(f"expected a vector of length {mat.n}")
    if not np.all((spins == 1) | (spins == -1)):
        raise ValueError("entries must be +1 or -1")
    return spins_to_index(spins) + 1


def spins_to_index(spins: np.ndarray) -> int | np.ndarray:
    """0-based column index of one column, or of every column of an ``(n, N)`` array."""
    spins = np.asarray(spins)
    n = spins.shape[0]
    weights = (1 << np.arange(n - 1, -1, -1, dtype=np.int64))
    flags = (spins < 0).astype(np.int64)
    if spins.ndim == 1:
        return int(flags @ weights)
    return weights @ flags


def build_from_tree(n: int, composition: Sequence[int]) -> RademacherMatrix:
    """Assemble the matrix block-wise from a composition of ``n``.

    Row group ``k`` is ``2**(n - n_1 - ... - n_k)`` dilated copies of
    ``2**(n_1 + ... + n_{k-1})`` concatenated copies of the ``n_k`` matrix.
    """
    parts = tuple(int(x) for x in composition)
    if not parts or any(p < 1 for p in parts):
        raise ValueError("composition parts must be positive")
    if sum(parts) != n:
        raise ValueError(f"composition {parts} does not sum to {n}")
    _check_cap(n)
    blocks = []
    prefix = 0
    for nk in parts:
        sub = build_matrix(nk).to_array()
        tiled = np.tile(sub, (1, 1 << prefix))
        blocks.append(np.repeat(tiled, 1 << (n - prefix - nk), axis=1))
        prefix += nk
    dense = np.concatenate(blocks, axis=0)
    return RademacherMatrix(n, pack_spins(dense), parts)
