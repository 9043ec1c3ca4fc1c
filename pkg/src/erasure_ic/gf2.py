"""Packed linear algebra over GF(2).

Matrices store one row per ``uint64`` word array (column ``j`` at word
``j // 64``, bit ``j % 64``). The heavy lifting sits in ``_kernels``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, InconsistentSystem

UNDETERMINED = -1


def nwords(cols: int) -> int:
    return (cols + 63) // 64


def pack_bits(dense: np.ndarray) -> np.ndarray:
    """Pack a 0/1 array of shape ``(rows, cols)`` into ``uint64`` words."""
    dense = np.asarray(dense, dtype=np.uint8)
    if dense.ndim == 1:
        return pack_bits(dense[None, :])[0]
    rows, cols = dense.shape
    width = nwords(cols) * 64
    if width != cols:
        dense = np.concatenate([dense, np.zeros((rows, width - cols), dtype=np.uint8)], axis=1)
    if rows == 0 or cols == 0:
        return np.zeros((rows, nwords(cols)), dtype=np.uint64)
    packed = np.packbits(dense, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64, copy=False).reshape(rows, -1)


def unpack_bits(words: np.ndarray, cols: int) -> np.ndarray:
    words = np.ascontiguousarray(words, dtype=np.uint64)
    if words.ndim == 1:
        return unpack_bits(words[None, :], cols)[0]
    if words.size == 0:
        return np.zeros((words.shape[0], cols), dtype=np.uint8)
    as_bytes = words.astype("<u8", copy=False).view(np.uint8).reshape(words.shape[0], -1)
    return np.unpackbits(as_bytes, axis=1, count=cols, bitorder="little")


def mask_to_words(mask: int, cols: int) -> np.ndarray:
    out = np.zeros(nwords(cols), dtype=np.uint64)
    for k in range(out.size):
        out[k] = (mask >> (64 * k)) & 0xFFFFFFFFFFFFFFFF
    return out


def words_to_mask(words: np.ndarray) -> int:
    return sum(int(w) << (64 * k) for k, w in enumerate(words))


@dataclass(frozen=True)
class BitMatrix:
    rows: int
    cols: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.data.shape != (self.rows, nwords(self.cols)):
            raise DimensionMismatch(f"packed shape {self.data.shape} does not fit {self.rows}x{self.cols}")
        self.data.setflags(write=False)

    @classmethod
    def from_dense(cls, dense) -> BitMatrix:
        dense = np.asarray(dense, dtype=np.uint8)
        if dense.ndim != 2:
            raise DimensionMismatch("from_dense expects a 2-D array")
        return cls(dense.shape[0], dense.shape[1], pack_bits(dense & 1))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> BitMatrix:
        return cls(rows, cols, np.zeros((rows, nwords(cols)), dtype=np.uint64))

    @classmethod
    def identity(cls, n: int) -> BitMatrix:
        return cls.from_dense(np.eye(n, dtype=np.uint8))

    def to_dense(self) -> np.ndarray:
        return unpack_bits(self.data, self.cols)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return self.rows == other.rows and self.cols == other.cols and np.array_equal(self.data, other.data)

    def __hash__(self):
        return hash((self.rows, self.cols, self.data.tobytes()))


def random_matrix(rows: int, cols: int, rng: np.random.Generator) -> BitMatrix:
    """I.i.d. fair coin entries drawn from ``rng``."""
    if rows < 0 or cols < 0:
        raise ValueError("dimensions must be non-negative")
    dense = rng.integers(0, 2, size=(rows, cols), dtype=np.uint8)
    return BitMatrix(rows, cols, pack_bits(dense))


def mat_vec(m: BitMatrix, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.uint8)
    if v.shape != (m.cols,):
        raise DimensionMismatch(f"vector of length {v.shape} against {m.cols} columns")
    if m.rows == 0:
        return np.zeros(0, dtype=np.uint8)
    packed = pack_bits(v & 1)
    ones = np.bitwise_count(m.data & packed).sum(axis=1)
    return (ones & 1).astype(np.uint8)


def rank_profile(m: BitMatrix | np.ndarray, cols: int | None = None) -> np.ndarray:
    """``out[i]`` is the rank of the first ``i + 1`` rows."""
    data, cols = (m.data, m.cols) if isinstance(m, BitMatrix) else (m, cols)
    if data.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    flags = _kernels.rank_flags(np.array(data, dtype=np.uint64, copy=True), cols)
    return np.cumsum(flags, dtype=np.int64)


def rank(m: BitMatrix) -> int:
    if m.rows == 0 or m.cols == 0:
        return 0
    return int(rank_profile(m)[-1])


@dataclass
class EquationSystem:
    """Rows of ``coeffs . x = rhs`` over ``n_unknowns`` bits (packed)."""

    n_unknowns: int
    coeffs: np.ndarray = None
    rhs: np.ndarray = None

    def __post_init__(self):
        if self.coeffs is None:
            self.coeffs = np.zeros((0, nwords(self.n_unknowns)), dtype=np.uint64)
        if self.rhs is None:
            self.rhs = np.zeros(self.coeffs.shape[0], dtype=np.uint8)
        if self.coeffs.shape[1:] != (nwords(self.n_unknowns),) or self.rhs.shape != (self.coeffs.shape[0],):
            raise DimensionMismatch("coefficient rows and rhs do not match the unknown count")

    @classmethod
    def from_masks(cls, n_unknowns: int, eqs: Iterable[tuple[int, int]]) -> EquationSystem:
        eqs = list(eqs)
        limit = 1 << n_unknowns
        rows = np.zeros((len(eqs), nwords(n_unknowns)), dtype=np.uint64)
        rhs = np.zeros(len(eqs), dtype=np.uint8)
        for i, (mask, b) in enumerate(eqs):
            if mask < 0 or mask >= limit:
                raise DimensionMismatch(f"mask {mask:#x} addresses bits beyond {n_unknowns} unknowns")
            rows[i] = mask_to_words(mask, n_unknowns)
            rhs[i] = b & 1
        return cls(n_unknowns, rows, rhs)

    @classmethod
    def from_dense(cls, coeffs, rhs) -> EquationSystem:
        coeffs = np.asarray(coeffs, dtype=np.uint8)
        return cls(coeffs.shape[1], pack_bits(coeffs), np.asarray(rhs, dtype=np.uint8) & 1)

    def __len__(self) -> int:
        return self.coeffs.shape[0]

    def add(self, mask: int, b: int) -> None:
        self.coeffs = np.vstack([self.coeffs, mask_to_words(mask, self.n_unknowns)[None, :]])
        self.rhs = np.append(self.rhs, np.uint8(b & 1))

    def extend(self, coeffs: np.ndarray, rhs: np.ndarray) -> None:
        self.coeffs = np.vstack([self.coeffs, coeffs])
        self.rhs = np.concatenate([self.rhs, np.asarray(rhs, dtype=np.uint8)])

    def masks(self) -> list[tuple[int, int]]:
        return [(words_to_mask(r), int(b)) for r, b in zip(self.coeffs, self.rhs)]


def _compact(rows: np.ndarray, cols: int, keep: np.ndarray) -> np.ndarray:
    """Restrict packed rows to the columns listed in ``keep``."""
    out = np.zeros((rows.shape[0], nwords(keep.size)), dtype=np.uint64)
    chunk = max(1, (1 << 26) // max(cols, 1))
    for s in range(0, rows.shape[0], chunk):
        dense = unpack_bits(rows[s:s + chunk], cols)[:, keep]
        out[s:s + chunk] = pack_bits(dense)
    return out


def solve_determined(system: EquationSystem) -> np.ndarray:
    """Values of every variable the system pins down.

    Returns an ``int8`` array with 0/1 for determined unknowns and
    ``UNDETERMINED`` (-1) elsewhere. A variable counts as determined iff its
    unit vector lies in the row space, which is independent of pivot order.

    Weight-1 and weight-2 rows are substituted out first; the remaining core is
    brought to reduced row echelon form.
    """
    n = system.n_unknowns
    values = np.full(n, UNDETERMINED, dtype=np.int8)
    if len(system) == 0 or n == 0:
        if len(system) and system.rhs.any():
            raise InconsistentSystem("0 = 1 in an empty-unknown system")
        return values
    rows = np.array(system.coeffs, dtype=np.uint64, copy=True)
    rhs = np.array(system.rhs, dtype=np.uint8, copy=True)
    used, rec_x, rec_y, rec_r, bad = _kernels.peel(rows, rhs, n)
    if bad:
        raise InconsistentSystem("system is inconsistent (0 = 1 during substitution)")
    core = np.flatnonzero(~used)
    if core.size:
        rows, rhs = rows[core], rhs[core]
        live = np.flatnonzero(unpack_bits(np.bitwise_or.reduce(rows, axis=0), n))
        small = _compact(rows, n, live)
        pivcols, bad = _kernels.rref(small, rhs, live.size)
        if bad:
            raise InconsistentSystem("system is inconsistent (0 = 1 after elimination)")
        if pivcols.size:
            weights = np.bitwise_count(small[:pivcols.size]).sum(axis=1)
            single = weights == 1
            values[live[pivcols[single]]] = rhs[:pivcols.size][single].astype(np.int8)
    for x, y, r in zip(rec_x[::-1], rec_y[::-1], rec_r[::-1]):
        if y < 0:
            values[x] = r
        elif values[y] != UNDETERMINED:
            values[x] = values[y] ^ r
    return values


def matmul(a: BitMatrix, b: BitMatrix) -> BitMatrix:
    """``a @ b`` over GF(2), four-Russians style: rows of ``b`` are grouped
    by eight and every group becomes a 256-entry XOR table."""
    if a.cols != b.rows:
        raise DimensionMismatch(f"{a.rows}x{a.cols} @ {b.rows}x{b.cols}")
    out = np.zeros((a.rows, nwords(b.cols)), dtype=np.uint64)
    if a.rows == 0 or a.cols == 0 or b.cols == 0:
        return BitMatrix(a.rows, b.cols, out)
    a_bytes = np.ascontiguousarray(a.data).view(np.uint8).reshape(a.rows, -1)
    table = np.zeros((256, out.shape[1]), dtype=np.uint64)
    for g in range(0, a.cols, 8):
        block = b.data[g:g + 8]
        table[:] = 0
        for j in range(block.shape[0]):
            table[1 << j: 2 << j] = table[: 1 << j] ^ block[j]
        out ^= table[a_bytes[:, g >> 3]]
    return BitMatrix(a.rows, b.cols, out)
