"""Bit-packed GF(2) elimination kernels.

Rows are ``uint64`` arrays of shape ``(nrows, nwords)``; column ``j`` lives in
word ``j // 64`` at bit ``j % 64``. Every kernel exists twice: a scalar-loop
version compiled by numba and a column-vectorised numpy version. The public
names at the bottom point at whichever backend ``_backend`` selected.
"""

from __future__ import annotations

import numpy as np

from ._backend import USE_NUMBA, njit

ONE = np.uint64(1)


# ---------------------------------------------------------------- numba loops


@njit(cache=True)
def _popcount64(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return int((x * np.uint64(0x0101010101010101)) >> np.uint64(56))


@njit(cache=True)
def _lowest_bit(x):
    # x != 0
    return _popcount64((x & (~x + np.uint64(1))) - np.uint64(1))


@njit(cache=True)
def _bit(rows, r, c):
    return (rows[r, c >> 6] >> np.uint64(c & 63)) & np.uint64(1)


@njit(cache=True)
def _rank_flags_loops(rows, ncols):
    n, nw = rows.shape
    used = np.zeros(n, dtype=np.bool_)
    for c in range(ncols):
        w = c >> 6
        sh = np.uint64(c & 63)
        piv = -1
        for r in range(n):
            if not used[r] and (rows[r, w] >> sh) & np.uint64(1):
                piv = r
                break
        if piv < 0:
            continue
        used[piv] = True
        for r in range(piv + 1, n):
            if not used[r] and (rows[r, w] >> sh) & np.uint64(1):
                for k in range(w, nw):
                    rows[r, k] ^= rows[piv, k]
    return used


@njit(cache=True)
def _rref_loops(rows, rhs, ncols):
    n, nw = rows.shape
    pivcols = np.empty(min(n, ncols), dtype=np.int64)
    rank = 0
    for c in range(ncols):
        if rank == n:
            break
        w = c >> 6
        sh = np.uint64(c & 63)
        piv = -1
        for r in range(rank, n):
            if (rows[r, w] >> sh) & np.uint64(1):
                piv = r
                break
        if piv < 0:
            continue
        if piv != rank:
            for k in range(nw):
                t = rows[piv, k]
                rows[piv, k] = rows[rank, k]
                rows[rank, k] = t
            t8 = rhs[piv]
            rhs[piv] = rhs[rank]
            rhs[rank] = t8
        for r in range(rank + 1, n):
            if (rows[r, w] >> sh) & np.uint64(1):
                for k in range(w, nw):
                    rows[r, k] ^= rows[rank, k]
                rhs[r] ^= rhs[rank]
        pivcols[rank] = c
        rank += 1
    inconsistent = False
    for r in range(rank, n):
        if rhs[r]:
            inconsistent = True
    # back substitution, last pivot first
    for j in range(rank - 1, -1, -1):
        c = pivcols[j]
        w = c >> 6
        sh = np.uint64(c & 63)
        for i in range(j):
            if (rows[i, w] >> sh) & np.uint64(1):
                for k in range(w, nw):
                    rows[i, k] ^= rows[j, k]
                rhs[i] ^= rhs[j]
    return pivcols[:rank], inconsistent


@njit(cache=True)
def _peel_loops(rows, rhs, ncols):
    n, nw = rows.shape
    used = np.zeros(n, dtype=np.bool_)
    rec_x = np.empty(ncols, dtype=np.int64)
    rec_y = np.empty(ncols, dtype=np.int64)
    rec_r = np.empty(ncols, dtype=np.uint8)
    nrec = 0
    inconsistent = False
    changed = True
    cand = np.zeros(n, dtype=np.bool_)
    while changed:
        changed = False
        # freeze this pass's candidates up front so the order matches the numpy twin
        for i in range(n):
            cand[i] = False
            if not used[i]:
                wt = 0
                for k in range(nw):
                    wt += _popcount64(rows[i, k])
                cand[i] = wt <= 2
        for i in range(n):
            if used[i] or not cand[i]:
                continue
            wt = 0
            a = -1
            b = -1
            for k in range(nw):
                x = rows[i, k]
                while x != np.uint64(0):
                    pos = k * 64 + _lowest_bit(x)
                    x &= x - np.uint64(1)
                    if wt == 0:
                        a = pos
                    elif wt == 1:
                        b = pos
                    wt += 1
                    if wt > 2:
                        break
                if wt > 2:
                    break
            if wt > 2:
                continue
            used[i] = True
            r = rhs[i]
            if wt == 0:
                if r:
                    inconsistent = True
                continue
            rec_x[nrec] = a
            rec_y[nrec] = b
            rec_r[nrec] = r
            nrec += 1
            changed = True
            wa = a >> 6
            ma = ONE << np.uint64(a & 63)
            wb = 0
            mb = np.uint64(0)
            if b >= 0:
                wb = b >> 6
                mb = ONE << np.uint64(b & 63)
            for j in range(n):
                if used[j] or not (rows[j, wa] & ma):
                    continue
                rows[j, wa] ^= ma
                if b >= 0:
                    rows[j, wb] ^= mb
                rhs[j] ^= r
    return used, rec_x[:nrec], rec_y[:nrec], rec_r[:nrec], inconsistent


# ---------------------------------------------------------------- numpy twins


def _colbit(rows: np.ndarray, c: int) -> np.ndarray:
    return ((rows[:, c >> 6] >> np.uint64(c & 63)) & ONE).astype(bool)


def _rank_flags_numpy(rows: np.ndarray, ncols: int) -> np.ndarray:
    n = rows.shape[0]
    used = np.zeros(n, dtype=bool)
    for c in range(ncols):
        hit = _colbit(rows, c) & ~used
        idx = np.flatnonzero(hit)
        if idx.size == 0:
            continue
        piv = idx[0]
        used[piv] = True
        others = idx[1:]
        if others.size:
            w = c >> 6
            rows[others, w:] ^= rows[piv, w:]
    return used


def _rref_numpy(rows: np.ndarray, rhs: np.ndarray, ncols: int):
    n = rows.shape[0]
    pivcols = []
    rank = 0
    for c in range(ncols):
        if rank == n:
            break
        col = _colbit(rows[rank:], c)
        idx = np.flatnonzero(col)
        if idx.size == 0:
            continue
        piv = rank + idx[0]
        if piv != rank:
            rows[[rank, piv]] = rows[[piv, rank]]
            rhs[[rank, piv]] = rhs[[piv, rank]]
        below = rank + 1 + np.flatnonzero(_colbit(rows[rank + 1:], c))
        if below.size:
            w = c >> 6
            rows[below, w:] ^= rows[rank, w:]
            rhs[below] ^= rhs[rank]
        pivcols.append(c)
        rank += 1
    inconsistent = bool(rhs[rank:].any())
    for j in range(rank - 1, 0, -1):
        c = pivcols[j]
        above = np.flatnonzero(_colbit(rows[:j], c))
        if above.size:
            w = c >> 6
            rows[above, w:] ^= rows[j, w:]
            rhs[above] ^= rhs[j]
    return np.asarray(pivcols, dtype=np.int64), inconsistent


def _row_weights(rows: np.ndarray) -> np.ndarray:
    return np.bitwise_count(rows).sum(axis=1, dtype=np.int64)


def _peel_numpy(rows: np.ndarray, rhs: np.ndarray, ncols: int):
    n = rows.shape[0]
    used = np.zeros(n, dtype=bool)
    rec_x, rec_y, rec_r = [], [], []
    inconsistent = False
    while True:
        cand = np.flatnonzero(~used & (_row_weights(rows) <= 2))
        if cand.size == 0:
            break
        for i in cand:
            if used[i]:
                continue
            nz = np.flatnonzero(rows[i])
            bits = []
            for k in nz:
                x = int(rows[i, k])
                while x and len(bits) < 3:
                    low = x & -x
                    bits.append(int(k) * 64 + low.bit_length() - 1)
                    x ^= low
            if len(bits) > 2:
                continue
            used[i] = True
            r = rhs[i]
            if not bits:
                inconsistent |= bool(r)
                continue
            a = bits[0]
            b = bits[1] if len(bits) == 2 else -1
            rec_x.append(a)
            rec_y.append(b)
            rec_r.append(r)
            hit = np.flatnonzero(_colbit(rows, a) & ~used)
            if hit.size:
                rows[hit, a >> 6] ^= ONE << np.uint64(a & 63)
                if b >= 0:
                    rows[hit, b >> 6] ^= ONE << np.uint64(b & 63)
                rhs[hit] ^= r
    return (
        used,
        np.asarray(rec_x, dtype=np.int64),
        np.asarray(rec_y, dtype=np.int64),
        np.asarray(rec_r, dtype=np.uint8),
        inconsistent,
    )


if USE_NUMBA:
    rank_flags = _rank_flags_loops
    rref = _rref_loops
    peel = _peel_loops
else:
    rank_flags = _rank_flags_numpy
    rref = _rref_numpy
    peel = _peel_numpy
