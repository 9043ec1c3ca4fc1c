"""Time the numba-compiled elimination kernels against their numpy twins.

Run with ``python3 benchmarks/bench_kernels.py [--sizes 500 1000 2000]``.
Both variants get identical copies of the same random input; the script also
asserts that their outputs agree.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from erasure_ic import _kernels
from erasure_ic._backend import USE_NUMBA
from erasure_ic.gf2 import pack_bits, random_matrix


def _best(fn, args_factory, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        args = args_factory()
        t = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t)
    return best


def _sparse_system(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    # mostly weight-2 rows with a dense tail, like a decoder's phase-1 block
    dense = np.zeros((n + n // 4, n), dtype=np.uint8)
    for r in range(n):
        dense[r, rng.choice(n, size=2, replace=False)] = 1
    dense[n:] = rng.integers(0, 2, size=(n // 4, n))
    return pack_bits(dense), rng.integers(0, 2, dense.shape[0], dtype=np.uint8)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[500, 1000, 2000])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not USE_NUMBA:
        print("numba disabled (ERASURE_IC_PURE_NUMPY set or numba missing); comparing numpy with interpreted loops is pointless")
        return
    rng = np.random.default_rng(args.seed)
    # warm up the JIT so compile time stays out of the numbers
    w = random_matrix(8, 8, rng).data
    _kernels._rank_flags_loops(w.copy(), 8)
    _kernels._rref_loops(w.copy(), np.zeros(8, np.uint8), 8)
    _kernels._peel_loops(w.copy(), np.zeros(8, np.uint8), 8)

    print(f"{'kernel':<10}{'n':>7}{'numba s':>12}{'numpy s':>12}{'speedup':>10}")
    for n in args.sizes:
        a = random_matrix(n, n, rng).data
        rhs = rng.integers(0, 2, n, dtype=np.uint8)
        assert np.array_equal(_kernels._rank_flags_loops(a.copy(), n), _kernels._rank_flags_numpy(a.copy(), n))
        cases = [
            ("rank", _kernels._rank_flags_loops, _kernels._rank_flags_numpy, lambda: (a.copy(), n)),
            ("rref", _kernels._rref_loops, _kernels._rref_numpy, lambda: (a.copy(), rhs.copy(), n)),
        ]
        sp, sr = _sparse_system(n, rng)
        cases.append(("peel", _kernels._peel_loops, _kernels._peel_numpy, lambda: (sp.copy(), sr.copy(), n)))
        for name, fast, slow, make in cases:
            tf = _best(fast, make, args.repeat)
            ts = _best(slow, make, args.repeat)
            print(f"{name:<10}{n:>7}{tf:>12.4f}{ts:>12.4f}{ts / tf:>10.1f}x")


if __name__ == "__main__":
    main()
