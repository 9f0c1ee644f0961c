"""Compare the compiled pairwise ROUGE-L kernel against the pure-Python one.

Builds synthetic corpora, packs them once, then times pair_scores on the
identical arrays so only kernel cost differs. Run from the repo root:

    python benchmarks/bench_rouge.py
    python benchmarks/bench_rouge.py --sizes 50 100 400 --repeats 5
"""

import argparse
import random
import time

import numpy as np

from fdd import _rougepy
from fdd.audit import _pack

try:
    from fdd import _rougecore
except ImportError:
    _rougecore = None

VOCAB_SIZE = 500


def make_docs(count: int, rng: random.Random) -> list[list[int]]:
    return [
        [rng.randrange(VOCAB_SIZE) for _ in range(rng.randint(5, 40))]
        for _ in range(count)
    ]


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[50, 100, 200])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if _rougecore is None:
        print("compiled kernel not available; build it with: pip install -e . --no-build-isolation")

    rng = random.Random(args.seed)
    print(f"{'m x n':>12} {'python':>12} {'compiled':>12} {'speedup':>9}")
    for size in args.sizes:
        gen_flat, gen_off = _pack(make_docs(size, rng))
        test_flat, test_off = _pack(make_docs(size, rng))
        args_pack = (gen_flat, gen_off, test_flat, test_off)

        t_py = best_of(lambda: _rougepy.pair_scores(*args_pack), args.repeats)
        row = f"{size:>5} x {size:<4} {t_py:>11.4f}s"
        if _rougecore is not None:
            t_c = best_of(lambda: _rougecore.pair_scores(*args_pack), args.repeats)
            diff = float(
                np.max(np.abs(_rougecore.pair_scores(*args_pack) - _rougepy.pair_scores(*args_pack)))
            )
            row += f" {t_c:>11.4f}s {t_py / t_c:>8.1f}x"
            if diff > 1e-12:
                row += f"  (max diff {diff:.2e}!)"
        print(row)


if __name__ == "__main__":
    main()
