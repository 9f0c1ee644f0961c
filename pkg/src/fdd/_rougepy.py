"""Pure-Python ROUGE-L kernel, the fallback when the compiled core is absent.

Shares the compiled kernel's interface: documents arrive CSR-packed (one
flat token-id array plus offsets per set), scores come back as an (m, n)
float64 matrix of LCS-based F1 values.
"""

from __future__ import annotations

import numpy as np


def _lcs(a: list[int], b: list[int]) -> int:
    # Rolling single-row dynamic program; O(len(a) * len(b)) time.
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        append = cur.append
        for j, y in enumerate(b, 1):
            if x == y:
                append(prev[j - 1] + 1)
            else:
                c = cur[j - 1]
                p = prev[j]
                append(c if c >= p else p)
        prev = cur
    return prev[-1]


def pair_f1(a: list[int], b: list[int]) -> float:
    if not a or not b:
        return 0.0
    lcs = _lcs(a, b)
    if lcs == 0:
        return 0.0
    p = lcs / len(b)
    r = lcs / len(a)
    return 2.0 * p * r / (p + r)


def pair_scores(gen_flat, gen_off, test_flat, test_off) -> np.ndarray:
    gen_docs = [
        [int(t) for t in gen_flat[gen_off[i] : gen_off[i + 1]]]
        for i in range(len(gen_off) - 1)
    ]
    test_docs = [
        [int(t) for t in test_flat[test_off[j] : test_off[j + 1]]]
        for j in range(len(test_off) - 1)
    ]
    out = np.zeros((len(gen_docs), len(test_docs)), dtype=np.float64)
    for i, a in enumerate(gen_docs):
        for j, b in enumerate(test_docs):
            out[i, j] = pair_f1(a, b)
    return out
