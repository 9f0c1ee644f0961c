"""Independent reference implementations used to check derived values.

Deliberately written in the most obvious form available (memoized
recursion, exhaustive enumeration) and kept free of imports from the
package under test, so agreement means something.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Sequence


def lcs_len(a: Sequence, b: Sequence) -> int:
    """Longest-common-subsequence length by memoized recursion."""
    a = tuple(a)
    b = tuple(b)

    @lru_cache(maxsize=None)
    def rec(i: int, j: int) -> int:
        if i == 0 or j == 0:
            return 0
        if a[i - 1] == b[j - 1]:
            return rec(i - 1, j - 1) + 1
        return max(rec(i - 1, j), rec(i, j - 1))

    return rec(len(a), len(b))


def rouge_l_f1(a_tokens: Sequence[str], b_tokens: Sequence[str]) -> float:
    lcs = lcs_len(a_tokens, b_tokens)
    if lcs == 0:
        return 0.0
    p = lcs / len(b_tokens)
    r = lcs / len(a_tokens)
    return 2.0 * p * r / (p + r)


def rouge_l_text(a: str, b: str) -> float:
    return rouge_l_f1(a.lower().split(), b.lower().split())


def mean_pairwise(gen_texts: Sequence[str], test_texts: Sequence[str]) -> float:
    vals = [rouge_l_text(a, b) for a in gen_texts for b in test_texts]
    return sum(vals) / len(vals)
