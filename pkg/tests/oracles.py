"""Slow, obviously-correct reference implementations used as test oracles."""

import math
from functools import lru_cache
from itertools import combinations


def edit_distance(a, b):
    """Shortest edit script by exhaustive recursion over the three edit moves."""
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        options = [1 + go(i + 1, j), 1 + go(i, j + 1), (a[i] != b[j]) + go(i + 1, j + 1)]
        return min(options)

    return go(0, 0)


def _is_subsequence(sub, seq):
    it = iter(seq)
    return all(x in it for x in sub)


def lcs_length(a, b):
    """Largest subsequence of the shorter stream that also occurs in the longer one."""
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    for k in range(len(short), 0, -1):
        seen = set()
        for idx in combinations(range(len(short)), k):
            sub = tuple(short[i] for i in idx)
            if sub in seen:
                continue
            seen.add(sub)
            if _is_subsequence(sub, long_):
                return k
    return 0


def ngrams(tokens, n):
    out = []
    for i in range(len(tokens) - n + 1):
        out.append(tuple(tokens[i:i + n]))
    return out


def clipped_matches(pred, ref, n):
    """Greedy one-to-one pairing of pred n-grams with unused ref n-grams."""
    pool = ngrams(ref, n)
    matched = 0
    for g in ngrams(pred, n):
        if g in pool:
            pool.remove(g)
            matched += 1
    return matched, len(ngrams(pred, n))


def bleu(pred, ref, max_n=4):
    if not pred:
        return 0.0
    precisions = []
    for n in range(1, max_n + 1):
        m, t = clipped_matches(pred, ref, n)
        if m == 0:
            m, t = 1, t + 1
        precisions.append(m / t)
    bp = 1.0 if len(pred) >= len(ref) else math.exp(1 - len(ref) / len(pred))
    return min(1.0, bp * math.prod(precisions) ** (1 / max_n))
