"""Linear indexing of the upper triangle ``{(i, j): 0 <= i < j < n}`` in row-major order."""

import numpy as np


def n_dyads(n: int) -> int:
    return n * (n - 1) // 2


def pair_to_index(i, j, n: int):
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    lo = np.minimum(i, j)
    hi = np.maximum(i, j)
    return lo * (2 * n - lo - 1) // 2 + (hi - lo - 1)


def index_to_pair(k, n: int):
    k = np.asarray(k, dtype=np.int64)
    # row i starts at offset i*(2n-i-1)/2; invert the quadratic then fix rounding
    b = 2 * n - 1
    i = np.floor((b - np.sqrt(np.maximum(b * b - 8.0 * k, 0.0))) / 2).astype(np.int64)
    start = i * (2 * n - i - 1) // 2
    over = start > k
    while np.any(over):
        i = np.where(over, i - 1, i)
        start = i * (2 * n - i - 1) // 2
        over = start > k
    nxt = (i + 1) * (2 * n - i - 2) // 2
    under = nxt <= k
    while np.any(under):
        i = np.where(under, i + 1, i)
        start = i * (2 * n - i - 1) // 2
        nxt = (i + 1) * (2 * n - i - 2) // 2
        under = nxt <= k
    j = k - start + i + 1
    return i, j


def upper_pairs(n: int):
    return np.triu_indices(n, k=1)
