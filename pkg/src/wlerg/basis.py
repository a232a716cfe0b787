"""Haar system on (0, 1) and orthonormal 2D transforms on dyadic grids.

One-dimensional atoms are addressed by :class:`WaveletIndex`.  The constant
(DC) function is written with ``j = -1``; detail atoms are

    psi_{j,l}(x) = 2^{j/2} (1[left child of I_{j,l}] - 1[right child of I_{j,l}])

on the half-open dyadic interval ``I_{j,l} = [l 2^-j, (l+1) 2^-j)``.  The flat
index ``r`` is 0 for DC and ``2^j + l`` for details, which is also the layout
produced by the fast transform below.

Two normalizations live here and must not be confused:

* :func:`forward_haar_2d` / :func:`inverse_haar_2d` are the *unitary* discrete
  transform of a ``K x K`` array (Frobenius norm preserved);
* :class:`WaveletCoefficients` holds L2((0,1)^2) inner products of the step
  function whose value on cell ``(a, b)`` is ``grid[a, b]``.  The two differ by
  a factor ``K``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import total_ordering
from typing import Iterable, Iterator

import numpy as np

SQRT2 = math.sqrt(2.0)

__all__ = [
    "WaveletIndex",
    "DyadicInterval",
    "CoefficientGrid2D",
    "WaveletCoefficients",
    "eval_haar",
    "basis_matrix",
    "haar_matrix",
    "forward_haar_2d",
    "inverse_haar_2d",
    "step_coefficients",
    "is_power_of_two",
    "log2_exact",
    "cell_index",
    "scale_of_flat",
    "tensor_scale_map",
    "coefficients_to_csv",
    "coefficients_from_csv",
]


def is_power_of_two(k: int) -> bool:
    return k >= 1 and (k & (k - 1)) == 0


def log2_exact(k: int) -> int:
    if not is_power_of_two(k):
        raise ValueError(f"dimension {k} is not a power of two")
    return k.bit_length() - 1


@total_ordering
@dataclass(frozen=True)
class WaveletIndex:
    """1D Haar atom.  ``j = -1`` is the DC (constant) function."""

    j: int
    l: int = 0

    def __post_init__(self):
        if self.j < -1:
            raise ValueError(f"invalid scale {self.j}")
        if self.j == -1:
            if self.l != 0:
                raise ValueError("DC index has no location")
        elif not 0 <= self.l < (1 << self.j):
            raise ValueError(f"location {self.l} out of range at scale {self.j}")

    @classmethod
    def dc(cls) -> "WaveletIndex":
        return cls(-1, 0)

    @classmethod
    def from_flat(cls, r: int) -> "WaveletIndex":
        if r < 0:
            raise ValueError("flat index must be non-negative")
        if r == 0:
            return cls.dc()
        j = r.bit_length() - 1
        return cls(j, r - (1 << j))

    @property
    def is_dc(self) -> bool:
        return self.j == -1

    @property
    def flat(self) -> int:
        return 0 if self.is_dc else (1 << self.j) + self.l

    @property
    def interval(self) -> "DyadicInterval":
        if self.is_dc:
            return DyadicInterval(0, 0)
        return DyadicInterval(self.j, self.l)

    def __lt__(self, other):
        if not isinstance(other, WaveletIndex):
            return NotImplemented
        return (self.j, self.l) < (other.j, other.l)

    def __repr__(self):
        return "WaveletIndex.dc()" if self.is_dc else f"WaveletIndex({self.j}, {self.l})"


@dataclass(frozen=True)
class DyadicInterval:
    """``[l 2^-j, (l+1) 2^-j)``."""

    j: int
    l: int

    def __post_init__(self):
        if self.j < 0 or not 0 <= self.l < (1 << self.j):
            raise ValueError(f"invalid dyadic interval ({self.j}, {self.l})")

    @property
    def lo(self) -> float:
        return self.l / (1 << self.j)

    @property
    def hi(self) -> float:
        return (self.l + 1) / (1 << self.j)

    def children(self) -> tuple["DyadicInterval", "DyadicInterval"]:
        return DyadicInterval(self.j + 1, 2 * self.l), DyadicInterval(self.j + 1, 2 * self.l + 1)

    def parent(self) -> "DyadicInterval":
        if self.j == 0:
            raise ValueError("[0, 1) has no parent")
        return DyadicInterval(self.j - 1, self.l // 2)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return (x >= self.lo) & (x < self.hi)


def cell_index(x, k: int) -> np.ndarray:
    """Index of the half-open cell ``[a/k, (a+1)/k)`` holding each ``x``."""
    x = np.asarray(x, dtype=float)
    return np.clip(np.floor(x * k).astype(np.int64), 0, k - 1)


def eval_haar(idx: WaveletIndex, x):
    """Evaluate a Haar atom; vectorized over ``x``.

    >>> float(eval_haar(WaveletIndex(0, 0), 0.25))
    1.0
    """
    x = np.asarray(x, dtype=float)
    if idx.is_dc:
        out = np.ones_like(x)
    else:
        # scaling by a power of two is exact, so dyadic breakpoints are hit exactly
        t = x * (1 << idx.j) - idx.l
        amp = 2.0 ** (idx.j / 2)
        out = np.where((t >= 0) & (t < 0.5), amp, np.where((t >= 0.5) & (t < 1), -amp, 0.0))
    return out[()] if out.ndim == 0 else out


def basis_matrix(indices: Iterable[WaveletIndex], x) -> np.ndarray:
    """``len(x) x len(indices)`` matrix of atom values."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    indices = list(indices)
    out = np.empty((x.size, len(indices)))
    for c, idx in enumerate(indices):
        out[:, c] = eval_haar(idx, x)
    return out


def scale_of_flat(r) -> np.ndarray:
    """Scale of flat index ``r`` (``-1`` for DC)."""
    r = np.asarray(r, dtype=np.int64)
    out = np.full(r.shape, -1, dtype=np.int64)
    pos = r > 0
    out[pos] = np.floor(np.log2(r[pos])).astype(np.int64)
    # guard against log2 rounding at exact powers of two
    out[pos] = np.where((1 << (out[pos] + 1)) <= r[pos], out[pos] + 1, out[pos])
    return out


def tensor_scale_map(m: int) -> np.ndarray:
    """``j(lambda) = max(j1, j2)`` for every tensor pair of flat indices below ``m``."""
    s = scale_of_flat(np.arange(m))
    return np.maximum.outer(s, s)


def haar_matrix(k: int) -> np.ndarray:
    """Explicit orthonormal Haar matrix; row ``r`` samples atom ``r`` at cell midpoints."""
    log2_exact(k)
    mid = (np.arange(k) + 0.5) / k
    h = np.empty((k, k))
    for r in range(k):
        h[r] = eval_haar(WaveletIndex.from_flat(r), mid)
    return h / math.sqrt(k)


def _forward_last_axis(a: np.ndarray) -> np.ndarray:
    k = a.shape[-1]
    out = np.empty_like(a)
    cur = a
    hi = k
    while hi > 1:
        even = cur[..., 0::2]
        odd = cur[..., 1::2]
        out[..., hi // 2 : hi] = (even - odd) / SQRT2
        cur = (even + odd) / SQRT2
        hi //= 2
    out[..., 0:1] = cur
    return out


def _inverse_last_axis(c: np.ndarray) -> np.ndarray:
    k = c.shape[-1]
    cur = c[..., 0:1]
    h = 1
    while h < k:
        d = c[..., h : 2 * h]
        nxt = np.empty(c.shape[:-1] + (2 * h,), dtype=c.dtype)
        nxt[..., 0::2] = (cur + d) / SQRT2
        nxt[..., 1::2] = (cur - d) / SQRT2
        cur = nxt
        h *= 2
    return cur


@dataclass(frozen=True)
class CoefficientGrid2D:
    """Unitary 2D Haar coefficients; ``values[r, s]`` pairs flat indices ``r``, ``s``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("coefficient grid must be square")
        log2_exact(v.shape[0])
        object.__setattr__(self, "values", v)

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def J(self) -> int:
        return log2_exact(self.K)

    def items(self) -> Iterator[tuple[WaveletIndex, WaveletIndex, float]]:
        for r in range(self.K):
            for s in range(self.K):
                yield WaveletIndex.from_flat(r), WaveletIndex.from_flat(s), float(self.values[r, s])


def forward_haar_2d(grid) -> CoefficientGrid2D:
    """Unitary separable 2D Haar transform of a ``K x K`` array, ``K = 2^J``."""
    g = np.asarray(grid, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError("grid must be a square 2D array")
    log2_exact(g.shape[0])
    rows = _forward_last_axis(g)
    return CoefficientGrid2D(_forward_last_axis(rows.T).T)


def inverse_haar_2d(coeffs) -> np.ndarray:
    c = coeffs.values if isinstance(coeffs, CoefficientGrid2D) else np.asarray(coeffs, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError("coefficients must be a square 2D array")
    log2_exact(c.shape[0])
    cols = _inverse_last_axis(c.T).T
    return _inverse_last_axis(cols)


@dataclass(frozen=True)
class WaveletCoefficients:
    """L2-normalized tensor Haar coefficients over flat indices ``0..M-1``.

    ``M = 2^(J+1)`` covers the DC index plus detail scales ``0..J``.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("coefficient array must be square")
        log2_exact(v.shape[0])
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def max_scale(self) -> int:
        return log2_exact(self.size) - 1

    @property
    def dc(self) -> float:
        return float(self.values[0, 0])

    def scale_map(self) -> np.ndarray:
        return tensor_scale_map(self.size)

    def get(self, a: WaveletIndex, b: WaveletIndex) -> float:
        if max(a.flat, b.flat) >= self.size:
            return 0.0
        return float(self.values[a.flat, b.flat])

    def nonzero(self) -> list[tuple[WaveletIndex, WaveletIndex, float]]:
        rr, ss = np.nonzero(self.values)
        return [
            (WaveletIndex.from_flat(int(r)), WaveletIndex.from_flat(int(s)), float(self.values[r, s]))
            for r, s in zip(rr, ss)
        ]

    def padded(self, m: int) -> "WaveletCoefficients":
        if m < self.size:
            raise ValueError("cannot pad to a smaller size")
        out = np.zeros((m, m))
        out[: self.size, : self.size] = self.values
        return WaveletCoefficients(out)

    def to_surface(self, k: int | None = None) -> np.ndarray:
        """Values of ``sum theta_lambda Psi_lambda`` on the ``k x k`` dyadic cells."""
        k = self.size if k is None else k
        if k < self.size:
            raise ValueError(f"grid size {k} cannot resolve scale {self.max_scale}")
        return inverse_haar_2d(self.padded(k).values * k)


def step_coefficients(surface) -> WaveletCoefficients:
    """L2 coefficients of the step function with the given cell values."""
    grid = forward_haar_2d(surface)
    return WaveletCoefficients(grid.values / grid.K)


def _dump_index(idx: WaveletIndex) -> tuple[int, int]:
    return (-1, 0) if idx.is_dc else (idx.j, idx.l)


def coefficients_to_csv(entries: Iterable[tuple[WaveletIndex, WaveletIndex, float]]) -> str:
    """CSV with header ``j1,l1,j2,l2,value``; DC is written as ``j=-1, l=0``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["j1", "l1", "j2", "l2", "value"])
    for a, b, v in entries:
        w.writerow([*_dump_index(a), *_dump_index(b), repr(float(v))])
    return buf.getvalue()


def coefficients_from_csv(text: str) -> list[tuple[WaveletIndex, WaveletIndex, float]]:
    rows = csv.DictReader(io.StringIO(text))
    if rows.fieldnames != ["j1", "l1", "j2", "l2", "value"]:
        raise ValueError(f"unexpected coefficient CSV header {rows.fieldnames}")
    return [
        (
            WaveletIndex(int(row["j1"]), int(row["l1"])),
            WaveletIndex(int(row["j2"]), int(row["l2"])),
            float(row["value"]),
        )
        for row in rows
    ]
