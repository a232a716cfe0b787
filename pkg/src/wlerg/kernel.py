"""Logistic wavelet graphons ``W(x, y) = sigmoid(c + f_S(x, y))``.

``f_S(x, y) = sum_{r,s} s_rs psi_r(x) psi_s(y)`` with a finite symmetric
coefficient matrix ``S``.  :class:`BandCoefficients` stores one orientation per
unordered index pair and mirrors on read, so symmetry holds by construction.
The DC-by-DC coefficient is confounded with the offset and is always folded
into ``c``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import expit
from scipy.special import logit as _logit

from .basis import (
    WaveletCoefficients,
    WaveletIndex,
    cell_index,
    eval_haar,
    is_power_of_two,
    step_coefficients,
)

__all__ = [
    "sigmoid",
    "logit",
    "softplus",
    "BandCoefficients",
    "Graphon",
    "CoefficientLaw",
    "logit_eval",
    "graphon_eval",
    "from_two_block",
    "from_constant",
    "from_dyadic_sbm",
    "from_low_rank",
    "hierarchical_kernel",
    "hierarchical_anomaly_kernel",
    "wavelet_complexity",
    "convolve_laws",
    "kernel_from_vector",
    "weighted_graph",
    "project_logit_surface",
    "load_kernel_spec",
]

Pair = tuple[WaveletIndex, WaveletIndex]


def sigmoid(x):
    return expit(x)


def logit(p):
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("logit needs probabilities strictly inside (0, 1)")
    out = _logit(p)
    return out[()] if out.ndim == 0 else out


def softplus(x):
    """``log(1 + e^x)`` as ``max(x, 0) + log1p(e^-|x|)``."""
    x = np.asarray(x, dtype=float)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return out[()] if out.ndim == 0 else out


def _canonical(a: WaveletIndex, b: WaveletIndex) -> Pair:
    return (a, b) if a <= b else (b, a)


def _as_triples(entries) -> list[tuple[WaveletIndex, WaveletIndex, float]]:
    if entries is None:
        return []
    if isinstance(entries, Mapping):
        return [(a, b, float(v)) for (a, b), v in entries.items()]
    return [(a, b, float(v)) for a, b, v in entries]


@dataclass(frozen=True)
class BandCoefficients:
    """Offset ``c`` plus a sparse symmetric coefficient map.

    ``entries`` may be given as a mapping ``{(a, b): value}`` or as triples.
    Supplying both orientations of a pair is allowed only with equal values.
    ``band = (J_min, J_max)`` bounds the scales of detail indices; ``None``
    means unrestricted.
    """

    c: float = 0.0
    entries: Mapping[Pair, float] = field(default_factory=dict)
    band: tuple[int, int] | None = None

    def __post_init__(self):
        c = float(self.c)
        seen: dict[Pair, tuple[Pair, float]] = {}
        store: dict[Pair, float] = {}
        for a, b, v in _as_triples(self.entries):
            if not np.isfinite(v):
                raise ValueError("coefficients must be finite")
            if a.is_dc and b.is_dc:
                c += v
                continue
            key = _canonical(a, b)
            if key in seen:
                prev_pair, prev_v = seen[key]
                if prev_pair == (a, b) or a == b:
                    raise ValueError(f"duplicate coefficient for {key}")
                if prev_v != v:
                    raise ValueError(f"asymmetric coefficients for {key}: {prev_v} vs {v}")
                continue
            seen[key] = ((a, b), v)
            if v != 0.0:
                store[key] = v
        if self.band is not None:
            lo, hi = self.band
            if lo > hi:
                raise ValueError("band must satisfy J_min <= J_max")
            for a, b in store:
                for idx in (a, b):
                    if not idx.is_dc and not lo <= idx.j <= hi:
                        raise ValueError(f"{idx} outside band {self.band}")
            object.__setattr__(self, "band", (int(lo), int(hi)))
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "entries", MappingProxyType(dict(sorted(store.items()))))

    def get(self, a: WaveletIndex, b: WaveletIndex) -> float:
        if a.is_dc and b.is_dc:
            return 0.0
        return self.entries.get(_canonical(a, b), 0.0)

    def ordered_items(self) -> list[tuple[WaveletIndex, WaveletIndex, float]]:
        """Both orientations of every stored pair."""
        out = []
        for (a, b), v in self.entries.items():
            out.append((a, b, v))
            if a != b:
                out.append((b, a, v))
        return out

    def indices(self) -> list[WaveletIndex]:
        return sorted({i for pair in self.entries for i in pair})

    @property
    def max_scale(self) -> int:
        """Finest detail scale present (``-1`` if none)."""
        scales = [i.j for pair in self.entries for i in pair]
        top = max(scales, default=-1)
        if self.band is not None:
            top = max(top, self.band[1])
        return top

    def with_band(self, band: tuple[int, int] | None) -> "BandCoefficients":
        return BandCoefficients(self.c, dict(self.entries), band)

    def shifted(self, dc: float = 0.0, entries=None) -> "BandCoefficients":
        """Add ``dc`` to ``c`` and each given coefficient to the stored one (symmetric)."""
        new = dict(self.entries)
        c = self.c + dc
        for a, b, v in _as_triples(entries):
            if a.is_dc and b.is_dc:
                c += v
                continue
            key = _canonical(a, b)
            new[key] = new.get(key, 0.0) + v
        band = self.band
        if band is not None:
            scales = [i.j for pair in new for i in pair if not i.is_dc]
            if scales:
                band = (min(band[0], min(scales)), max(band[1], max(scales)))
        return BandCoefficients(c, new, band)

    def to_wavelet_coefficients(self, max_scale: int | None = None) -> WaveletCoefficients:
        """Dense L2 coefficient array of the logit ``c + f_S`` (DC entry holds ``c``)."""
        top = self.max_scale if max_scale is None else max_scale
        if top < self.max_scale:
            raise ValueError("max_scale below the finest stored scale")
        m = 1 << (top + 1)
        v = np.zeros((m, m))
        v[0, 0] = self.c
        for a, b, s in self.ordered_items():
            v[a.flat, b.flat] = s
        return WaveletCoefficients(v)

    @classmethod
    def from_wavelet_coefficients(
        cls, wc: WaveletCoefficients, band: tuple[int, int] | None = None, tol: float = 1e-12
    ) -> "BandCoefficients":
        v = wc.values
        if not np.allclose(v, v.T, rtol=0, atol=max(tol, 1e-12) * max(1.0, np.abs(v).max())):
            raise ValueError("coefficient array is not symmetric")
        entries = {}
        m = v.shape[0]
        for r in range(m):
            for s in range(r, m):
                if r == 0 and s == 0:
                    continue
                val = 0.5 * (v[r, s] + v[s, r])
                if abs(val) > tol:
                    entries[(WaveletIndex.from_flat(r), WaveletIndex.from_flat(s))] = float(val)
        return cls(float(v[0, 0]), entries, band)

    def logit_surface(self, k: int | None = None) -> np.ndarray:
        """Logit on the ``k x k`` dyadic cells (exact when ``k >= 2^(max_scale+1)``)."""
        k = self.min_grid if k is None else k
        return self.to_wavelet_coefficients().to_surface(k)

    @property
    def min_grid(self) -> int:
        return 1 << (self.max_scale + 1)

    def squared_norm(self) -> float:
        """``sum s_rs^2`` over ordered pairs (the Hilbert-Schmidt energy of ``S``)."""
        return float(sum(v * v for _, _, v in self.ordered_items()))

    def to_json(self) -> dict:
        return {
            "c": self.c,
            "band": list(self.band) if self.band is not None else None,
            "entries": [
                {"j1": a.j, "l1": a.l, "j2": b.j, "l2": b.l, "value": v}
                for (a, b), v in self.entries.items()
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BandCoefficients":
        entries = [
            (WaveletIndex(int(e["j1"]), int(e["l1"])), WaveletIndex(int(e["j2"]), int(e["l2"])), float(e["value"]))
            for e in obj.get("entries", [])
        ]
        band = obj.get("band")
        return cls(float(obj.get("c", 0.0)), entries, tuple(band) if band is not None else None)


def logit_eval(coeffs: BandCoefficients, x, y):
    """``c + sum_{r,s} s_rs psi_r(x) psi_s(y)`` by direct summation over stored pairs."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.full(np.broadcast(x, y).shape, coeffs.c)
    for (a, b), s in coeffs.entries.items():
        if a == b:
            out = out + s * (eval_haar(a, x) * eval_haar(a, y))
        else:
            out = out + s * (eval_haar(a, x) * eval_haar(b, y) + eval_haar(b, x) * eval_haar(a, y))
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class Graphon:
    """``W(x, y) = sigmoid(c + f_S(x, y))``."""

    coeffs: BandCoefficients

    def __call__(self, x, y):
        return graphon_eval(self, x, y)

    def logit(self, x, y):
        return logit_eval(self.coeffs, x, y)

    @property
    def min_grid(self) -> int:
        return self.coeffs.min_grid

    def logit_surface(self, k: int | None = None) -> np.ndarray:
        return self.coeffs.logit_surface(k)

    def surface(self, k: int | None = None) -> np.ndarray:
        """Probabilities on the ``k x k`` dyadic cells."""
        return expit(self.logit_surface(k))

    def logit_matrix(self, u) -> np.ndarray:
        """``eta(U_i, U_j)`` for all vertex pairs (diagonal included)."""
        k = self.min_grid
        cells = cell_index(u, k)
        surf = self.logit_surface(k)
        return surf[np.ix_(cells, cells)]

    def prob_matrix(self, u) -> np.ndarray:
        return expit(self.logit_matrix(u))


def graphon_eval(g: Graphon, x, y):
    return expit(logit_eval(g.coeffs, x, y))


def from_constant(p: float) -> BandCoefficients:
    """Erdos-Renyi kernel with edge probability ``p``."""
    return BandCoefficients(float(logit(p)), {})


def from_two_block(p_in: float, p_out: float) -> BandCoefficients:
    """Two halves of (0, 1): ``p_in`` within a half, ``p_out`` across."""
    for p in (p_in, p_out):
        if not 0.0 < p < 1.0:
            raise ValueError("probabilities must lie strictly inside (0, 1)")
    li, lo = float(logit(p_in)), float(logit(p_out))
    psi1 = WaveletIndex(0, 0)
    return BandCoefficients(0.5 * (li + lo), {(psi1, psi1): 0.5 * (li - lo)})


def from_dyadic_sbm(J: int, B, c: float = 0.0, band: tuple[int, int] | None = None) -> BandCoefficients:
    """Kernel whose logit equals ``c + B[l, k]`` on dyadic block ``I_{l,J} x I_{k,J}``."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape != (1 << J, 1 << J):
        raise ValueError(f"block matrix must be {1 << J} x {1 << J}")
    if not np.allclose(B, B.T, rtol=0, atol=1e-12):
        raise ValueError("block logit matrix must be symmetric")
    wc = step_coefficients(0.5 * (B + B.T))
    coeffs = BandCoefficients.from_wavelet_coefficients(wc, band)
    return coeffs.shifted(dc=c)


def from_low_rank(vectors: Sequence[Mapping[WaveletIndex, float]], c: float = 0.0) -> BandCoefficients:
    """``s_rs = sum_k b_{k,r} b_{k,s}``: a logistic random dot product kernel."""
    entries: dict[Pair, float] = {}
    dc = 0.0
    for vec in vectors:
        items = sorted(vec.items())
        for ia, (a, va) in enumerate(items):
            for b, vb in items[ia:]:
                if a.is_dc and b.is_dc:
                    dc += va * vb
                    continue
                key = _canonical(a, b)
                entries[key] = entries.get(key, 0.0) + va * vb
    return BandCoefficients(c + dc, entries)


def hierarchical_kernel(c: float, betas: Sequence[float]) -> BandCoefficients:
    """Logit diagonal in the Haar basis: ``beta_j`` on every ``psi_{j,l} (x) psi_{j,l}``."""
    entries = {}
    for j, beta in enumerate(betas):
        for l in range(1 << j):
            idx = WaveletIndex(j, l)
            entries[(idx, idx)] = float(beta)
    return BandCoefficients(c, entries)


def hierarchical_anomaly_kernel(
    f0: BandCoefficients, tau: float, hotspots: Iterable[WaveletIndex]
) -> BandCoefficients:
    """``f0 + tau * sum_{r in R} psi_r (x) psi_r``; collisions add up."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    hotspots = list(hotspots)
    if any(r.is_dc for r in hotspots):
        raise ValueError("hotspots must be detail indices")
    if f0.band is not None:
        lo, hi = f0.band
        if any(not lo <= r.j <= hi for r in hotspots):
            raise ValueError("hotspot outside the kernel band")
    return f0.shifted(entries=[(r, r, tau) for r in hotspots])


def wavelet_complexity(coeffs: BandCoefficients) -> int:
    """``#{(r, s): s_rs != 0}`` counted over ordered pairs."""
    return sum(1 if a == b else 2 for (a, b) in coeffs.entries)


def project_logit_surface(grid, band: tuple[int, int] | None = None) -> BandCoefficients:
    """Exact band-limited kernel whose logit is the given ``K x K`` step surface."""
    g = np.asarray(grid, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1] or not is_power_of_two(g.shape[0]):
        raise ValueError("logit surface must be K x K with K a power of two")
    if not np.allclose(g, g.T, rtol=0, atol=1e-12 * max(1.0, np.abs(g).max())):
        raise ValueError("logit surface must be symmetric")
    return BandCoefficients.from_wavelet_coefficients(step_coefficients(0.5 * (g + g.T)), band)


@dataclass(frozen=True)
class CoefficientLaw:
    """Gaussian law ``N(mean, cov)`` over a fixed tuple of coefficient labels."""

    indices: tuple
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        idx = tuple(self.indices)
        d = len(idx)
        mean = np.asarray(self.mean, dtype=float).reshape(d)
        cov = np.asarray(self.cov, dtype=float)
        if cov.ndim == 1:
            cov = np.diag(cov)
        cov = cov.reshape(d, d)
        if not np.allclose(cov, cov.T):
            raise ValueError("covariance must be symmetric")
        if d and np.linalg.eigvalsh(cov).min() < -1e-10 * max(1.0, np.abs(cov).max()):
            raise ValueError("covariance must be positive semidefinite")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        return rng.multivariate_normal(self.mean, self.cov, size=size, method="eigh")


def convolve_laws(law1: CoefficientLaw, law2: CoefficientLaw) -> CoefficientLaw:
    """Law of ``Theta1 + Theta2`` for independent Gaussian coefficient vectors."""
    if law1.indices != law2.indices:
        raise ValueError("coefficient laws live on different index sets")
    return CoefficientLaw(law1.indices, law1.mean + law2.mean, law1.cov + law2.cov)


def kernel_from_vector(indices: Sequence[Pair], theta) -> BandCoefficients:
    """Linear kernel ``S_theta`` from coefficients on canonical (unordered) index pairs."""
    theta = np.asarray(theta, dtype=float)
    if len(indices) != theta.size:
        raise ValueError("one coefficient per index pair required")
    c = 0.0
    entries: dict[Pair, float] = {}
    for (a, b), v in zip(indices, theta):
        if a.is_dc and b.is_dc:
            c += v
            continue
        key = _canonical(a, b)
        entries[key] = entries.get(key, 0.0) + v
    return BandCoefficients(c, entries)


def weighted_graph(kernel: BandCoefficients, u) -> np.ndarray:
    """``Y_ij = S(U_i, U_j)`` with zero diagonal."""
    u = np.asarray(u, dtype=float)
    y = logit_eval(kernel, u[:, None], u[None, :])
    np.fill_diagonal(y, 0.0)
    return y


def load_kernel_spec(spec: dict) -> BandCoefficients:
    """Kernel from a JSON-style spec.

    Either a serialized :class:`BandCoefficients` (``c``/``band``/``entries``)
    or a constructor spec with ``type`` in ``er``, ``two_block``,
    ``dyadic_sbm``, ``hierarchical``, ``logit_surface``.  An optional
    ``anomaly`` block ``{"tau", "scale", "locations"}`` adds diagonal hotspots.
    """
    kind = spec.get("type")
    if kind is None:
        coeffs = BandCoefficients.from_json(spec)
    elif kind == "er":
        coeffs = from_constant(float(spec["p"]))
    elif kind == "two_block":
        coeffs = from_two_block(float(spec["p_in"]), float(spec["p_out"]))
    elif kind == "dyadic_sbm":
        coeffs = from_dyadic_sbm(int(spec["J"]), np.asarray(spec["B"], dtype=float), float(spec.get("c", 0.0)))
    elif kind == "hierarchical":
        coeffs = hierarchical_kernel(float(spec["c"]), [float(b) for b in spec["betas"]])
    elif kind == "logit_surface":
        coeffs = project_logit_surface(np.asarray(spec["grid"], dtype=float))
    else:
        raise ValueError(f"unknown kernel type {kind!r}")
    anomaly = spec.get("anomaly")
    if anomaly:
        scale = int(anomaly["scale"])
        locs = anomaly.get("locations", range(1 << scale))
        coeffs = hierarchical_anomaly_kernel(
            coeffs, float(anomaly["tau"]), [WaveletIndex(scale, int(l)) for l in locs]
        )
    return coeffs


def dump_kernel(coeffs: BandCoefficients) -> str:
    return json.dumps(coeffs.to_json(), indent=2, sort_keys=True)


def hierarchical_scale_probabilities(c: float, betas: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Average same-child and opposite-child edge probabilities at every scale.

    For :func:`hierarchical_kernel`, two points that first separate at scale
    ``j`` have logit ``c + sum_{i<j} beta_i 2^i - beta_j 2^j``; points in the
    same child at scale ``j`` separate at each finer scale with probability
    one half, or never within the hierarchy.
    """
    betas = [float(b) for b in betas]
    depth = len(betas)
    pre = np.concatenate([[0.0], np.cumsum([b * 2.0**i for i, b in enumerate(betas)])])
    p_split = np.array([expit(c + pre[j] - betas[j] * 2.0**j) for j in range(depth)])
    p_never = expit(c + pre[depth])
    p_in = np.empty(depth)
    for j in range(depth):
        acc = 0.0
        for jj in range(j + 1, depth):
            acc += 0.5 ** (jj - j) * p_split[jj]
        acc += 0.5 ** (depth - 1 - j) * p_never
        p_in[j] = acc
    return p_in, p_split

