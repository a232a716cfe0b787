"""Scale-indexed classification and block scan statistics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse

from .basis import WaveletIndex, cell_index, log2_exact
from .estimator import FitReport
from .kernel import BandCoefficients, Graphon, logit, project_logit_surface
from .sampler import LatentGraph

PSI_00 = WaveletIndex(0, 0)


def snr(n: int, j: int, p_in: float, p_out: float) -> float:
    """``(n / 2^(j+1)) * Delta^2 / (pbar (1 - pbar))``."""
    for p in (p_in, p_out):
        if not 0 < p < 1:
            raise ValueError("probabilities must lie in (0, 1)")
    d = p_in - p_out
    pbar = 0.5 * (p_in + p_out)
    return n / 2 ** (j + 1) * d * d / (pbar * (1 - pbar))


def scale_labels(U, J: int) -> np.ndarray:
    """``(J, n)`` array; ``+1`` where ``U_i`` is in the left child of its scale-``j`` interval."""
    U = np.asarray(U, dtype=float)
    out = np.empty((J, len(U)), dtype=np.int8)
    for j in range(J):
        child = cell_index(U, 1 << (j + 1))
        out[j] = np.where(child % 2 == 0, 1, -1)
    return out


def _require_latent(lg: LatentGraph) -> np.ndarray:
    if lg.U is None:
        raise ValueError("latent positions are required")
    return lg.U


def _scale_scores(lg: LatentGraph, j: int) -> np.ndarray:
    """``T_j(i) = sum_k A_ik psi_{j, l(i)}(U_k)`` where ``l(i)`` is the scale-``j`` block of ``U_i``."""
    U = _require_latent(lg)
    A = lg.to_sparse().astype(np.float64)
    child = cell_index(U, 1 << (j + 1))
    onehot = sparse.csr_matrix((np.ones(lg.n), (np.arange(lg.n), child)), shape=(lg.n, 1 << (j + 1)))
    M = (A @ onehot).toarray()
    parent = child // 2
    rows = np.arange(lg.n)
    return 2 ** (j / 2) * (M[rows, 2 * parent] - M[rows, 2 * parent + 1])


def two_block_score(lg: LatentGraph, i: int | None = None):
    """``T_i = sum_j A_ij psi_1(U_j)`` and its sign (``0`` means abstain).

    Returns scalars when ``i`` is given, else arrays over all vertices.
    """
    T = _scale_scores(lg, 0)
    b = np.sign(T).astype(np.int8)
    if i is None:
        return T, b
    return float(T[i]), int(b[i])


def error_rate(estimate, truth) -> float:
    """Fraction of vertices whose label differs from the truth (abstentions count as errors)."""
    estimate = np.asarray(estimate)
    return float(np.mean(estimate != np.asarray(truth)))


def two_block_error(lg: LatentGraph) -> float:
    _, b = two_block_score(lg)
    return error_rate(b, scale_labels(lg.U, 1)[0])


@dataclass(frozen=True)
class HierarchicalResult:
    labels: np.ndarray  # (J, n) in {-1, 0, +1}
    truth: np.ndarray  # (J, n) in {-1, +1}
    errors: np.ndarray  # (J,)


def hierarchical_classify(lg: LatentGraph, J: int, deltas: Sequence[float]) -> HierarchicalResult:
    """Per-scale sign classifier ``sgn(Delta_j) sgn(T_j(i))`` against labels read from ``U``."""
    if len(deltas) < J:
        raise ValueError("need one Delta per scale")
    truth = scale_labels(_require_latent(lg), J)
    est = np.empty_like(truth)
    for j in range(J):
        est[j] = np.sign(deltas[j]) * np.sign(_scale_scores(lg, j))
    errs = np.array([error_rate(est[j], truth[j]) for j in range(J)])
    return HierarchicalResult(est, truth, errs)


# --- scans -------------------------------------------------------------------


@dataclass(frozen=True)
class BlockScore:
    j: int
    l: int
    m: int
    N: int
    T: float
    Z: float
    vertices: np.ndarray


@dataclass(frozen=True)
class ScanReport:
    blocks: list
    threshold: float

    @property
    def z_max(self) -> float:
        return max((abs(b.Z) for b in self.blocks), default=0.0)

    @property
    def detections(self) -> list:
        """Blocks with ``|Z| >= threshold``, by ``|Z|`` descending then ``(j, l)``."""
        hits = [b for b in self.blocks if abs(b.Z) >= self.threshold]
        return sorted(hits, key=lambda b: (-abs(b.Z), b.j, b.l))

    @property
    def top(self) -> BlockScore | None:
        if not self.blocks:
            return None
        return min(self.blocks, key=lambda b: (-abs(b.Z), b.j, b.l))

    @property
    def detected(self) -> bool:
        return self.z_max >= self.threshold

    def to_csv(self) -> str:
        lines = ["j,l,m,N,T,Z,detected"]
        for b in self.blocks:
            hit = int(abs(b.Z) >= self.threshold)
            lines.append(f"{b.j},{b.l},{b.m},{b.N},{b.T!r},{b.Z!r},{hit}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        obj = {
            "threshold": self.threshold,
            "z_max": self.z_max,
            "detections": [
                {"j": b.j, "l": b.l, "m": b.m, "N": b.N, "T": b.T, "Z": b.Z, "vertices": b.vertices.tolist()}
                for b in self.detections
            ],
        }
        return json.dumps(obj, indent=2) + "\n"


def default_scales(n: int) -> range:
    return range(3, max(int(math.floor(math.log2(n))) - 2, 2) + 1)


def default_threshold(n: int, C: float = 2.0) -> float:
    return C * math.sqrt(math.log(n))


def _scan(R_sorted: np.ndarray, order: np.ndarray, bounds: dict, threshold: float) -> ScanReport:
    """Score contiguous index ranges of an ordered residual matrix (zero diagonal)."""
    blocks = []
    for j in sorted(bounds):
        for l, (a, b) in enumerate(bounds[j]):
            m = int(b - a)
            N = m * (m - 1) // 2
            if m < 2:
                T = Z = 0.0
            else:
                # upper triangle only, so each block is summed independently of the rest
                T = float(np.triu(R_sorted[a:b, a:b], 1).sum() / N)
                Z = float(math.sqrt(N) * T)
            blocks.append(BlockScore(j, l, m, N, T, Z, np.sort(order[a:b])))
    return ScanReport(blocks, float(threshold))


def _vertex_probabilities(g: Graphon, U: np.ndarray) -> np.ndarray:
    P = g.prob_matrix(U)
    np.fill_diagonal(P, 0.0)
    return P


def wavelet_scan(
    lg: LatentGraph,
    W0,
    scales: Sequence[int] | None = None,
    threshold: float | None = None,
) -> ScanReport:
    """Standardized within-block residual means ``Z = sqrt(N) * T`` against a known kernel.

    Blocks are the dyadic intervals ``I_{j,l}`` at each scanned scale;
    vertices fall into blocks by their latent positions.
    """
    U = _require_latent(lg)
    g = W0 if isinstance(W0, Graphon) else Graphon(W0)
    scales = default_scales(lg.n) if scales is None else scales
    threshold = default_threshold(lg.n) if threshold is None else threshold
    order = np.argsort(U, kind="stable")
    Us = U[order]
    R = lg.adjacency()[np.ix_(order, order)].astype(float) - _vertex_probabilities(g, Us)
    bounds = {}
    for j in scales:
        edges = np.searchsorted(Us, np.arange((1 << j) + 1) / (1 << j), side="left")
        edges[-1] = lg.n
        bounds[j] = list(zip(edges[:-1], edges[1:]))
    return _scan(R, order, bounds, threshold)


def residual_block_scan(
    lg: LatentGraph,
    fit: FitReport,
    scales: Sequence[int] | None = None,
    threshold: float | None = None,
) -> ScanReport:
    """The same scan against a fitted binned surface; blocks are runs of ``2^(J-j)`` bins."""
    J = log2_exact(fit.K)
    scales = range(1, J + 1) if scales is None else scales
    if any(j > J or j < 0 for j in scales):
        raise ValueError(f"scales must lie in [0, {J}] for K={fit.K}")
    threshold = default_threshold(lg.n) if threshold is None else threshold
    order = fit.order
    bins = fit.vertex_bin[order]
    P = fit.surface[np.ix_(bins, bins)].copy()
    np.fill_diagonal(P, 0.0)
    R = lg.adjacency()[np.ix_(order, order)].astype(float) - P
    starts = np.searchsorted(bins, np.arange(fit.K + 1), side="left")
    bounds = {}
    for j in scales:
        width = 1 << (J - j)
        bounds[j] = [(starts[l * width], starts[(l + 1) * width]) for l in range(1 << j)]
    return _scan(R, order, bounds, threshold)


def plant_bump(g0, j: int, l: int, delta: float) -> BandCoefficients:
    """Kernel equal to ``W0 + delta`` on ``I_{j,l} x I_{j,l}`` and ``W0`` elsewhere."""
    g0 = g0 if isinstance(g0, Graphon) else Graphon(g0)
    k = max(g0.min_grid, 1 << j)
    P = g0.surface(k)
    w = k >> j
    block = slice(l * w, (l + 1) * w)
    P[block, block] += delta
    if P.min() <= 0 or P.max() >= 1:
        raise ValueError("bump pushes probabilities outside (0, 1)")
    return project_logit_surface(logit(P))


def bump_delta(n: int, j: int, strength: float) -> float:
    """``delta`` with ``delta^2 N = strength * ln n`` for the expected within-block dyad count at scale ``j``."""
    m = n / (1 << j)
    N = m * (m - 1) / 2
    return math.sqrt(strength * math.log(n) / N)
