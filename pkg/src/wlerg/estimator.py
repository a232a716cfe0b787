"""Wavelet hard-thresholding graphon estimators.

Two paths are provided:

* Observed design (latent positions known): empirical coefficients of ``W``
  are thresholded and inverted on the probability scale.
* Pipeline (positions unknown): vertices are seriated, binned into ``K``
  groups, a smoothed block histogram is taken to the logit scale, shrunk
  by the same multiscale rule and mapped back through the logistic link.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.special import expit

from .basis import WaveletCoefficients, forward_haar_2d, is_power_of_two, log2_exact, tensor_scale_map
from ._dyads import index_to_pair, n_dyads
from .kernel import logit
from .sampler import LatentGraph

CLIP_PIPELINE = 1e-6
SERIATION_METHODS = ("degree", "fiedler", "latent")


@dataclass(frozen=True)
class ThresholdPlan:
    J: int
    tau: float
    kappa: float
    n_dyads: int


def threshold_plan(n: int, kappa: float = 1.0, n_dyads_override: int | None = None) -> ThresholdPlan:
    """Maximal scale ``J = max{j : 4^j <= N / ln N}`` and threshold ``tau = kappa sqrt(ln N / N)``.

    ``N`` is the number of dyads (``n(n-1)/2`` unless overridden, e.g. by the
    training-dyad count). ``N <= 1`` gives ``J = 0, tau = 0``.
    """
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    N = n_dyads(n) if n_dyads_override is None else int(n_dyads_override)
    if N <= 1:
        return ThresholdPlan(0, 0.0, float(kappa), N)
    ratio = N / math.log(N)
    J = 0
    while 4 ** (J + 1) <= ratio:
        J += 1
    return ThresholdPlan(J, float(kappa) * math.sqrt(math.log(N) / N), float(kappa), N)


def empirical_coefficients(lg: LatentGraph, J: int, positions=None) -> WaveletCoefficients:
    """``(2/(n(n-1))) sum_{i<j} A_ij Psi(U_i, U_j)`` symmetrized, for all tensor indices with scales ``<= J``.

    ``positions`` defaults to the latent positions of ``lg``. The sum is
    computed exactly by binning vertices into the ``2^(J+1)`` finest cells.
    """
    if lg.n < 2:
        raise ValueError("need at least two vertices")
    u = lg.U if positions is None else np.asarray(positions, dtype=float)
    if u is None:
        raise ValueError("positions are required")
    k = 1 << (J + 1)
    cells = np.clip(np.floor(u * k).astype(np.int64), 0, k - 1)
    e = lg.edges()
    C = np.zeros((k, k))
    np.add.at(C, (cells[e[:, 0]], cells[e[:, 1]]), 1.0)
    C = C + C.T
    return WaveletCoefficients(k * forward_haar_2d(C).values / (lg.n * (lg.n - 1)))


def _keep_mask(m: int, plan: ThresholdPlan, values: np.ndarray) -> np.ndarray:
    scales = tensor_scale_map(m)
    limit = plan.tau * np.exp2(np.maximum(scales, 0))
    keep = (np.abs(values) >= limit) & (values != 0) & (scales <= plan.J)
    keep[0, 0] = True  # the mean level is never shrunk
    return keep


def threshold_coefficients(coeffs: WaveletCoefficients, plan: ThresholdPlan) -> WaveletCoefficients:
    """Keep ``|theta| >= tau * 2^max(j1, j2)`` at scales ``<= J``; the DC-by-DC entry is exempt."""
    v = coeffs.values
    return WaveletCoefficients(np.where(_keep_mask(v.shape[0], plan, v), v, 0.0))


def reconstruct_graphon(coeffs: WaveletCoefficients, eps: float = 1e-3, k: int | None = None) -> np.ndarray:
    """Inverse transform to a ``k x k`` probability surface clipped to ``[eps, 1 - eps]``."""
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 0.5)")
    return np.clip(coeffs.to_surface(k), eps, 1 - eps)


def estimate_observed(lg: LatentGraph, kappa: float = 1.0, eps: float = 1e-3) -> np.ndarray:
    """Observed-design estimate on the ``2^(J_n+1)`` grid."""
    plan = threshold_plan(lg.n, kappa)
    theta = threshold_coefficients(empirical_coefficients(lg, plan.J), plan)
    return reconstruct_graphon(theta, eps)


# --- seriation ---------------------------------------------------------------


@dataclass(frozen=True)
class Seriation:
    order: np.ndarray  # order[r] = vertex at rank r
    method: str
    disconnected: bool = False


def _fiedler_vector(L: sparse.csr_matrix, max_iter: int, tol: float) -> np.ndarray:
    n = L.shape[0]
    if n <= 2:
        return np.arange(n, dtype=float) - (n - 1) / 2
    deg = L.diagonal()
    sigma = 2.0 * float(deg.max()) + 1.0
    # deterministic start with no constant component
    x = np.cos(np.pi * (np.arange(n) + 0.5) / n)
    x -= x.mean()
    x /= np.linalg.norm(x)
    for _ in range(max_iter):
        y = sigma * x - L @ x
        y -= y.mean()
        norm = np.linalg.norm(y)
        if norm == 0:
            break
        y /= norm
        if min(np.linalg.norm(y - x), np.linalg.norm(y + x)) < tol:
            x = y
            break
        x = y
    if x[0] < 0:
        x = -x
    return x


def seriation(lg: LatentGraph, method: str = "degree", max_iter: int = 20000, tol: float = 1e-10) -> Seriation:
    """Vertex ordering by ascending degree, by the Fiedler vector, or by latent position.

    Ties are broken by vertex id. For ``fiedler`` on a disconnected graph,
    components are ordered by decreasing size (ties by smallest vertex id)
    and each is ordered by its own Fiedler vector.
    """
    if method == "degree":
        return Seriation(np.argsort(lg.degrees(), kind="stable"), method)
    if method == "latent":
        if lg.U is None:
            raise ValueError("latent ordering needs latent positions")
        return Seriation(np.argsort(lg.U, kind="stable"), method)
    if method != "fiedler":
        raise ValueError(f"unknown seriation method {method!r}")
    A = lg.to_sparse().astype(np.float64)
    ncomp, labels = connected_components(A, directed=False)
    parts = []
    for c in range(ncomp):
        verts = np.flatnonzero(labels == c)
        sub = A[verts][:, verts]
        L = sparse.diags(np.asarray(sub.sum(axis=1)).ravel()) - sub
        f = _fiedler_vector(L.tocsr(), max_iter, tol)
        parts.append(verts[np.argsort(f, kind="stable")])
    parts.sort(key=lambda p: (-len(p), int(p.min())))
    return Seriation(np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64), method, ncomp > 1)


def bin_assignment(n: int, K: int) -> np.ndarray:
    """Bin of each rank: ``K`` contiguous bins, the first ``n mod K`` one vertex larger."""
    base, extra = divmod(n, K)
    sizes = np.full(K, base)
    sizes[:extra] += 1
    return np.repeat(np.arange(K), sizes)


# --- pipeline ----------------------------------------------------------------


def _holdout_flags(n: int, holdout) -> np.ndarray:
    N = n_dyads(n)
    flags = np.zeros(N, dtype=bool)
    if holdout is None:
        return flags
    h = np.asarray(holdout)
    if h.dtype == bool:
        if h.shape != (N,):
            raise ValueError("boolean holdout mask must cover every dyad")
        return h.copy()
    flags[h.astype(np.int64)] = True
    return flags


def training_graph(lg: LatentGraph, holdout) -> LatentGraph:
    """The graph with held-out dyads removed (treated as non-edges)."""
    flags = lg.dyad_flags() & ~_holdout_flags(lg.n, holdout)
    return LatentGraph(lg.n, lg.U, np.packbits(flags))


@dataclass(frozen=True)
class FitReport:
    method: str
    K: int
    kappa: float
    plan: ThresholdPlan
    order: np.ndarray
    vertex_bin: np.ndarray
    surface: np.ndarray
    survivors: list
    survivors_by_scale: list
    clip: tuple[float, float]
    empty_cells: int
    disconnected: bool = False
    histogram: np.ndarray = field(default=None, repr=False)

    def predict(self, i, j) -> np.ndarray:
        return self.surface[self.vertex_bin[np.asarray(i)], self.vertex_bin[np.asarray(j)]]

    def predict_dyads(self, dyads, n: int | None = None) -> np.ndarray:
        i, j = index_to_pair(dyads, len(self.vertex_bin) if n is None else n)
        return self.predict(i, j)

    def to_json(self) -> str:
        meta = {
            "method": self.method,
            "K": self.K,
            "kappa": self.kappa,
            "J_n": self.plan.J,
            "tau_n": self.plan.tau,
            "n_train_dyads": self.plan.n_dyads,
            "clip": list(self.clip),
            "empty_cells": self.empty_cells,
            "disconnected": self.disconnected,
            "survivors_by_scale": self.survivors_by_scale,
            "survivors": [
                {"j1": a.j, "l1": a.l, "j2": b.j, "l2": b.l, "value": v} for a, b, v in self.survivors
            ],
            "order": self.order.tolist(),
        }
        return json.dumps(meta, indent=2, sort_keys=True) + "\n"

    def surface_csv(self) -> str:
        K = self.K
        lines = ["row,col,p"]
        for r in range(K):
            for c in range(K):
                lines.append(f"{r},{c},{float(self.surface[r, c])!r}")
        return "\n".join(lines) + "\n"


def read_surface_csv(text: str) -> np.ndarray:
    rows = [ln.split(",") for ln in text.strip().splitlines()[1:]]
    K = int(math.isqrt(len(rows)))
    if K * K != len(rows):
        raise ValueError("surface CSV is not square")
    out = np.empty((K, K))
    for r, c, p in rows:
        out[int(r), int(c)] = float(p)
    return out


@dataclass(frozen=True)
class BlockHistogram:
    """Smoothed per-cell training edge frequencies after seriation and binning."""

    probabilities: np.ndarray
    order: np.ndarray
    vertex_bin: np.ndarray
    n_train: int
    empty_cells: int
    disconnected: bool

    def predict(self, i, j) -> np.ndarray:
        return self.probabilities[self.vertex_bin[np.asarray(i)], self.vertex_bin[np.asarray(j)]]


def block_histogram(lg: LatentGraph, method: str = "degree", K: int = 128, holdout=None) -> BlockHistogram:
    """Seriate on training dyads, cut into ``K`` contiguous bins, and smooth cell frequencies.

    A cell with ``e`` training edges among ``m`` training dyads gets
    ``(e + 0.5) / (m + 1)``; cells without training dyads get the global
    training density.
    """
    if K < 1:
        raise ValueError("K must be positive")
    hold = _holdout_flags(lg.n, holdout)
    N_train = int(n_dyads(lg.n) - hold.sum())
    if N_train <= 0:
        raise ValueError("no training dyads")
    train = LatentGraph(lg.n, lg.U, np.packbits(lg.dyad_flags() & ~hold))
    ser = seriation(train, method)
    vertex_bin = np.empty(lg.n, dtype=np.int64)
    vertex_bin[ser.order] = bin_assignment(lg.n, K)

    counts, dyads = _cell_counts(train, hold, vertex_bin, K)
    rho = counts.sum() / N_train
    # an edgeless or complete training graph would give an infinite fallback logit
    rho = min(max(rho, 0.5 / (N_train + 1)), 1 - 0.5 / (N_train + 1))
    empty = dyads == 0
    hist = np.where(empty, rho, (counts + 0.5) / (dyads + 1.0))
    return BlockHistogram(hist, ser.order, vertex_bin, N_train, int(empty[np.triu_indices(K)].sum()), ser.disconnected)


def fit_pipeline(
    lg: LatentGraph,
    method: str = "degree",
    K: int = 128,
    kappa: float = 1.0,
    holdout=None,
    clip: float = CLIP_PIPELINE,
) -> FitReport:
    """Seriate, bin, smooth, logit, threshold, invert, and clip.

    Held-out dyads (linear indices or a boolean mask over the upper
    triangle) are removed before any computation, including seriation.
    """
    if not is_power_of_two(K):
        raise ValueError("K must be a power of two")
    bh = block_histogram(lg, method, K, holdout)
    hist, N_train = bh.probabilities, bh.n_train
    eta = logit(hist)

    plan = threshold_plan(lg.n, kappa, n_dyads_override=N_train)
    theta = WaveletCoefficients(forward_haar_2d(eta).values / K)
    kept = threshold_coefficients(theta, plan)
    surface = np.clip(expit(kept.to_surface(K)), clip, 1 - clip)
    surface = 0.5 * (surface + surface.T)
    survivors = [(a, b, v) for a, b, v in kept.nonzero()]
    J = log2_exact(K)
    by_scale = [0] * J
    for a, b, _ in survivors:
        j = max(a.j, b.j)
        if j >= 0:
            by_scale[j] += 1
    return FitReport(
        method=method,
        K=K,
        kappa=float(kappa),
        plan=plan,
        order=bh.order,
        vertex_bin=bh.vertex_bin,
        surface=surface,
        survivors=survivors,
        survivors_by_scale=by_scale,
        clip=(clip, 1 - clip),
        empty_cells=bh.empty_cells,
        disconnected=bh.disconnected,
        histogram=hist,
    )


def _cell_counts(train: LatentGraph, hold: np.ndarray, vertex_bin: np.ndarray, K: int):
    """Symmetric ``K x K`` training edge counts and training dyad counts.

    Off-diagonal cells count each unordered dyad once; diagonal cells count
    within-bin dyads.
    """
    sizes = np.bincount(vertex_bin, minlength=K).astype(float)
    dyads = np.outer(sizes, sizes)
    dyads[np.diag_indices(K)] = sizes * (sizes - 1) / 2

    def binned(pairs_i, pairs_j):
        M = np.zeros((K, K))
        np.add.at(M, (vertex_bin[pairs_i], vertex_bin[pairs_j]), 1.0)
        diag = np.diag(M).copy()
        M = M + M.T
        M[np.diag_indices(K)] = diag
        return M

    e = train.edges()
    counts = binned(e[:, 0], e[:, 1])
    if hold.any():
        hi, hj = index_to_pair(np.flatnonzero(hold), train.n)
        dyads = dyads - binned(hi, hj)
    return counts, dyads


def recover_logit_coefficients(fit: FitReport) -> WaveletCoefficients:
    """L2 wavelet coefficients of the logit of the fitted surface."""
    return WaveletCoefficients(forward_haar_2d(logit(fit.surface)).values / fit.K)


def surface_l2_error(estimate: np.ndarray, truth: np.ndarray) -> float:
    """``L2((0,1)^2)`` distance between two step surfaces, refined to a common grid."""
    ka, kb = estimate.shape[0], truth.shape[0]
    k = max(ka, kb)
    a = np.kron(estimate, np.ones((k // ka, k // ka)))
    b = np.kron(truth, np.ones((k // kb, k // kb)))
    return float(np.sqrt(np.mean((a - b) ** 2)))
