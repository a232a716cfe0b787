"""Strict dyad-holdout evaluation: splits, proper scores, calibration, baselines and sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.metrics import average_precision_score, roc_auc_score

from ._dyads import index_to_pair, n_dyads
from ._rng import rng_for
from .estimator import block_histogram, fit_pipeline
from .sampler import LatentGraph

N_BINS = 20
METRIC_CSV_HEADER = "dataset,method,auc_mean,auc_sd,loglik_mean,loglik_sd,brier,ece,ap,pos_logloss,balanced_logloss"
RELIABILITY_CSV_HEADER = "bin_lo,bin_hi,mean_pred,frac_pos,count"


@dataclass(frozen=True)
class HoldoutSplit:
    """Test dyads (sorted linear upper-triangle indices) fixed before any fitting."""

    n: int
    test: np.ndarray
    seed: int
    fraction: float

    @property
    def train_mask(self) -> np.ndarray:
        mask = np.ones(n_dyads(self.n), dtype=bool)
        mask[self.test] = False
        return mask

    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        return index_to_pair(self.test, self.n)

    def labels(self, lg: LatentGraph) -> np.ndarray:
        return lg.dyad_flags()[self.test].astype(np.int8)


def holdout_split(n: int, fraction: float = 0.1, seed: int = 0) -> HoldoutSplit:
    """Uniform sample of ``round(fraction * N)`` dyads without replacement."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    N = n_dyads(n)
    size = int(math.floor(fraction * N + 0.5))
    if size == 0:
        raise ValueError("holdout fraction yields an empty test set")
    rng = rng_for(seed, "holdout")
    test = np.sort(rng.choice(N, size=size, replace=False))
    return HoldoutSplit(n, test, int(seed), float(fraction))


@dataclass(frozen=True)
class MetricReport:
    auc: float
    logloss: float
    brier: float
    ece: float
    ap: float
    pos_logloss: float
    balanced_logloss: float
    reliability: np.ndarray = field(repr=False)  # rows: bin_lo, bin_hi, mean_pred, frac_pos, count
    pred_histogram: np.ndarray = field(repr=False)  # rows: bin_lo, bin_hi, count
    single_class: bool = False

    @property
    def loglik(self) -> float:
        """Mean held-out log-likelihood."""
        return -self.logloss

    def reliability_csv(self) -> str:
        lines = [RELIABILITY_CSV_HEADER]
        for lo, hi, mp, fp, c in self.reliability:
            lines.append(f"{lo!r},{hi!r},{mp!r},{fp!r},{int(c)}")
        return "\n".join(lines) + "\n"

    def histogram_csv(self) -> str:
        lines = ["bin_lo,bin_hi,count"]
        lines += [f"{lo!r},{hi!r},{int(c)}" for lo, hi, c in self.pred_histogram]
        return "\n".join(lines) + "\n"


def _logloss(p: np.ndarray, y: np.ndarray) -> float:
    if len(p) == 0:
        return float("nan")
    return float(-np.mean(np.where(y == 1, np.log(p), np.log1p(-p))))


def _bins(p: np.ndarray) -> np.ndarray:
    return np.minimum((p * N_BINS).astype(np.int64), N_BINS - 1)


def score_predictions(preds, labels, seed: int = 0) -> MetricReport:
    """Discrimination, proper scores and 20-bin calibration for held-out dyads.

    ``seed`` drives the negative subsample of the balanced logloss.
    Single-class labels give AUC 0.5 with ``single_class`` set.
    """
    p = np.asarray(preds, dtype=float)
    y = np.asarray(labels).astype(np.int8)
    if p.shape != y.shape or p.ndim != 1 or len(p) == 0:
        raise ValueError("preds and labels must be equal-length non-empty vectors")
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("predictions must lie strictly inside (0, 1)")
    single = len(np.unique(y)) < 2
    auc = 0.5 if single else float(roc_auc_score(y, p))
    ap = float(average_precision_score(y, p)) if y.any() else float("nan")
    pos = y == 1
    pos_ll = _logloss(p[pos], y[pos])
    neg_idx = np.flatnonzero(~pos)
    k = min(int(pos.sum()), len(neg_idx))
    pick = np.sort(rng_for(seed, "balanced-negatives").choice(neg_idx, size=k, replace=False)) if k else neg_idx[:0]
    sel = np.concatenate([np.flatnonzero(pos), pick])
    bal_ll = _logloss(p[sel], y[sel]) if pos.any() else float("nan")

    b = _bins(p)
    count = np.bincount(b, minlength=N_BINS).astype(float)
    psum = np.bincount(b, weights=p, minlength=N_BINS)
    ysum = np.bincount(b, weights=y.astype(float), minlength=N_BINS)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_pred = np.where(count > 0, psum / count, 0.0)
        frac_pos = np.where(count > 0, ysum / count, 0.0)
    ece = float(np.sum(count / len(p) * np.abs(mean_pred - frac_pos)))
    edges = np.arange(N_BINS + 1) / N_BINS
    rel = np.column_stack([edges[:-1], edges[1:], mean_pred, frac_pos, count])
    hist = np.column_stack([edges[:-1], edges[1:], count])
    return MetricReport(
        auc=auc,
        logloss=_logloss(p, y),
        brier=float(np.mean((p - y) ** 2)),
        ece=ece,
        ap=ap,
        pos_logloss=pos_ll,
        balanced_logloss=bal_ll,
        reliability=rel,
        pred_histogram=hist,
        single_class=single,
    )


def summary_row(dataset: str, method: str, reports: Sequence[MetricReport]) -> str:
    """One line of the results table: mean and sd of AUC and log-likelihood, means of the rest."""

    def ms(vals):
        a = np.asarray(vals, dtype=float)
        sd = float(np.std(a, ddof=1)) if len(a) > 1 else 0.0
        return float(np.mean(a)), sd

    auc = ms([r.auc for r in reports])
    ll = ms([r.loglik for r in reports])
    rest = [float(np.mean([getattr(r, f) for r in reports])) for f in ("brier", "ece", "ap", "pos_logloss", "balanced_logloss")]
    vals = [*auc, *ll, *rest]
    return ",".join([dataset, method] + [repr(v) for v in vals])


def predict_wl(lg: LatentGraph, split: HoldoutSplit, method: str = "degree", K: int = 128, kappa: float = 1.0) -> np.ndarray:
    fit = fit_pipeline(lg, method, K, kappa, holdout=split.test)
    return fit.predict(*split.pairs())


def baseline_histogram(lg: LatentGraph, method: str, K: int, split: HoldoutSplit) -> np.ndarray:
    """Seriation, binning and smoothed cell frequencies only; predictions read from cells."""
    bh = block_histogram(lg, method, K, holdout=split.test)
    return bh.predict(*split.pairs())


def baseline_sbm(lg: LatentGraph, K_blocks: int, split: HoldoutSplit, method: str = "degree") -> np.ndarray:
    """Coarse block model: ``K_blocks`` contiguous groups along the ordering, smoothed block-pair means."""
    if K_blocks < 1:
        raise ValueError("K_blocks must be at least 1")
    return baseline_histogram(lg, method, K_blocks, split)


@dataclass(frozen=True)
class SweepCell:
    K: int
    kappa: float
    logloss_mean: float
    logloss_sd: float
    auc_mean: float
    auc_sd: float
    loglosses: tuple


def robustness_sweep(
    lg: LatentGraph,
    Ks: Sequence[int] = (64, 128, 256),
    kappas: Sequence[float] = (0.5, 1.0, 2.0),
    splits: Sequence[HoldoutSplit] = (),
    method: str = "degree",
) -> list[SweepCell]:
    """Held-out logloss and AUC of the fitted pipeline over the ``K x kappa`` grid."""
    if not splits:
        raise ValueError("at least one split is required")
    cells = []
    for K in Ks:
        for kappa in kappas:
            reps = []
            for sp in splits:
                preds = predict_wl(lg, sp, method, K, kappa)
                reps.append(score_predictions(preds, sp.labels(lg), seed=sp.seed))
            ll = np.array([r.logloss for r in reps])
            auc = np.array([r.auc for r in reps])
            ddof = 1 if len(reps) > 1 else 0
            cells.append(
                SweepCell(int(K), float(kappa), float(ll.mean()), float(ll.std(ddof=ddof)),
                          float(auc.mean()), float(auc.std(ddof=ddof)), tuple(float(v) for v in ll))
            )
    return cells


def sweep_csv(cells: Sequence[SweepCell]) -> str:
    lines = ["K,kappa,logloss_mean,logloss_sd,auc_mean,auc_sd"]
    for c in cells:
        lines.append(f"{c.K},{c.kappa!r},{c.logloss_mean!r},{c.logloss_sd!r},{c.auc_mean!r},{c.auc_sd!r}")
    return "\n".join(lines) + "\n"
