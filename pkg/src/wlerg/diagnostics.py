"""Macroscopic graph and kernel summaries: densities, energy spectra, cut-distance proxy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .basis import CoefficientGrid2D, WaveletCoefficients, log2_exact, tensor_scale_map
from .kernel import BandCoefficients, Graphon
from .sampler import LatentGraph

MOTIFS = ("edge", "triangle", "twostar")


def edge_density(lg: LatentGraph) -> float:
    """Fraction of the ``n(n-1)/2`` dyads that are edges."""
    if lg.n < 2:
        raise ValueError("edge density needs n >= 2")
    return lg.density()


def _check_motif(H: str) -> None:
    if H not in MOTIFS:
        raise ValueError(f"unknown motif {H!r}; expected one of {MOTIFS}")


def homomorphism_density(lg: LatentGraph, H: str) -> float:
    """``n^{-k}`` times the number of homomorphisms of ``H`` into the graph."""
    _check_motif(H)
    n = lg.n
    if H == "edge":
        return 2.0 * lg.n_edges / n**2
    deg = lg.degrees().astype(float)
    if H == "twostar":
        return float(np.sum(deg**2)) / n**3
    if lg.n_edges == 0:
        return 0.0
    if lg.density() < 0.05:
        A = lg.to_sparse().astype(np.float64)
        closed = float((A @ A).multiply(A).sum())
    else:
        A = lg.adjacency().astype(np.float64)
        closed = float(np.sum((A @ A) * A))
    return closed / n**3


def homomorphism_density_graphon(H: str, g, gridsize: int | None = None) -> float:
    """Midpoint-rule integral of the motif over the ``gridsize`` dyadic grid.

    Exact for step kernels once ``gridsize`` resolves every breakpoint.
    """
    _check_motif(H)
    g = g if isinstance(g, Graphon) else Graphon(g)
    k = g.min_grid if gridsize is None else gridsize
    if k < g.min_grid:
        raise ValueError(f"gridsize must be at least {g.min_grid}")
    P = g.surface(k)
    if H == "edge":
        return float(P.mean())
    if H == "twostar":
        return float(np.mean(P.mean(axis=1) ** 2))
    return float(np.trace(P @ P @ P)) / k**3


class BandCheck(NamedTuple):
    inside: bool
    margin: float


def band_region_check(coeffs: BandCoefficients, B: float, band: tuple[int, int] | None = None) -> BandCheck:
    """Membership in ``{|c| <= B, sum s^2 <= B^2}`` (closed), with optional scale band.

    ``margin = min(B - |c|, B - ||S||)``; negative outside the region.
    """
    norm = float(np.sqrt(coeffs.squared_norm()))
    margin = min(B - abs(coeffs.c), B - norm)
    inside = abs(coeffs.c) <= B and coeffs.squared_norm() <= B * B
    if band is not None:
        lo, hi = band
        for pair in coeffs.entries:
            if any(not ix.is_dc and not lo <= ix.j <= hi for ix in pair):
                inside = False
    return BandCheck(bool(inside), float(margin))


@dataclass(frozen=True)
class EnergySpectrum:
    """Squared coefficient mass bucketed by ``max(j1, j2)``; DC-by-DC separately."""

    dc: float
    by_scale: np.ndarray

    @property
    def total(self) -> float:
        return self.dc + float(self.by_scale.sum())

    def to_csv(self) -> str:
        lines = ["scale,energy", f"dc,{self.dc!r}"]
        lines += [f"{j},{float(e)!r}" for j, e in enumerate(self.by_scale)]
        return "\n".join(lines) + "\n"


def energy_spectrum(coeffs) -> EnergySpectrum:
    """Energy by scale for a kernel, a coefficient array, or a transform output."""
    if isinstance(coeffs, BandCoefficients):
        top = coeffs.max_scale
        by = np.zeros(max(top + 1, 0))
        dc = coeffs.c**2
        for a, b, v in coeffs.ordered_items():
            j = max(a.j, b.j)
            if j < 0:
                dc += v * v
            else:
                by[j] += v * v
        return EnergySpectrum(float(dc), by)
    if isinstance(coeffs, (CoefficientGrid2D, WaveletCoefficients)):
        v = coeffs.values
    else:
        v = np.asarray(coeffs, dtype=float)
    m = v.shape[0]
    scales = tensor_scale_map(m)
    sq = v * v
    detail = scales >= 0
    by = np.bincount(scales[detail], weights=sq[detail], minlength=log2_exact(m))
    return EnergySpectrum(float(sq[scales < 0].sum()), by)


class CutProxy(NamedTuple):
    lower: float
    upper: float


def _greedy_rectangle(F: np.ndarray, sign: float, max_iter: int = 100) -> float:
    cols = np.ones(F.shape[1], dtype=bool)
    best = 0.0
    for _ in range(max_iter):
        rows = sign * (F @ cols) > 0
        colsum = rows @ F
        new_cols = sign * colsum > 0
        val = sign * colsum[new_cols].sum()
        best = max(best, val)
        if np.array_equal(new_cols, cols):
            break
        cols = new_cols
    return float(best)


def cut_distance_proxy(step1, step2) -> CutProxy:
    """Lower bound on ``||W1 - W2||_cut`` over rectangles of grid cells, plus the ``L1`` upper bound.

    Rows and columns are chosen by alternating sign selection, once for each
    sign of the integral.
    """
    a = np.asarray(step1, dtype=float)
    b = np.asarray(step2, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("surfaces must be square with equal size")
    F = a - b
    cells = F.size
    lower = max(_greedy_rectangle(F, 1.0), _greedy_rectangle(F, -1.0)) / cells
    upper = float(np.abs(F).sum()) / cells
    return CutProxy(min(lower, upper), upper)


def diagnostics_csv(lg: LatentGraph) -> str:
    rows = [("edge_density", edge_density(lg))]
    rows += [(f"hom_{h}", homomorphism_density(lg, h)) for h in MOTIFS]
    return "quantity,value\n" + "".join(f"{k},{float(v)!r}\n" for k, v in rows)
