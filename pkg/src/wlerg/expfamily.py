"""Conditional exponential family of a logistic wavelet graph given ``U``.

Given latent positions, dyads are independent Bernoulli with logit
``eta(U_i, U_j)``, so the law of ``A`` is an exponential family with
statistics ``S_00 = sum A_ij`` and ``S_rs = sum A_ij psi_r(U_i) psi_s(U_j)``
(sums over ``i < j``). This module computes those statistics, the
log-partition, likelihoods, small-``n`` enumeration checks, canonical tilts,
and the limiting log-MGF ``Lambda`` with its convex conjugate ``I``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.linalg import null_space
from scipy.special import expit, logsumexp

from .basis import WaveletIndex, basis_matrix
from .diagnostics import energy_spectrum, homomorphism_density
from .estimator import empirical_coefficients
from .kernel import BandCoefficients, Graphon, logit_eval, softplus
from .sampler import LatentGraph, sample_graph

Pair = tuple[WaveletIndex, WaveletIndex]

MAX_ENUMERATION_N = 5


class BoundaryMomentError(RuntimeError):
    """Newton iteration for the conjugate did not converge (target on or outside the boundary)."""


@dataclass(frozen=True)
class StatisticIndexSet:
    """Ordered 2D index pairs closed under swapping; the DC-by-DC pair is excluded."""

    pairs: tuple[Pair, ...]

    def __post_init__(self):
        ps = tuple(self.pairs)
        s = set(ps)
        if len(s) != len(ps):
            raise ValueError("duplicate pairs")
        for a, b in ps:
            if a.is_dc and b.is_dc:
                raise ValueError("the DC-by-DC pair is confounded with the offset")
            if (b, a) not in s:
                raise ValueError(f"pair {(a, b)} present without its mirror")
        object.__setattr__(self, "pairs", ps)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Pair]) -> "StatisticIndexSet":
        """Symmetric closure of ``pairs`` in sorted order."""
        s = set()
        for a, b in pairs:
            s.add((a, b))
            s.add((b, a))
        return cls(tuple(sorted(s)))

    @classmethod
    def for_kernel(cls, coeffs: BandCoefficients) -> "StatisticIndexSet":
        return cls.from_pairs(coeffs.entries.keys())

    def __len__(self):
        return len(self.pairs)

    def canonical(self) -> list[Pair]:
        return [(a, b) for a, b in self.pairs if a <= b]

    def indices(self) -> list[WaveletIndex]:
        return sorted({i for p in self.pairs for i in p})


@dataclass(frozen=True)
class TiltVector:
    """``g(x, y) = lam0 + sum lam_rs psi_r(x) psi_s(y)`` with symmetric ``lam``.

    ``entries`` takes one orientation per pair, like :class:`BandCoefficients`.
    """

    lam0: float = 0.0
    entries: dict = field(default_factory=dict)

    def as_coefficients(self) -> BandCoefficients:
        return BandCoefficients(self.lam0, self.entries)

    def scaled(self, t: float) -> "TiltVector":
        return TiltVector(t * self.lam0, {k: t * v for k, v in self.as_coefficients().entries.items()})

    def __add__(self, other: "TiltVector") -> "TiltVector":
        co = self.as_coefficients().shifted(other.lam0, other.as_coefficients().entries)
        return TiltVector(co.c, dict(co.entries))

    @classmethod
    def from_vector(cls, pairs: Sequence[Pair], vec) -> "TiltVector":
        """Inverse of :func:`tilt_coordinates` for canonical ``pairs``."""
        vec = np.asarray(vec, dtype=float)
        return cls(float(vec[0]), {p: float(v) for p, v in zip(pairs, vec[1:])})


def tilt_coordinates(lam: TiltVector, pairs: Sequence[Pair]) -> np.ndarray:
    co = lam.as_coefficients()
    extra = set(co.entries) - set(pairs)
    if extra:
        raise ValueError(f"tilt has coefficients outside the coordinate set: {sorted(extra)}")
    return np.array([co.c] + [co.get(a, b) for a, b in pairs])


def theta_vector(theta: BandCoefficients, I: StatisticIndexSet) -> np.ndarray:
    """``(c, s_rs for rs in I)`` aligned with :func:`sufficient_statistics`."""
    support = set(theta.entries)
    have = {(a, b) if a <= b else (b, a) for a, b in I.pairs}
    if not support <= have:
        raise ValueError("theta has coefficients outside the statistic index set")
    return np.array([theta.c] + [theta.get(a, b) for a, b in I.pairs])


def _dyad_features(U, I: StatisticIndexSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-dyad statistic contributions ``(1, psi_r(U_i) psi_s(U_j), ...)`` for ``i < j``."""
    U = np.asarray(U, dtype=float)
    idx = I.indices()
    pos = {ix: k for k, ix in enumerate(idx)}
    B = basis_matrix(idx, U) if idx else np.zeros((len(U), 0))
    iu, ju = np.triu_indices(len(U), 1)
    feats = np.empty((len(iu), 1 + len(I)))
    feats[:, 0] = 1.0
    for k, (a, b) in enumerate(I.pairs):
        feats[:, 1 + k] = B[iu, pos[a]] * B[ju, pos[b]]
    return feats, iu, ju


def sufficient_statistics(lg: LatentGraph, I: StatisticIndexSet) -> np.ndarray:
    """``(S_00, S_rs for rs in I)`` as exact sums over edges ``i < j``."""
    if lg.U is None:
        raise ValueError("latent positions are required")
    e = lg.edges()
    out = np.zeros(1 + len(I))
    out[0] = len(e)
    if len(e) == 0 or len(I) == 0:
        return out
    idx = I.indices()
    B = basis_matrix(idx, lg.U)
    pos = {ix: k for k, ix in enumerate(idx)}
    for k, (a, b) in enumerate(I.pairs):
        out[1 + k] = float(np.sum(B[e[:, 0], pos[a]] * B[e[:, 1], pos[b]]))
    return out


def _dyad_logits(theta: BandCoefficients, U) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    iu, ju = np.triu_indices(len(U), 1)
    return np.asarray(logit_eval(theta, U[iu], U[ju]), dtype=float).reshape(-1)


def log_partition(theta: BandCoefficients, U) -> float:
    """``sum_{i<j} log(1 + exp(eta(U_i, U_j)))``."""
    return float(np.sum(softplus(_dyad_logits(theta, U))))


def conditional_loglik(lg: LatentGraph, theta: BandCoefficients, I: StatisticIndexSet | None = None) -> float:
    """``c S_00 + sum s_rs S_rs - Psi``."""
    I = StatisticIndexSet.for_kernel(theta) if I is None else I
    T = sufficient_statistics(lg, I)
    return float(theta_vector(theta, I) @ T - log_partition(theta, lg.U))


def conditional_logmgf(g0, lam: TiltVector, U) -> float:
    """Per-dyad normalization of the tilted conditional law at fixed ``U``.

    ``(1/N) sum_{i<j} log(1 - W_ij + W_ij exp(g(U_i, U_j)))``, whose large-``n``
    limit is :func:`limiting_logmgf`.
    """
    co = _coeffs(g0)
    eta = _dyad_logits(co, U)
    g = _dyad_logits(lam.as_coefficients(), U)
    if len(eta) == 0:
        return 0.0
    return float(np.mean(softplus(eta + g) - softplus(eta)))


class Enumeration(NamedTuple):
    flags: np.ndarray  # (2^N, N) adjacency patterns over dyads i<j
    statistics: np.ndarray  # (2^N, 1+|I|)
    probabilities: np.ndarray  # (2^N,)
    log_partition: float


def enumerate_family(theta: BandCoefficients, U, I: StatisticIndexSet | None = None) -> Enumeration:
    """All ``2^N`` graphs with their statistics and exact probabilities (``n <= 5``)."""
    U = np.asarray(U, dtype=float)
    if len(U) > MAX_ENUMERATION_N:
        raise ValueError(f"enumeration is limited to n <= {MAX_ENUMERATION_N}")
    I = StatisticIndexSet.for_kernel(theta) if I is None else I
    feats, _, _ = _dyad_features(U, I)
    N = feats.shape[0]
    flags = np.array(list(itertools.product([0, 1], repeat=N)), dtype=float).reshape(-1, N)
    T = flags @ feats
    logw = T @ theta_vector(theta, I)
    psi = float(logsumexp(logw))
    return Enumeration(flags.astype(bool), T, np.exp(logw - psi), psi)


class MaxEntReport(NamedTuple):
    entropy: float
    log_partition: float
    moments: np.ndarray


def maxent_entropy_identity(theta: BandCoefficients, U, I: StatisticIndexSet | None = None) -> MaxEntReport:
    """Exact entropy, log-partition and mean statistics by enumeration.

    The caller compares ``entropy`` with ``log_partition - <theta, moments>``.
    """
    en = enumerate_family(theta, U, I)
    P = en.probabilities
    nz = P > 0
    H = float(-np.sum(P[nz] * np.log(P[nz])))
    return MaxEntReport(H, log_partition(theta, U), P @ en.statistics)


def entropy(P) -> float:
    P = np.asarray(P, dtype=float)
    nz = P > 0
    return float(-np.sum(P[nz] * np.log(P[nz])))


def moment_preserving_perturbation(P, T, rng: np.random.Generator, strength: float = 0.5) -> np.ndarray:
    """A random distribution with the same total mass and mean statistics as ``P``.

    The step lies in the null space of the moment constraints and is scaled
    to a fraction ``strength`` of the largest step that keeps every entry
    non-negative.
    """
    P = np.asarray(P, dtype=float)
    M = np.column_stack([np.ones(len(P)), T]).T
    V = null_space(M)
    if V.shape[1] == 0:
        return P.copy()
    v = V @ rng.normal(size=V.shape[1])
    neg = v < 0
    limit = np.min(P[neg] / -v[neg]) if neg.any() else 1.0
    return P + strength * limit * v


def _coeffs(g) -> BandCoefficients:
    return g.coeffs if isinstance(g, Graphon) else g


def tilted_kernel(g0, lam: TiltVector) -> Graphon:
    """Shift the logit by ``g_lambda``; coefficients add."""
    co = _coeffs(g0)
    tilt = lam.as_coefficients()
    if co.band is not None:
        lo, hi = co.band
        for pair in tilt.entries:
            for ix in pair:
                if not ix.is_dc and not lo <= ix.j <= hi:
                    raise ValueError(f"tilt index {ix} outside band {co.band}")
    return Graphon(co.shifted(tilt.c, tilt.entries))


@dataclass(frozen=True)
class MgfReport:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    min_eigenvalue: float
    gridsize: int
    pairs: tuple[Pair, ...]


def _tilt_pairs(g0, lam: TiltVector | None, pairs) -> tuple[Pair, ...]:
    if pairs is not None:
        return tuple(pairs)
    if lam is None:
        return ()
    return tuple(lam.as_coefficients().entries.keys())


def _feature_grid(pairs: Sequence[Pair], k: int) -> np.ndarray:
    """``phi_0 = 1`` and ``phi_rs = psi_r psi_s + psi_s psi_r`` (once on the diagonal) at cell midpoints."""
    mid = (np.arange(k) + 0.5) / k
    idx = sorted({i for p in pairs for i in p})
    B = basis_matrix(idx, mid) if idx else np.zeros((k, 0))
    pos = {ix: n for n, ix in enumerate(idx)}
    out = np.empty((1 + len(pairs), k, k))
    out[0] = 1.0
    for n, (a, b) in enumerate(pairs):
        ba, bb = B[:, pos[a]], B[:, pos[b]]
        out[1 + n] = np.outer(ba, bb) if a == b else np.outer(ba, bb) + np.outer(bb, ba)
    return out


class _LogMgf:
    """``Lambda`` on a fixed grid and coordinate set, for repeated evaluation."""

    def __init__(self, g0, pairs: Sequence[Pair], gridsize: int | None):
        co = _coeffs(g0)
        top = max([co.max_scale] + [i.j for p in pairs for i in p] + [-1])
        need = 1 << (top + 2)
        k = max(need, 4) if gridsize is None else int(gridsize)
        if k < need or k & (k - 1):
            raise ValueError(f"gridsize must be a power of two >= {need}")
        self.k = k
        self.pairs = tuple(pairs)
        self.eta = co.logit_surface(k)
        self.phi = _feature_grid(self.pairs, k).reshape(1 + len(self.pairs), -1)
        self.eta = self.eta.reshape(-1)
        self.base = softplus(self.eta)

    def __call__(self, vec, order: int = 2):
        g = np.asarray(vec, dtype=float) @ self.phi
        val = float(np.mean(softplus(self.eta + g) - self.base))
        if order == 0:
            return val
        p = expit(self.eta + g)
        grad = self.phi @ p / p.size
        if order == 1:
            return val, grad
        w = p * (1 - p)
        hess = (self.phi * w) @ self.phi.T / p.size
        return val, grad, 0.5 * (hess + hess.T)


def limiting_logmgf(g0, lam: TiltVector, gridsize: int | None = None, pairs=None) -> MgfReport:
    """``Lambda(lam) = int log(1 - W + W e^{g_lam})`` by midpoint quadrature.

    Coordinates are ``(lam0, lam_rs for canonical rs)``; the gradient and
    Hessian are taken in those coordinates. ``pairs`` fixes the coordinate set
    (default: the tilt's own support).
    """
    pairs = _tilt_pairs(g0, lam, pairs)
    f = _LogMgf(g0, pairs, gridsize)
    val, grad, hess = f(tilt_coordinates(lam, pairs))
    return MgfReport(val, grad, hess, float(np.linalg.eigvalsh(hess)[0]), f.k, pairs)


def mean_statistics(g0, pairs: Sequence[Pair] = (), gridsize: int | None = None) -> np.ndarray:
    """Gradient of ``Lambda`` at zero, i.e. the limiting normalized mean statistics."""
    f = _LogMgf(g0, pairs, gridsize)
    return f(np.zeros(1 + len(pairs)), order=1)[1]


class RateResult(NamedTuple):
    value: float
    argmax: np.ndarray
    iterations: int


def rate_function(
    g0,
    t,
    pairs: Sequence[Pair] = (),
    gridsize: int | None = None,
    max_iter: int = 100,
    tol: float = 1e-10,
) -> RateResult:
    """``I(t) = sup_lam <lam, t> - Lambda(lam)`` by damped Newton on ``grad Lambda = t``."""
    f = _LogMgf(g0, pairs, gridsize)
    t = np.asarray(t, dtype=float)
    if t.shape != (1 + len(pairs),):
        raise ValueError("target has the wrong dimension")
    lam = np.zeros_like(t)
    val, grad, hess = f(lam)
    merit = val - lam @ t
    for it in range(max_iter + 1):
        r = grad - t
        if np.linalg.norm(r) < tol:
            return RateResult(float(lam @ t - val), lam, it)
        if it == max_iter:
            break
        try:
            step = -np.linalg.solve(hess, r)
        except np.linalg.LinAlgError as exc:
            raise BoundaryMomentError("singular Hessian") from exc
        a = 1.0
        while True:
            cand = lam + a * step
            cval = f(cand, order=0)
            cmerit = cval - cand @ t
            if np.isfinite(cmerit) and cmerit <= merit + 1e-4 * a * (r @ step):
                break
            a *= 0.5
            if a < 1e-12:
                raise BoundaryMomentError("line search failed; target is at or beyond the moment boundary")
        lam = cand
        val, grad, hess = f(lam)
        merit = val - lam @ t
    raise BoundaryMomentError(f"no convergence within {max_iter} iterations; residual {np.linalg.norm(grad - t):.3e}")


TILT_CSV_HEADER = "t,edge_density_mean,edge_density_sd,triangle_density_mean,triangle_density_sd"


@dataclass(frozen=True)
class TiltRow:
    t: float
    edge_density: tuple[float, float]
    triangle_density: tuple[float, float]
    energy: tuple[tuple[float, float], ...]  # per scale: (mean, sd)


def tilt_path_diagnostics(
    g0,
    direction: TiltVector,
    ts: Sequence[float],
    n: int,
    seeds: Sequence[int],
    max_scale: int | None = None,
    threads: int | None = None,
) -> list[TiltRow]:
    """Sampled edge/triangle densities and wavelet energy along ``t -> g0 + t * direction``.

    The same seeds are used at every ``t`` so the curves share randomness.
    Energies are from empirical coefficients binned by the true latent
    positions, one bucket per scale ``0..max_scale``.
    """
    co = _coeffs(g0)
    top = max(co.max_scale, direction.as_coefficients().max_scale, 0) if max_scale is None else max_scale
    rows = []
    for t in ts:
        g = tilted_kernel(co, direction.scaled(float(t)))
        ed, tri, en = [], [], []
        for s in seeds:
            lg = sample_graph(g, n, int(s), threads=threads)
            ed.append(lg.density())
            tri.append(homomorphism_density(lg, "triangle"))
            wc = empirical_coefficients(lg, top)
            en.append(energy_spectrum(wc).by_scale[: top + 1])
        en = np.array(en)
        ddof = 1 if len(seeds) > 1 else 0
        rows.append(
            TiltRow(
                float(t),
                (float(np.mean(ed)), float(np.std(ed, ddof=ddof))),
                (float(np.mean(tri)), float(np.std(tri, ddof=ddof))),
                tuple((float(m), float(d)) for m, d in zip(en.mean(0), en.std(0, ddof=ddof))),
            )
        )
    return rows


def tilt_table_csv(rows: Sequence[TiltRow]) -> str:
    scales = len(rows[0].energy) if rows else 0
    header = TILT_CSV_HEADER + "".join(f",energy_scale_{j}" for j in range(scales))
    header += "".join(f",energy_scale_{j}_sd" for j in range(scales))
    lines = [header]
    for r in rows:
        vals = [r.t, *r.edge_density, *r.triangle_density]
        vals += [m for m, _ in r.energy] + [d for _, d in r.energy]
        lines.append(",".join(repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"
