"""Latent-position graph sampling.

Each vertex gets ``U_i ~ Uniform(0, 1)`` and each dyad ``i < j`` an edge with
probability ``W(U_i, U_j)``. Row ``i`` of the upper triangle draws its
uniforms ``xi_{i, i+1..n-1}`` from its own stream keyed by ``(seed, i)``, so
the output does not depend on how rows are split across worker threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .basis import cell_index
from ._dyads import n_dyads, pair_to_index
from ._rng import rng_for
from .kernel import Graphon

_ROW_BATCH = 64


def _as_graphon(g) -> Graphon:
    return g if isinstance(g, Graphon) else Graphon(g)


def sample_latent_positions(n: int, seed: int) -> np.ndarray:
    """``n`` uniforms in the open interval; exact zeros are redrawn."""
    rng = rng_for(seed, "latent")
    u = rng.random(n)
    bad = u <= 0.0
    while bad.any():
        u[bad] = rng.random(int(bad.sum()))
        bad = u <= 0.0
    return u


@dataclass(frozen=True, eq=False)
class LatentGraph:
    """Undirected simple graph plus (optionally) its latent positions.

    The adjacency is a packed bit array over the upper triangle in row-major
    dyad order. ``U`` is ``None`` for graphs read from an edge list.
    """

    n: int
    U: np.ndarray | None
    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.U is not None and len(self.U) != self.n:
            raise ValueError("U must have length n")
        if len(self.bits) != (n_dyads(self.n) + 7) // 8:
            raise ValueError("bit array has the wrong length")

    @classmethod
    def from_edges(cls, n: int, edges, U=None) -> "LatentGraph":
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise ValueError("edge endpoint out of range")
        e = e[e[:, 0] != e[:, 1]]
        flags = np.zeros(n_dyads(n), dtype=bool)
        flags[pair_to_index(e[:, 0], e[:, 1], n)] = True
        return cls(n, None if U is None else np.asarray(U, dtype=float), np.packbits(flags))

    @classmethod
    def from_adjacency(cls, A, U=None) -> "LatentGraph":
        A = np.asarray(A)
        n = A.shape[0]
        iu = np.triu_indices(n, 1)
        return cls(n, None if U is None else np.asarray(U, dtype=float), np.packbits(A[iu] != 0))

    def dyad_flags(self) -> np.ndarray:
        """Boolean vector over the ``n(n-1)/2`` dyads."""
        return np.unpackbits(self.bits, count=n_dyads(self.n)).astype(bool)

    def edges(self) -> np.ndarray:
        """``(m, 2)`` array of ``i < j`` pairs in row-major order."""
        iu, ju = np.triu_indices(self.n, 1)
        on = self.dyad_flags()
        return np.column_stack([iu[on], ju[on]]).astype(np.int64)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n), dtype=np.uint8)
        e = self.edges()
        A[e[:, 0], e[:, 1]] = 1
        A[e[:, 1], e[:, 0]] = 1
        return A

    def to_sparse(self) -> sparse.csr_matrix:
        e = self.edges()
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        data = np.ones(len(rows), dtype=np.int8)
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def has_edge(self, i: int, j: int) -> bool:
        if i == j:
            return False
        k = int(pair_to_index(i, j, self.n))
        return bool((self.bits[k >> 3] >> (7 - (k & 7))) & 1)

    @property
    def n_edges(self) -> int:
        return int(np.unpackbits(self.bits).sum())

    def degrees(self) -> np.ndarray:
        e = self.edges()
        return np.bincount(e.ravel(), minlength=self.n)

    def density(self) -> float:
        N = n_dyads(self.n)
        return self.n_edges / N if N else 0.0

    def permuted(self, perm) -> "LatentGraph":
        """Relabel so that new vertex ``a`` is old vertex ``perm[a]``."""
        perm = np.asarray(perm)
        inv = np.argsort(perm)
        e = inv[self.edges()]
        U = None if self.U is None else self.U[perm]
        return LatentGraph.from_edges(self.n, e, U)


@dataclass(frozen=True, eq=False)
class CoupledSample:
    """A graph with its dyad uniforms retained: ``A_ij = 1{xi_ij <= W(U_i, U_j)}``."""

    graph: LatentGraph
    xi: np.ndarray  # upper-triangular dyads, row-major

    def check(self, g) -> bool:
        g = _as_graphon(g)
        w = upper_probabilities(g, self.graph.U)
        return bool(np.array_equal(self.xi <= w, self.graph.dyad_flags()))


def upper_probabilities(g, u) -> np.ndarray:
    """``W(U_i, U_j)`` for all ``i < j`` in row-major dyad order."""
    g = _as_graphon(g)
    k = g.min_grid
    surf = g.surface(k)
    cells = cell_index(u, k)
    iu, ju = np.triu_indices(len(u), 1)
    return surf[cells[iu], cells[ju]]


def _row_uniforms(seed: int, label: str, i: int, n: int) -> np.ndarray:
    return rng_for(seed, label, i).random(n - i - 1)


def _row_probabilities(surf: np.ndarray, cells: np.ndarray, i: int) -> np.ndarray:
    return surf[cells[i], cells[i + 1 :]]


def _run_rows(n: int, work, threads: int | None) -> list:
    batches = [range(s, min(s + _ROW_BATCH, n)) for s in range(0, max(n - 1, 0), _ROW_BATCH)]

    def run(rows):
        return [work(i) for i in rows]

    threads = threads or min(8, os.cpu_count() or 1)
    if threads <= 1 or len(batches) <= 1:
        out = [run(b) for b in batches]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(run, batches))
    return [row for batch in out for row in batch]


def _draw(g: Graphon, u: np.ndarray, seed: int, label: str, keep_xi: bool, threads: int | None):
    n = len(u)
    k = g.min_grid
    surf = g.surface(k)
    cells = cell_index(u, k)

    def work(i):
        xi = _row_uniforms(seed, label, i, n)
        hit = xi <= _row_probabilities(surf, cells, i)
        return (hit, xi) if keep_xi else hit

    rows = _run_rows(n, work, threads)
    if keep_xi:
        flags = np.concatenate([r[0] for r in rows]) if rows else np.zeros(0, dtype=bool)
        xi = np.concatenate([r[1] for r in rows]) if rows else np.zeros(0)
        return flags, xi
    flags = np.concatenate(rows) if rows else np.zeros(0, dtype=bool)
    return flags, None


def sample_graph(g, n: int, seed: int, threads: int | None = None) -> LatentGraph:
    """Draw ``U`` and a conditionally independent Bernoulli adjacency.

    Args:
        g: a ``Graphon`` or ``BandCoefficients``.
        n: vertex count, at least 1.
        seed: non-negative integer.
        threads: worker threads; the output is identical for any value.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    g = _as_graphon(g)
    u = sample_latent_positions(n, seed)
    flags, _ = _draw(g, u, seed, "edges", False, threads)
    return LatentGraph(n, u, np.packbits(flags))


def sample_coupled(g, n: int, seed: int, threads: int | None = None) -> CoupledSample:
    if n < 1:
        raise ValueError("n must be at least 1")
    g = _as_graphon(g)
    u = sample_latent_positions(n, seed)
    flags, xi = _draw(g, u, seed, "edges", True, threads)
    return CoupledSample(LatentGraph(n, u, np.packbits(flags)), xi)


def sample_edges_given_latent(g, u, seed: int, replicate: int = 0, threads: int | None = None) -> LatentGraph:
    """Fresh edges for fixed latent positions; ``replicate`` selects an independent draw."""
    g = _as_graphon(g)
    u = np.asarray(u, dtype=float)
    flags, _ = _draw(g, u, seed, f"edges-given-latent/{replicate}", False, threads)
    return LatentGraph(len(u), u, np.packbits(flags))


def coupled_from(U, xi, g) -> CoupledSample:
    """Rebuild a coupled sample from given ``(U, xi)``."""
    U = np.asarray(U, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if len(xi) != n_dyads(len(U)):
        raise ValueError("xi must have one entry per dyad")
    flags = xi <= upper_probabilities(g, U)
    return CoupledSample(LatentGraph(len(U), U, np.packbits(flags)), xi)


def permute_coupled(cs: CoupledSample, perm) -> tuple[np.ndarray, np.ndarray]:
    """Permuted ``(U, xi)``: vertex ``a`` of the result is vertex ``perm[a]`` of ``cs``."""
    perm = np.asarray(perm)
    n = cs.graph.n
    a, b = np.triu_indices(n, 1)
    xi = cs.xi[pair_to_index(perm[a], perm[b], n)]
    return cs.graph.U[perm], xi


def empirical_step_graphon(lg: LatentGraph) -> np.ndarray:
    """``n x n`` 0/1 surface with vertices sorted by ``U`` (stable on ties)."""
    A = lg.adjacency().astype(float)
    if lg.U is None:
        return A
    order = np.argsort(lg.U, kind="stable")
    return A[np.ix_(order, order)]


def write_edge_list(lg: LatentGraph, path) -> None:
    e = lg.edges()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={lg.n} m={len(e)}\n")
        for i, j in e:
            fh.write(f"{i} {j}\n")


def read_edge_list(path, n: int | None = None) -> LatentGraph:
    """Parse ``i j`` lines; symmetrizes, drops self-loops and duplicates.

    The vertex count is taken from ``n``, else from a ``# n=...`` header,
    else from the largest id seen.
    """
    pairs = []
    header_n = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("n="):
                        header_n = int(tok[2:])
                continue
            parts = line.split()
            if len(parts) < 2:
                raise ValueError(f"line {lineno}: expected 'i j'")
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise ValueError(f"line {lineno}: non-integer vertex id") from exc
            if i < 0 or j < 0:
                raise ValueError(f"line {lineno}: negative vertex id")
            pairs.append((i, j))
    e = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    if n is None:
        n = header_n if header_n is not None else (int(e.max()) + 1 if e.size else 1)
    return LatentGraph.from_edges(n, e)
