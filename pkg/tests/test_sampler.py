import numpy as np
import pytest
from scipy import stats

from wlerg.kernel import BandCoefficients, Graphon, from_constant, from_two_block, hierarchical_kernel
from wlerg.sampler import (
    LatentGraph,
    coupled_from,
    empirical_step_graphon,
    permute_coupled,
    read_edge_list,
    sample_coupled,
    sample_edges_given_latent,
    sample_graph,
    upper_probabilities,
    write_edge_list,
)


def test_single_vertex():
    lg = sample_graph(Graphon(from_constant(0.5)), 1, seed=3)
    assert lg.n == 1 and lg.n_edges == 0 and lg.adjacency().shape == (1, 1)


def test_zero_vertices_rejected():
    with pytest.raises(ValueError):
        sample_graph(Graphon(from_constant(0.5)), 0, seed=3)


def test_er_density():
    lg = sample_graph(Graphon(from_constant(0.3)), 2000, seed=11)
    assert 0.27 <= lg.density() <= 0.33


def test_two_block_within_density():
    lg = sample_graph(Graphon(from_two_block(0.8, 0.2)), 2000, seed=12)
    left = lg.U < 0.5
    A = lg.adjacency().astype(float)
    same = left[:, None] == left[None, :]
    np.fill_diagonal(same, False)
    assert 0.77 <= A[same].mean() <= 0.83


def test_adjacency_invariants():
    lg = sample_graph(Graphon(hierarchical_kernel(0.0, [1.0, -0.5])), 300, seed=1)
    A = lg.adjacency()
    np.testing.assert_array_equal(A, A.T)
    assert not np.diag(A).any()
    assert np.all((lg.U > 0) & (lg.U < 1))
    assert lg.n_edges == A.sum() // 2
    assert (lg.to_sparse().toarray() == A).all()
    np.testing.assert_array_equal(lg.degrees(), A.sum(1))
    i, j = lg.edges()[0]
    assert lg.has_edge(i, j) and lg.has_edge(j, i) and not lg.has_edge(i, i)


def test_thread_count_invariance():
    g = Graphon(from_two_block(0.7, 0.3))
    one = sample_graph(g, 700, seed=5, threads=1)
    eight = sample_graph(g, 700, seed=5, threads=8)
    np.testing.assert_array_equal(one.bits, eight.bits)
    np.testing.assert_array_equal(one.U, eight.U)


def test_seed_changes_output():
    g = Graphon(from_constant(0.5))
    assert not np.array_equal(sample_graph(g, 100, 1).bits, sample_graph(g, 100, 2).bits)


def test_conditional_mean_given_latent():
    g = Graphon(hierarchical_kernel(-0.3, [1.2, 0.6, -0.4]))
    n, reps = 25, 10_000
    u = np.random.default_rng(0).random(n)
    w = upper_probabilities(g, u)
    total = np.zeros_like(w)
    for r in range(reps):
        total += sample_edges_given_latent(g, u, seed=9, replicate=r, threads=1).dyad_flags()
    mean = total / reps
    se = np.sqrt(w * (1 - w) / reps)
    assert np.mean(np.abs(mean - w) <= 4 * se) >= 0.99


class TestCoupled:
    def test_indicator_exact(self):
        g = Graphon(hierarchical_kernel(0.2, [1.0, 0.5]))
        cs = sample_coupled(g, 200, seed=4)
        assert cs.check(g)
        w = upper_probabilities(g, cs.graph.U)
        np.testing.assert_array_equal(cs.graph.dyad_flags(), cs.xi <= w)

    def test_matches_plain_sampler(self):
        g = Graphon(from_two_block(0.6, 0.3))
        np.testing.assert_array_equal(sample_coupled(g, 150, 8).graph.bits, sample_graph(g, 150, 8).bits)

    def test_indicator_examples(self):
        g = Graphon(from_constant(0.3))
        assert coupled_from([0.2, 0.7], [0.1], g).graph.has_edge(0, 1)
        assert not coupled_from([0.2, 0.7], [0.5], g).graph.has_edge(0, 1)

    def test_permutation_equivariance(self):
        g = Graphon(from_two_block(0.7, 0.2))
        cs = sample_coupled(g, 5, seed=21)
        A = cs.graph.adjacency()
        rng = np.random.default_rng(1)
        for _ in range(10):
            perm = rng.permutation(5)
            U2, xi2 = permute_coupled(cs, perm)
            Ap = coupled_from(U2, xi2, g).graph.adjacency()
            np.testing.assert_array_equal(Ap, A[np.ix_(perm, perm)])
            np.testing.assert_array_equal(cs.graph.permuted(perm).adjacency(), Ap)


class TestEmpiricalStepGraphon:
    def test_single_edge(self):
        lg = LatentGraph.from_edges(2, [(0, 1)], U=[0.7, 0.2])
        np.testing.assert_array_equal(empirical_step_graphon(lg), [[0, 1], [1, 0]])

    def test_empty(self):
        lg = LatentGraph.from_edges(4, [], U=[0.1, 0.2, 0.3, 0.4])
        assert not empirical_step_graphon(lg).any()

    def test_complete(self):
        lg = LatentGraph.from_edges(3, [(0, 1), (0, 2), (1, 2)], U=[0.5, 0.1, 0.9])
        np.testing.assert_array_equal(empirical_step_graphon(lg), 1 - np.eye(3))

    def test_sorted_by_latent(self):
        lg = LatentGraph.from_edges(3, [(0, 2)], U=[0.9, 0.5, 0.1])
        # order by U is 2, 1, 0
        np.testing.assert_array_equal(empirical_step_graphon(lg), [[0, 0, 1], [0, 0, 0], [1, 0, 0]])


class TestEdgeListIO:
    def test_round_trip(self, tmp_path):
        lg = sample_graph(Graphon(from_constant(0.2)), 60, seed=2)
        p = tmp_path / "g.txt"
        write_edge_list(lg, p)
        back = read_edge_list(p)
        assert back.n == 60 and back.U is None
        np.testing.assert_array_equal(back.bits, lg.bits)

    def test_symmetrize_dedupe_self_loops(self, tmp_path):
        p = tmp_path / "g.txt"
        p.write_text("# comment\n0 1\n1 0\n2 2\n\n3 1 extra\n")
        lg = read_edge_list(p)
        assert lg.n == 4
        assert lg.edges().tolist() == [[0, 1], [1, 3]]

    def test_bad_line(self, tmp_path):
        p = tmp_path / "g.txt"
        p.write_text("0 x\n")
        with pytest.raises(ValueError):
            read_edge_list(p)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            LatentGraph.from_edges(2, [(0, 5)])


def test_density_binomial_consistency():
    # ER edge count is Binomial(N, p); a two-sided 1e-6 band never trips on a fixed seed
    n, p = 400, 0.1
    lg = sample_graph(BandCoefficients(float(np.log(p / (1 - p)))), n, seed=0)
    N = n * (n - 1) // 2
    lo, hi = stats.binom.ppf([1e-7, 1 - 1e-7], N, p)
    assert lo <= lg.n_edges <= hi
