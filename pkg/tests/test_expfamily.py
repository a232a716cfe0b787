import itertools
import math

import numpy as np
import pytest

from wlerg.basis import WaveletIndex, eval_haar
from wlerg.expfamily import (
    TILT_CSV_HEADER,
    BoundaryMomentError,
    StatisticIndexSet,
    TiltVector,
    conditional_loglik,
    conditional_logmgf,
    entropy,
    enumerate_family,
    limiting_logmgf,
    log_partition,
    maxent_entropy_identity,
    mean_statistics,
    moment_preserving_perturbation,
    rate_function,
    sufficient_statistics,
    theta_vector,
    tilt_coordinates,
    tilt_path_diagnostics,
    tilt_table_csv,
    tilted_kernel,
)
from wlerg.kernel import (
    BandCoefficients,
    from_constant,
    from_two_block,
    logit_eval,
    project_logit_surface,
    sigmoid,
)
from wlerg.sampler import LatentGraph

DC = WaveletIndex.dc()
P1 = WaveletIndex(0, 0)
P10, P11 = WaveletIndex(1, 0), WaveletIndex(1, 1)


def _random_theta(rng, pairs):
    """Kernel on the canonical orientations of ``pairs`` with random values."""
    I = StatisticIndexSet.from_pairs(pairs)
    entries = {p: float(rng.normal()) for p in I.canonical()}
    return BandCoefficients(float(rng.normal()), entries), I


def _random_graph(rng, n):
    A = np.triu(rng.random((n, n)) < 0.5, 1)
    return LatentGraph.from_adjacency(A | A.T, U=rng.random(n))


class TestIndexSet:
    def test_requires_mirror(self):
        with pytest.raises(ValueError):
            StatisticIndexSet(((P1, P10),))

    def test_rejects_dc_pair(self):
        with pytest.raises(ValueError):
            StatisticIndexSet(((DC, DC),))

    def test_closure(self):
        I = StatisticIndexSet.from_pairs([(P1, P10), (P11, P11)])
        assert len(I) == 3
        assert set(I.pairs) == {(P1, P10), (P10, P1), (P11, P11)}


class TestSufficientStatistics:
    def test_empty_graph(self):
        I = StatisticIndexSet.from_pairs([(P1, P1)])
        lg = LatentGraph.from_edges(4, [], U=[0.1, 0.4, 0.6, 0.9])
        assert np.all(sufficient_statistics(lg, I) == 0)

    def test_hand_example(self):
        I = StatisticIndexSet.from_pairs([(P1, P1)])
        lg = LatentGraph.from_edges(2, [(0, 1)], U=[0.25, 0.75])
        np.testing.assert_array_equal(sufficient_statistics(lg, I), [1.0, -1.0])

    @pytest.mark.parametrize("seed", range(4))
    def test_double_loop_oracle(self, seed):
        rng = np.random.default_rng(seed)
        I = StatisticIndexSet.from_pairs([(P1, P10), (DC, P11), (P10, P10)])
        lg = _random_graph(rng, 3 + seed)
        A, U = lg.adjacency(), lg.U
        want = [A[np.triu_indices(lg.n, 1)].sum()]
        for a, b in I.pairs:
            s = 0.0
            for i in range(lg.n):
                for j in range(i + 1, lg.n):
                    s += A[i, j] * float(eval_haar(a, U[i])) * float(eval_haar(b, U[j]))
            want.append(s)
        np.testing.assert_allclose(sufficient_statistics(lg, I), want, rtol=0, atol=1e-13)


class TestLogPartition:
    def test_zero_theta(self):
        assert log_partition(BandCoefficients(0.0, {}), [0.1, 0.3, 0.5, 0.7]) == pytest.approx(6 * math.log(2))

    def test_scalar(self):
        assert log_partition(BandCoefficients(2.0, {}), [0.2, 0.8]) == pytest.approx(2.126928, abs=1e-6)

    def test_enumeration(self):
        rng = np.random.default_rng(1)
        theta, I = _random_theta(rng, [(P1, P1), (P10, P11)])
        U = rng.random(3)
        total = 0.0
        for flags in itertools.product([0, 1], repeat=3):
            edges = [p for p, f in zip([(0, 1), (0, 2), (1, 2)], flags) if f]
            T = sufficient_statistics(LatentGraph.from_edges(3, edges, U=U), I)
            total += math.exp(theta_vector(theta, I) @ T)
        assert math.exp(log_partition(theta, U)) == pytest.approx(total, rel=1e-12)

    def test_overflow_safe(self):
        assert np.isfinite(log_partition(BandCoefficients(800.0, {}), [0.2, 0.8]))


class TestLoglik:
    def test_zero_theta(self):
        lg = LatentGraph.from_edges(4, [(0, 1)], U=[0.1, 0.3, 0.5, 0.7])
        assert conditional_loglik(lg, BandCoefficients(0.0, {})) == pytest.approx(-6 * math.log(2))

    def test_product_form(self):
        rng = np.random.default_rng(7)
        theta, I = _random_theta(rng, [(P1, P1), (P1, P11)])
        lg = _random_graph(rng, 3)
        A = lg.adjacency()
        want = 0.0
        for i, j in [(0, 1), (0, 2), (1, 2)]:
            p = float(sigmoid(logit_eval(theta, lg.U[i], lg.U[j])))
            want += math.log(p if A[i, j] else 1 - p)
        assert conditional_loglik(lg, theta, I) == pytest.approx(want, abs=1e-12)

    def test_normalized(self):
        rng = np.random.default_rng(8)
        theta, I = _random_theta(rng, [(P10, P10), (P1, P11)])
        U = rng.random(3)
        total = 0.0
        for flags in itertools.product([0, 1], repeat=3):
            edges = [p for p, f in zip([(0, 1), (0, 2), (1, 2)], flags) if f]
            total += math.exp(conditional_loglik(LatentGraph.from_edges(3, edges, U=U), theta, I))
        assert total == pytest.approx(1.0, abs=1e-12)


class TestMaxEnt:
    def test_uniform(self):
        I = StatisticIndexSet.from_pairs([(P1, P1)])
        rep = maxent_entropy_identity(BandCoefficients(0.0, {}), [0.2, 0.5, 0.8], I)
        assert rep.entropy == pytest.approx(3 * math.log(2), abs=1e-14)
        assert rep.entropy == pytest.approx(rep.log_partition, abs=1e-14)

    @pytest.mark.parametrize("seed", range(5))
    def test_identity(self, seed):
        rng = np.random.default_rng(seed)
        theta, I = _random_theta(rng, [(P1, P1), (P10, P11)])
        U = rng.random(3)
        rep = maxent_entropy_identity(theta, U, I)
        assert rep.entropy == pytest.approx(rep.log_partition - theta_vector(theta, I) @ rep.moments, abs=1e-10)

    def test_dominance(self):
        rng = np.random.default_rng(11)
        theta, I = _random_theta(rng, [(P1, P1)])
        en = enumerate_family(theta, rng.random(4), I)
        H = entropy(en.probabilities)
        for _ in range(100):
            Q = moment_preserving_perturbation(en.probabilities, en.statistics, rng)
            assert Q.min() >= -1e-15
            np.testing.assert_allclose(Q @ en.statistics, en.probabilities @ en.statistics, atol=1e-10)
            assert entropy(np.clip(Q, 0, None)) <= H + 1e-12

    def test_enumeration_limit(self):
        with pytest.raises(ValueError):
            enumerate_family(BandCoefficients(0.0, {}), np.linspace(0.1, 0.9, 6))


class TestTilts:
    def test_zero_tilt(self):
        g = from_two_block(0.7, 0.2)
        assert tilted_kernel(g, TiltVector()).coeffs == g

    def test_dc_tilt(self):
        g = tilted_kernel(from_constant(0.5), TiltVector(1.0))
        assert float(g(0.3, 0.9)) == pytest.approx(0.731059, abs=1e-6)

    def test_detail_tilt_adds(self):
        g0 = from_two_block(0.8, 0.3)
        g = tilted_kernel(g0, TiltVector(0.0, {(P1, P1): 0.4}))
        rec = project_logit_surface(g.logit_surface(8))
        assert rec.get(P1, P1) == pytest.approx(g0.get(P1, P1) + 0.4, abs=1e-12)
        assert rec.c == pytest.approx(g0.c, abs=1e-12)

    def test_composition(self):
        g0 = from_two_block(0.8, 0.3)
        l1 = TiltVector(0.3, {(P1, P10): -0.2})
        l2 = TiltVector(-0.1, {(P10, P1): 0.5, (P11, P11): 0.25})
        a = tilted_kernel(tilted_kernel(g0, l1).coeffs, l2).coeffs
        b = tilted_kernel(g0, l1 + l2).coeffs
        assert a.c == b.c and dict(a.entries) == dict(b.entries)

    def test_band_enforced(self):
        g0 = BandCoefficients(0.0, {(P1, P1): 1.0}, band=(0, 0))
        with pytest.raises(ValueError):
            tilted_kernel(g0, TiltVector(0.0, {(P10, P10): 1.0}))

    def test_coordinates_round_trip(self):
        pairs = [(P1, P1), (P1, P10)]
        lam = TiltVector(0.2, {(P1, P1): 0.5, (P10, P1): -1.0})
        vec = tilt_coordinates(lam, pairs)
        np.testing.assert_array_equal(vec, [0.2, 0.5, -1.0])
        back = TiltVector.from_vector(pairs, vec)
        assert dict(back.as_coefficients().entries) == dict(lam.as_coefficients().entries)


def _kernel6():
    g0 = BandCoefficients(-0.3, {(P1, P1): 0.6, (P10, P11): -0.4, (P1, P10): 0.2})
    pairs = [(P1, P1), (P1, P10), (P10, P10), (P11, P11), (P10, P11), (WaveletIndex(2, 1), WaveletIndex(2, 1))]
    return g0, pairs


class TestLogMgf:
    def test_zero(self):
        g0, pairs = _kernel6()
        rep = limiting_logmgf(g0, TiltVector(), pairs=pairs)
        assert rep.value == 0.0

    def test_er_closed_form(self):
        rep = limiting_logmgf(from_constant(0.5), TiltVector(math.log(3)))
        assert rep.value == pytest.approx(math.log(2), abs=1e-14)

    def test_gradient_at_zero(self):
        pairs = [(P1, P1)]
        m = mean_statistics(from_constant(0.3), pairs)
        np.testing.assert_allclose(m, [0.3, 0.0], atol=1e-14)

    def test_gradient_two_block(self):
        # mean of psi1(x)psi1(y) W(x, y) = (p_in - p_out) / 2
        m = mean_statistics(from_two_block(0.8, 0.2), [(P1, P1)])
        np.testing.assert_allclose(m, [0.5, 0.3], atol=1e-14)

    def test_finite_differences(self):
        g0, pairs = _kernel6()
        rng = np.random.default_rng(0)
        for _ in range(5):
            vec = rng.normal(scale=0.7, size=1 + len(pairs))
            rep = limiting_logmgf(g0, TiltVector.from_vector(pairs, vec), 256, pairs)
            fd = np.empty_like(vec)
            h = 1e-6
            for k in range(len(vec)):
                e = np.zeros_like(vec)
                e[k] = h
                up = limiting_logmgf(g0, TiltVector.from_vector(pairs, vec + e), 256, pairs).value
                dn = limiting_logmgf(g0, TiltVector.from_vector(pairs, vec - e), 256, pairs).value
                fd[k] = (up - dn) / (2 * h)
            assert np.linalg.norm(fd - rep.gradient) / np.linalg.norm(rep.gradient) < 1e-5

    def test_convexity(self):
        g0, pairs = _kernel6()
        rng = np.random.default_rng(1)
        for _ in range(20):
            vec = rng.normal(size=1 + len(pairs))
            rep = limiting_logmgf(g0, TiltVector.from_vector(pairs, vec), 256, pairs)
            assert np.array_equal(rep.hessian, rep.hessian.T)
            assert rep.min_eigenvalue > 0
            assert abs(rep.min_eigenvalue - np.linalg.eigvalsh(rep.hessian)[0]) < 1e-8

    def test_grid_validation(self):
        g0, pairs = _kernel6()
        with pytest.raises(ValueError):
            limiting_logmgf(g0, TiltVector(), 8, pairs)

    def test_conditional_matches_limit_for_er(self):
        lam = TiltVector(0.7)
        U = np.random.default_rng(0).random(30)
        want = math.log(1 - 0.3 + 0.3 * math.exp(0.7))
        assert conditional_logmgf(from_constant(0.3), lam, U) == pytest.approx(want, abs=1e-12)

    def test_conditional_approaches_limit(self):
        g0, pairs = _kernel6()
        lam = TiltVector(0.4, {(P1, P1): -0.3, (P10, P11): 0.5})
        U = np.random.default_rng(2).random(1500)
        lim = limiting_logmgf(g0, lam, pairs=pairs).value
        assert conditional_logmgf(g0, lam, U) == pytest.approx(lim, abs=0.01)


class TestRate:
    def test_zero_at_mean(self):
        g0, pairs = _kernel6()
        t = mean_statistics(g0, pairs)
        res = rate_function(g0, t, pairs)
        assert res.value == pytest.approx(0.0, abs=1e-14)
        np.testing.assert_allclose(res.argmax, 0.0, atol=1e-14)

    @pytest.mark.parametrize("p,q", [(0.3, 0.5), (0.5, 0.1), (0.8, 0.95)])
    def test_bernoulli(self, p, q):
        want = q * math.log(q / p) + (1 - q) * math.log((1 - q) / (1 - p))
        assert rate_function(from_constant(p), [q]).value == pytest.approx(want, abs=1e-8)

    def test_legendre_round_trip(self):
        g0, pairs = _kernel6()
        rng = np.random.default_rng(5)
        for _ in range(10):
            vec = rng.normal(size=1 + len(pairs))
            vec *= rng.uniform(0, 2) / np.linalg.norm(vec)
            grad = limiting_logmgf(g0, TiltVector.from_vector(pairs, vec), pairs=pairs).gradient
            res = rate_function(g0, grad, pairs)
            assert np.linalg.norm(res.argmax - vec) < 1e-4

    def test_boundary(self):
        with pytest.raises(BoundaryMomentError):
            rate_function(from_constant(0.4), [1.2])

    def test_dimension(self):
        with pytest.raises(ValueError):
            rate_function(from_constant(0.4), [0.3, 0.1])


class TestTiltPath:
    def test_dc_direction(self):
        g0 = from_two_block(0.6, 0.3)
        rows = tilt_path_diagnostics(g0, TiltVector(1.0), [-1.0, 0.0, 1.0], 200, seeds=[0, 1])
        ed = [r.edge_density[0] for r in rows]
        assert ed[0] < ed[1] < ed[2]
        assert all(0 < v < 1 for v in ed)
        assert ed[1] == pytest.approx(0.45, abs=0.02)

    def test_csv(self):
        rows = tilt_path_diagnostics(from_constant(0.4), TiltVector(0.0, {(P1, P1): 0.3}), [0.0, 1.0], 64, seeds=[3])
        text = tilt_table_csv(rows)
        header = text.splitlines()[0]
        assert header.startswith(TILT_CSV_HEADER + ",energy_scale_0")
        assert len(text.splitlines()) == 3

    def test_same_seeds_reproducible(self):
        args = (from_constant(0.4), TiltVector(0.5), [0.0, 0.5], 80, [1, 2])
        assert tilt_table_csv(tilt_path_diagnostics(*args)) == tilt_table_csv(tilt_path_diagnostics(*args))
