"""Optimal transport, Lloyd quantization, clustering strategies, inflation."""

import numpy as np
import pytest

from mthdro.core import (ComponentStructure, DimensionMismatch,
                         DiscreteDistribution, MthSpec, Polyhedron,
                         ProductDiscreteDistribution, PwaFunction,
                         expand_product, L1, L2)
from mthdro.transport import (COMPONENT_WISE, DIRECT, MULTI_COMPONENT,
                              ClusteringReport, cluster_count_for_rate,
                              cluster_reference, inflate_budgets,
                              lloyd_quantize, wasserstein)
from mthdro.reformulate import worst_case_expectation_pwa


def dist(points, weights=None):
    return DiscreteDistribution(np.atleast_2d(points).reshape(
        len(points), -1), weights)


class TestWasserstein:
    def test_self_distance_zero(self, rng):
        P = dist(rng.normal(size=(5, 2)).tolist())
        d, plan = wasserstein(P, P, norm=L2, p=1)
        assert d == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(plan.plan, np.diag(P.weights))

    def test_two_diracs(self):
        P, Q = dist([[0.0, 0.0]]), dist([[3.0, 4.0]])
        d, _ = wasserstein(P, Q, norm=L2, p=1)
        assert d == pytest.approx(5.0)
        d2, _ = wasserstein(P, Q, norm=L2, p=2)
        assert d2 == pytest.approx(5.0)  # W2 of two Diracs is the distance

    def test_shifted_pairs(self):
        # uniform {0, 2} vs {1, 3}: monotone matching moves each atom by 1
        P, Q = dist([0.0, 2.0]), dist([1.0, 3.0])
        d, plan = wasserstein(P, Q, norm=L1, p=1)
        assert d == pytest.approx(1.0)
        assert plan.total_cost == pytest.approx(1.0)

    def test_metric_axioms(self, rng):
        for _ in range(10):
            P = dist(rng.normal(size=(4, 2)).tolist(),
                     rng.dirichlet(np.ones(4)))
            Q = dist(rng.normal(size=(3, 2)).tolist(),
                     rng.dirichlet(np.ones(3)))
            R = dist(rng.normal(size=(5, 2)).tolist(),
                     rng.dirichlet(np.ones(5)))
            for p in (1, 2):
                dpq, _ = wasserstein(P, Q, p=p)
                dqp, _ = wasserstein(Q, P, p=p)
                dqr, _ = wasserstein(Q, R, p=p)
                dpr, _ = wasserstein(P, R, p=p)
                assert dpq == pytest.approx(dqp, abs=1e-7)     # symmetry
                assert dpr <= dpq + dqr + 1e-7                 # triangle
                assert dpq >= 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            wasserstein(dist([[0.0]]), dist([[0.0, 1.0]]))


class TestLloyd:
    def test_k_equals_m_zero_cost(self, rng):
        pts = rng.normal(size=(6, 2))
        report = lloyd_quantize(pts, None, 6, seed=0)
        assert report.clustered.m <= 6
        assert report.plans[0].total_cost == pytest.approx(0.0, abs=1e-12)

    def test_k1_weighted_mean(self, rng):
        pts = rng.normal(size=(8, 2))
        w = rng.dirichlet(np.ones(8))
        report = lloyd_quantize(pts, w, 1, norm=L2, p=2, seed=0)
        assert np.allclose(report.clustered.atoms[0], w @ pts, atol=1e-12)
        spread = float(w @ ((pts - w @ pts) ** 2).sum(axis=1))
        assert report.plans[0].total_cost == pytest.approx(spread)

    def test_two_separated_groups(self):
        pts = np.array([[0.0], [0.1], [10.0], [10.1]])
        report = lloyd_quantize(pts, None, 2, norm=L2, p=2, seed=0)
        cents = np.sort(report.clustered.atoms.ravel())
        assert np.allclose(cents, [0.05, 10.05])
        # each of the 4 points (weight 1/4) sits 0.05 from its centroid
        assert report.plans[0].total_cost == pytest.approx(4 * 0.25 * 0.05 ** 2)

    def test_cost_history_nonincreasing(self, rng):
        for seed in range(5):
            pts = rng.normal(size=(30, 2))
            w = rng.dirichlet(np.ones(30))
            report = lloyd_quantize(pts, w, 5, seed=seed)
            hist = report.cost_history
            assert all(a >= b - 1e-12 for a, b in zip(hist, hist[1:]))

    def test_median_centroid_p1(self, rng):
        pts = rng.normal(size=(9, 1))
        report = lloyd_quantize(pts, None, 1, norm=L1, p=1, seed=0)
        assert report.clustered.atoms[0, 0] == pytest.approx(
            np.median(pts), abs=1e-12)

    def test_deterministic_given_seed(self, rng):
        pts = rng.normal(size=(20, 2))
        r1 = lloyd_quantize(pts, None, 4, seed=7)
        r2 = lloyd_quantize(pts, None, 4, seed=7)
        assert np.array_equal(r1.clustered.atoms, r2.clustered.atoms)
        assert np.array_equal(r1.clustered.weights, r2.clustered.weights)


class TestClusterReference:
    def make_product(self, rng, sizes=(4, 5)):
        return ProductDiscreteDistribution(
            [DiscreteDistribution(rng.normal(size=(s, 1))) for s in sizes])

    def test_componentwise_no_reduction(self, rng):
        prod = self.make_product(rng)
        st = ComponentStructure([1, 1], L1, p=1)
        report = cluster_reference(prod, st, COMPONENT_WISE, [4, 5], seed=0)
        assert np.allclose(report.inflation, 0.0, atol=1e-10)

    def test_componentwise_counts(self, rng):
        prod = self.make_product(rng, sizes=(20, 20))
        st = ComponentStructure([1, 1], L1, p=1)
        report = cluster_reference(prod, st, COMPONENT_WISE, [9, 8], seed=0)
        flat = expand_product(report.clustered)
        assert flat.m <= 72
        assert report.inflation.shape == (2,)
        assert np.all(report.inflation >= 0.0)

    def test_componentwise_exact_leq_lloyd(self, rng):
        # exact marginal W1 distance <= the Lloyd assignment cost
        prod = self.make_product(rng, sizes=(15, 15))
        st = ComponentStructure([1, 1], L1, p=1)
        report = cluster_reference(prod, st, COMPONENT_WISE, [4, 3], seed=1)
        for k, marg in enumerate(prod.marginals):
            lloyd = lloyd_quantize(
                marg.atoms, marg.weights, [4, 3][k], norm=L1, p=1,
                seed=1 + k)
            assert (report.inflation[k]
                    <= lloyd.plans[0].total_cost + 1e-9)

    def test_direct_2x2_brute_force(self, rng):
        prod = self.make_product(rng, sizes=(2, 2))
        st = ComponentStructure([1, 1], L1, p=1)
        report = cluster_reference(prod, st, DIRECT, 2, seed=3, exact=True)
        flat = expand_product(prod)
        # brute force: best 2-centroid assignment over all 2^4 splits
        best = np.inf
        for mask in range(1, 15):
            sel = np.array([(mask >> i) & 1 for i in range(4)], dtype=bool)
            cost = 0.0
            for part in (sel, ~sel):
                if not part.any():
                    cost = np.inf
                    break
                c = np.array([np.median(flat.atoms[part][:, j])
                              for j in range(2)])
                cost += float(flat.weights[part] @ np.abs(
                    flat.atoms[part] - c).sum(axis=1))
            best = min(best, cost)
        assert report.plans[0].total_cost >= best - 1e-9
        assert report.inflation.sum() <= report.plans[0].total_cost + 1e-9

    def test_multicomponent_groups(self, rng):
        prod = ProductDiscreteDistribution(
            [DiscreteDistribution(rng.normal(size=(3, 1))) for _ in range(3)])
        st = ComponentStructure([1, 1, 1], L1, p=1)
        report = cluster_reference(prod, st, MULTI_COMPONENT, [4, 2],
                                   seed=0, groups=[(0, 1), (2,)])
        assert report.strategy == MULTI_COMPONENT
        assert report.inflation.shape == (3,)
        assert len(report.clustered.marginals) == 2
        with pytest.raises(ValueError):
            cluster_reference(prod, st, MULTI_COMPONENT, [4, 2],
                              groups=[(0, 2), (1,)])

    def test_containment_surrogate(self, rng):
        # DRO value over the inflated clustered set dominates the original
        prod = self.make_product(rng, sizes=(6, 6))
        st = ComponentStructure([1, 1], L1, p=1)
        report = cluster_reference(prod, st, COMPONENT_WISE, [3, 3], seed=2)
        eps = np.array([0.15, 0.2])
        support = Polyhedron.box([-6.0, -6.0], [6.0, 6.0])
        original = MthSpec(expand_product(prod), eps, st)
        inflated = MthSpec(expand_product(report.clustered),
                           inflate_budgets(eps, report), st)
        for _ in range(5):
            h = PwaFunction(rng.uniform(-1.0, 1.0, (3, 2)),
                            rng.uniform(-1.0, 1.0, 3))
            v_orig, _ = worst_case_expectation_pwa(original, h, support)
            v_infl, _ = worst_case_expectation_pwa(inflated, h, support)
            assert v_infl >= v_orig - 1e-7


class TestBudgetHelpers:
    def test_inflate_budgets(self):
        report = ClusteringReport(None, [], [0.05, 0.0], DIRECT, None)
        out = inflate_budgets([0.1, 0.2], report)
        assert np.allclose(out, [0.15, 0.2])
        assert np.allclose(inflate_budgets([0.1], [0.0]), [0.1])
        with pytest.raises(DimensionMismatch):
            inflate_budgets([0.1, 0.2], [0.1])

    def test_cluster_count_for_rate(self):
        assert cluster_count_for_rate(10, 1.0) == 10
        assert cluster_count_for_rate(10, 2.0) == 100
        q = np.log(72.0) / np.log(20.0)
        assert cluster_count_for_rate(20, q) == 72
        assert cluster_count_for_rate(10, 5.0, cap=1000) == 1000
        with pytest.raises(ValueError):
            cluster_count_for_rate(1, 2.0)
