"""Discrete optimal transport and clustering of empirical distributions.

Provides exact p-Wasserstein distances between discrete measures (via the
transportation LP), seeded Lloyd quantization, three clustering strategies
for product empirical measures (direct, component-wise, multi-component
blocks), and the budget-inflation rule that keeps the enlarged ambiguity set
a superset of the original one.
"""

from __future__ import annotations

import numpy as np

from .core import (DEFAULT_EXPANSION_CAP, ComponentStructure, DimensionMismatch,
                   DiscreteDistribution, ProductDiscreteDistribution,
                   expand_product, norm_value, L1, L2, LINF)
from .solver import solve_lp_transportation

DIRECT = "Direct"
COMPONENT_WISE = "ComponentWise"
MULTI_COMPONENT = "MultiComponent"

LLOYD_MAX_ITERATIONS = 500


class TransportPlan:
    """A coupling between two discrete distributions plus its component costs.

    per_component_costs[k] = sum_ab plan_ab * ||pr_k(src_a) - pr_k(tgt_b)||^p,
    i.e. the k-th transport cost (epsilon_k^p) incurred by this plan.
    """

    def __init__(self, source, target, plan, structure, tol=1e-10):
        plan = np.asarray(plan, dtype=float)
        if plan.shape != (source.m, target.m):
            raise DimensionMismatch("plan shape must be (source.m, target.m)")
        if np.max(np.abs(plan.sum(axis=1) - source.weights)) > tol:
            raise ValueError("plan row sums must match source weights")
        if np.max(np.abs(plan.sum(axis=0) - target.weights)) > tol:
            raise ValueError("plan column sums must match target weights")
        self.source = source
        self.target = target
        self.plan = plan
        self.structure = structure
        costs = np.zeros(structure.n)
        for k in range(structure.n):
            diff = (structure.project(source.atoms, k)[:, None, :]
                    - structure.project(target.atoms, k)[None, :, :])
            costs[k] = float(np.sum(plan * norm_value(diff, structure.norms[k])
                                    ** structure.p))
        self.per_component_costs = costs

    @property
    def total_cost(self):
        return float(self.per_component_costs.sum())


class ClusteringReport:
    """Outcome of a clustering run: the reduced distribution and its cost.

    `inflation` is the vector of per-component distances epsilon_k =
    (transport cost_k)^(1/p); adding it to the budgets keeps the ambiguity
    set around the clustered reference a superset of the original one.
    """

    def __init__(self, clustered, plans, inflation, strategy, structure,
                 cost_history=None):
        self.clustered = clustered
        self.plans = list(plans)
        self.inflation = np.asarray(inflation, dtype=float).ravel()
        self.strategy = strategy
        self.structure = structure
        self.cost_history = list(cost_history or [])

    @property
    def plan(self):
        return self.plans[0] if len(self.plans) == 1 else None


def _cost_matrix(a, b, norm, p):
    diff = a[:, None, :] - b[None, :, :]
    return norm_value(diff, norm) ** p


def wasserstein(P, Q, norm=L2, p=1):
    """Exact p-Wasserstein distance between two discrete distributions.

    Returns (distance, TransportPlan); distance = (LP optimum)^(1/p).
    """
    if P.dim != Q.dim:
        raise DimensionMismatch(f"dimensions {P.dim} and {Q.dim} differ")
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    costs = _cost_matrix(P.atoms, Q.atoms, norm, p)
    value, plan = solve_lp_transportation(costs, P.weights, Q.weights)
    value = max(value, 0.0)
    structure = ComponentStructure([P.dim], [norm], p=p)
    tplan = TransportPlan(P, Q, plan, structure)
    return value ** (1.0 / p), tplan


def _weighted_median(values, weights):
    order = np.argsort(values)
    cum = np.cumsum(weights[order])
    idx = int(np.searchsorted(cum, 0.5 * cum[-1]))
    return values[order[min(idx, values.size - 1)]]


def _update_centroid(points, weights, norm, p):
    if p == 1:
        return np.array([_weighted_median(points[:, i], weights)
                         for i in range(points.shape[1])])
    return weights @ points / weights.sum()


def _assignment_costs(points, centroids, structure):
    """Product-metric cost sum_k ||pr_k(point - centroid)||^p, shape (M, K)."""
    return _structure_cost(points, centroids, structure).sum(axis=-1)


def _structure_cost(a, b, structure):
    diff = a[:, None, :] - b[None, :, :]
    cols = [norm_value(diff[..., structure.slice_of(k)], structure.norms[k])
            ** structure.p for k in range(structure.n)]
    return np.stack(cols, axis=-1)


def _kmeanspp_seed(points, weights, K, structure, rng):
    m = points.shape[0]
    centroids = np.empty((K, points.shape[1]))
    first = rng.choice(m, p=weights / weights.sum())
    centroids[0] = points[first]
    for k in range(1, K):
        d = _assignment_costs(points, centroids[:k], structure).min(axis=1)
        probs = weights * d
        total = probs.sum()
        if total <= 0:
            # all mass already on chosen centroids; pick any remaining point
            probs = np.ones(m) / m
        else:
            probs = probs / total
        centroids[k] = points[rng.choice(m, p=probs)]
    return centroids


def _lloyd(points, weights, K, structure, seed):
    """Seeded Lloyd iteration; returns (centroids, assignment, cost_history)."""
    rng = np.random.default_rng(seed)
    m = points.shape[0]
    centroids = _kmeanspp_seed(points, weights, K, structure, rng)
    assign = _assignment_costs(points, centroids, structure).argmin(axis=1)
    cost_history = []

    def total_cost(cent, asg):
        d = _assignment_costs(points, cent, structure)
        return float(weights @ d[np.arange(m), asg])

    current = total_cost(centroids, assign)
    cost_history.append(current)
    for _ in range(LLOYD_MAX_ITERATIONS):
        new_centroids = centroids.copy()
        for k in range(K):
            mask = assign == k
            if not mask.any():
                # deterministic repair: move to the point farthest from its centroid
                d = _assignment_costs(points, new_centroids, structure)
                far = int(np.argmax(d[np.arange(m), assign]))
                new_centroids[k] = points[far]
                continue
            for k2 in range(structure.n):
                slc = structure.slice_of(k2)
                new_centroids[k, slc] = _update_centroid(
                    points[mask][:, slc], weights[mask],
                    structure.norms[k2], structure.p)
        new_assign = _assignment_costs(points, new_centroids,
                                       structure).argmin(axis=1)
        new_cost = total_cost(new_centroids, new_assign)
        if new_cost > current + 1e-12:
            # centroid rule is not the exact minimizer for this (norm, p)
            # pairing; stop rather than let the cost climb
            break
        centroids, assign = new_centroids, new_assign
        cost_history.append(new_cost)
        if new_cost >= current - 1e-15:
            current = new_cost
            break
        current = new_cost
    return centroids, assign, cost_history


def _assignment_to_report(points, weights, centroids, assign, structure,
                          strategy, cost_history):
    K = centroids.shape[0]
    used = np.unique(assign)
    centroids = centroids[used]
    remap = {int(k): i for i, k in enumerate(used)}
    cweights = np.zeros(used.size)
    plan = np.zeros((points.shape[0], used.size))
    for a, k in enumerate(assign):
        plan[a, remap[int(k)]] = weights[a]
        cweights[remap[int(k)]] += weights[a]
    source = DiscreteDistribution(points, weights)
    clustered = DiscreteDistribution(centroids, cweights)
    tplan = TransportPlan(source, clustered, plan, structure)
    inflation = tplan.per_component_costs ** (1.0 / structure.p)
    return ClusteringReport(clustered, [tplan], inflation, strategy,
                            structure, cost_history)


def lloyd_quantize(points, weights, K, norm=L2, p=2, seed=0, structure=None):
    """Quantize a weighted point cloud to at most K atoms.

    Centroid rule: weighted mean for p = 2, coordinate-wise weighted median
    for p = 1; k-means++-style seeding driven by `seed`.  The total transport
    cost of the assignment is non-increasing across iterations.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    m, d = points.shape
    if weights is None:
        weights = np.full(m, 1.0 / m)
    weights = np.asarray(weights, dtype=float).ravel()
    if weights.shape != (m,):
        raise DimensionMismatch("weights length must match point count")
    if not 1 <= K <= m:
        raise ValueError("K must satisfy 1 <= K <= number of points")
    if structure is None:
        structure = ComponentStructure([d], [norm], p=p)
    if structure.d != d:
        raise DimensionMismatch("structure dimension mismatch")
    centroids, assign, cost_history = _lloyd(points, weights, K, structure, seed)
    return _assignment_to_report(points, weights, centroids, assign,
                                 structure, DIRECT, cost_history)


def _exact_component_costs(source, clustered, structure):
    """Optimal-coupling per-component costs between two flat distributions."""
    total = _structure_cost(source.atoms, clustered.atoms, structure).sum(axis=-1)
    _, plan = solve_lp_transportation(total, source.weights, clustered.weights)
    tplan = TransportPlan(source, clustered, plan, structure)
    return tplan


def cluster_reference(prod, structure, strategy, K, seed=0, groups=None,
                      exact=False, cap=DEFAULT_EXPANSION_CAP):
    """Cluster a product empirical distribution by one of three strategies.

    Direct: expand the product and run Lloyd on the flat atoms; inflation
    comes from the assignment plan's per-component costs (optionally
    tightened by an exact optimal-transport LP when `exact`).
    ComponentWise: Lloyd per marginal with K[k] centroids; inflation_k is the
    exact W_p distance between marginal and clustered marginal.
    MultiComponent: `groups` lists blocks of consecutive component indices;
    each block is clustered directly with K[g] centroids and its inflation
    components are read off the block plan exactly.
    """
    if not isinstance(prod, ProductDiscreteDistribution):
        raise TypeError("cluster_reference expects a product distribution")
    if prod.dims != structure.dims:
        raise DimensionMismatch("product marginals must match component dims")
    if strategy == DIRECT:
        flat = expand_product(prod, cap=cap)
        report = lloyd_quantize(flat.atoms, flat.weights, int(K),
                                seed=seed, structure=structure)
        if exact:
            tplan = _exact_component_costs(flat, report.clustered, structure)
            report = ClusteringReport(
                report.clustered, [tplan],
                tplan.per_component_costs ** (1.0 / structure.p),
                DIRECT, structure, report.cost_history)
        return report
    if strategy == COMPONENT_WISE:
        K = [int(k) for k in K]
        if len(K) != prod.n:
            raise DimensionMismatch("one cluster count per marginal required")
        clustered_marginals = []
        plans = []
        inflation = np.zeros(structure.n)
        for k, marg in enumerate(prod.marginals):
            sub = ComponentStructure([marg.dim], [structure.norms[k]],
                                     p=structure.p)
            rep = lloyd_quantize(marg.atoms, marg.weights, K[k],
                                 seed=seed + k, structure=sub)
            dist, tplan = wasserstein(marg, rep.clustered,
                                      norm=structure.norms[k], p=structure.p)
            clustered_marginals.append(rep.clustered)
            plans.append(tplan)
            inflation[k] = dist
        clustered = ProductDiscreteDistribution(clustered_marginals)
        return ClusteringReport(clustered, plans, inflation,
                                COMPONENT_WISE, structure)
    if strategy == MULTI_COMPONENT:
        if groups is None:
            raise ValueError("MultiComponent clustering needs component groups")
        groups = [tuple(int(i) for i in g) for g in groups]
        flat_order = [i for g in groups for i in g]
        if flat_order != list(range(structure.n)):
            raise ValueError("groups must partition components in order")
        K = [int(k) for k in K]
        if len(K) != len(groups):
            raise DimensionMismatch("one cluster count per group required")
        blocks = []
        plans = []
        inflation = np.zeros(structure.n)
        for g, group in enumerate(groups):
            sub_prod = ProductDiscreteDistribution(
                [prod.marginals[i] for i in group])
            sub_structure = ComponentStructure(
                [structure.dims[i] for i in group],
                [structure.norms[i] for i in group], p=structure.p)
            flat = expand_product(sub_prod, cap=cap)
            rep = lloyd_quantize(flat.atoms, flat.weights, K[g],
                                 seed=seed + g, structure=sub_structure)
            if exact:
                tplan = _exact_component_costs(flat, rep.clustered,
                                               sub_structure)
            else:
                tplan = rep.plans[0]
            blocks.append(rep.clustered)
            plans.append(tplan)
            for pos, i in enumerate(group):
                inflation[i] = tplan.per_component_costs[pos] ** (
                    1.0 / structure.p)
        clustered = ProductDiscreteDistribution(blocks)
        return ClusteringReport(clustered, plans, inflation,
                                MULTI_COMPONENT, structure)
    raise ValueError(f"unknown clustering strategy {strategy!r}")


def inflate_budgets(base, report):
    """Componentwise budget enlargement eps + epsilon(clustering)."""
    base = np.asarray(base, dtype=float).ravel()
    inflation = report.inflation if isinstance(report, ClusteringReport) \
        else np.asarray(report, dtype=float).ravel()
    if base.shape != inflation.shape:
        raise DimensionMismatch("budget and inflation lengths differ")
    return base + inflation


def cluster_count_for_rate(N, q, cap=DEFAULT_EXPANSION_CAP):
    """Cluster count K with log_N K = q, rounded and capped."""
    if N < 2:
        raise ValueError("N must be at least 2")
    return int(min(round(float(N) ** float(q)), cap))
