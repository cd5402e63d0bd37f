"""Brute-force verification oracles.

`primal_grid_value` solves the worst-case expectation in its primal form: an
LP over couplings between the reference atoms and a finite grid inside the
support.  It lower-bounds every dual reformulation value (weak duality) and
converges to it as the grid refines.  `empirical_cvar` evaluates the
discrete CVaR by sorting.  Both are kept independent of the builder/solver
stack (direct scipy calls) so they can certify it.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .core import CapExceeded, InfeasibleGrid, MthdroError, norm_value

GRID_VARIABLE_CAP = 10**6


class GridSpec:
    """Finite discretization of a box, clipped to the support polyhedron."""

    def __init__(self, axes):
        cleaned = []
        for lo, hi, count in axes:
            lo, hi, count = float(lo), float(hi), int(count)
            if count < 2:
                raise ValueError("each axis needs at least 2 points")
            if not lo < hi:
                raise ValueError("axis bounds must satisfy lo < hi")
            cleaned.append((lo, hi, count))
        if not cleaned:
            raise ValueError("at least one axis required")
        self.axes = cleaned

    @property
    def dim(self):
        return len(self.axes)

    def points(self, support=None):
        """All grid points, dropping those outside the support polyhedron."""
        grids = [np.linspace(lo, hi, count) for lo, hi, count in self.axes]
        mesh = np.meshgrid(*grids, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        if support is not None and support.rows > 0:
            pts = pts[support.contains(pts)]
        if pts.shape[0] == 0:
            raise InfeasibleGrid("no grid point lies inside the support")
        return pts


def primal_grid_value(mth, h, grid, support=None, cap=GRID_VARIABLE_CAP):
    """Worst-case expectation by LP over couplings onto the grid.

    Variables pi_{l,g} >= 0 with sum_g pi_{l,g} = theta_l and per-component
    cost constraints sum pi * ||pr_k(xi_l - g)||^p <= eps_k^p; maximize
    sum pi_{l,g} h(g).  Returns a lower bound on the true supremum.
    """
    ref = mth.reference_discrete()
    pts = grid.points(support)
    M, G = ref.m, pts.shape[0]
    if M * G > cap:
        raise CapExceeded(f"{M * G} coupling variables exceed the cap {cap}")
    st = mth.structure
    hvals = np.asarray(h(pts), dtype=float).ravel()
    c = -np.tile(hvals, M)  # maximize => minimize the negation

    rows = []
    for l in range(M):
        row = sp.coo_matrix(
            (np.ones(G), (np.zeros(G, dtype=int), l * G + np.arange(G))),
            shape=(1, M * G))
        rows.append(row)
    A_eq = sp.vstack(rows).tocsr()
    b_eq = ref.weights

    budget = mth.transformed_budgets()
    cost_rows = []
    for k in range(st.n):
        costs = np.empty(M * G)
        for l in range(M):
            diff = pts[:, st.slice_of(k)] - ref.atoms[l, st.slice_of(k)]
            costs[l * G:(l + 1) * G] = norm_value(diff, st.norms[k]) ** st.p
        cost_rows.append(sp.csr_matrix(costs[None, :]))
    A_ub = sp.vstack(cost_rows).tocsr()

    res = linprog(c, A_ub=A_ub, b_ub=budget, A_eq=A_eq, b_eq=b_eq,
                  bounds=(0, None), method="highs")
    if res.status != 0:
        raise MthdroError(f"grid coupling LP failed: {res.message}")
    return -float(res.fun)


def primal_grid_probability(mth, indicator, grid, support=None,
                            cap=GRID_VARIABLE_CAP):
    """Worst-case probability of a set given as a boolean point predicate."""
    def h(points):
        return np.asarray(indicator(points), dtype=float)
    return primal_grid_value(mth, h, grid, support=support, cap=cap)


def empirical_cvar(samples, alpha, weights=None):
    """Discrete CVaR at level 1 - alpha: mean of the worst alpha probability mass.

    Equals inf_tau { E[(samples + tau)_+] / alpha - tau }; the fractional
    atom at the (1 - alpha)-quantile contributes proportionally.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise ValueError("samples must be nonempty")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if weights is None:
        weights = np.full(samples.size, 1.0 / samples.size)
    weights = np.asarray(weights, dtype=float).ravel()
    order = np.argsort(samples)[::-1]  # worst (largest) first
    vals = samples[order]
    w = weights[order]
    remaining = alpha
    acc = 0.0
    for v, wi in zip(vals, w):
        take = min(wi, remaining)
        acc += take * v
        remaining -= take
        if remaining <= 1e-15:
            break
    return acc / alpha
