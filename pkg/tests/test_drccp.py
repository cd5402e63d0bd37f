"""Chance-constrained programs: CVaR blocks vs. independent oracles."""

import numpy as np
import pytest

from mthdro.core import (ComponentStructure, DiscreteDistribution, InfeasibleX,
                         MthSpec, NormMismatch, Polyhedron, PwaFunction,
                         UnboundedSupport, L1, L2, LINF)
from mthdro.drccp import (BilinearPwaConstraint, DrccpProblem, build_drccp,
                          solve_drccp, worst_case_cvar)
from mthdro.reformulate import worst_case_expectation_pwa
from mthdro.oracle import empirical_cvar
from oracles import saa_cvar_lp


def line_mth(atoms, eps, weights=None, norm=L1):
    ref = DiscreteDistribution(np.atleast_2d(atoms).reshape(-1, 1), weights)
    return MthSpec(ref, [eps], ComponentStructure([1], norm))


def scalar_problem(alpha=0.2, support=None):
    """min x s.t. CVaR(xi - x) <= 0, x >= 0 on a 1-D support."""
    con = BilinearPwaConstraint(alpha, A=[np.zeros((1, 1))], c=[[-1.0]],
                                e=[0.0], u=[[1.0]])
    support = support or Polyhedron.box([-5.0], [5.0])
    return DrccpProblem(g=[1.0], X=None, constraints=[con], support=support,
                        x_lb=[0.0])


def cvar_grid_oracle(mth, con, x, support, lo=-3.0, hi=3.0, step=1e-3):
    """min over a tau-grid of E*[(f(x, xi) + tau)_+]/alpha - tau.

    E* is the worst-case expectation of the hinge, computed through the
    independent PWA-max route (pieces {f_j + tau, 0}).  The objective is
    convex in tau, so a coarse pass followed by a fine pass at `step`
    around the coarse argmin is equivalent to the full fine grid.
    """
    x = np.asarray(x, dtype=float).ravel()

    def value_at(tau):
        A = np.vstack([(con.A[j].T @ x + con.u[j])[None, :]
                       for j in range(con.m)] + [np.zeros((1, con.d))])
        b = np.concatenate([[con.c[j] @ x + con.e[j] + tau
                             for j in range(con.m)], [0.0]])
        value, _ = worst_case_expectation_pwa(mth, PwaFunction(A, b), support)
        return value / con.alpha - tau

    coarse_step = 0.05
    coarse = np.arange(lo, hi + coarse_step, coarse_step)
    coarse_vals = [value_at(t) for t in coarse]
    center = coarse[int(np.argmin(coarse_vals))]
    fine = np.arange(center - coarse_step, center + coarse_step + step, step)
    return min(value_at(t) for t in fine)


class TestWorstCaseCvar:
    def test_constant_constraint(self):
        # f(x, xi) = c - x: CVaR of a constant is the constant
        con = BilinearPwaConstraint(0.3, A=[np.zeros((1, 1))], c=[[-1.0]],
                                    e=[2.0])
        problem = DrccpProblem([1.0], None, [con], Polyhedron.box([-1.0], [1.0]))
        mth = line_mth([0.0], 0.4)
        value = worst_case_cvar(mth, [0.5], problem)
        assert value == pytest.approx(1.5, abs=1e-7)

    def test_zero_budget_equals_empirical_cvar(self, rng):
        for alpha in (0.1, 0.25, 0.5):
            atoms = rng.uniform(-2.0, 2.0, 7)
            weights = rng.dirichlet(np.ones(7))
            mth = line_mth(atoms, 0.0, weights)
            problem = scalar_problem(alpha)
            x = [0.7]
            value = worst_case_cvar(mth, x, problem)
            samples = problem.constraints[0].evaluate(x, atoms[:, None])
            assert value == pytest.approx(
                empirical_cvar(samples, alpha, weights), abs=1e-7)

    @pytest.mark.parametrize("norm", [L1, L2, LINF])
    def test_tau_grid_consistency(self, norm, rng):
        # min-max check: CVaR epigraph value vs explicit tau-grid of
        # worst-case hinge expectations
        atoms = np.round(rng.uniform(-1.0, 1.0, 4), 3)
        mth = line_mth(atoms, 0.3, norm=norm)
        problem = scalar_problem(0.25)
        con = problem.constraints[0]
        x = [0.4]
        value = worst_case_cvar(mth, x, problem)
        oracle = cvar_grid_oracle(mth, con, x, problem.support)
        assert value == pytest.approx(oracle, abs=1e-3)

    def test_monotone_in_budget(self, rng):
        atoms = rng.uniform(-1.0, 1.0, 5)
        problem = scalar_problem(0.2)
        x = [0.3]
        values = [worst_case_cvar(line_mth(atoms, eps), x, problem)
                  for eps in (0.0, 0.2, 0.5, 1.0)]
        assert all(a <= b + 1e-8 for a, b in zip(values, values[1:]))

    def test_rectangle_below_enclosing_ball(self, rng):
        # 2-component MTH worst-case CVaR <= single-ball CVaR at radius sum(eps)
        s1 = rng.uniform(-1.0, 1.0, 4)
        s2 = rng.uniform(-1.0, 1.0, 4)
        atoms = np.column_stack([s1, s2])
        ref = DiscreteDistribution(atoms)
        eps = np.array([0.2, 0.3])
        rect = MthSpec(ref, eps, ComponentStructure([1, 1], L1))
        ball = MthSpec(ref, [eps.sum()], ComponentStructure([2], L1))
        con = BilinearPwaConstraint(0.2, A=[np.zeros((1, 2))], c=[[-1.0]],
                                    e=[0.0], u=[[1.0, -0.5]])
        problem = DrccpProblem([1.0], None, [con],
                               Polyhedron.box([-3.0, -3.0], [3.0, 3.0]))
        x = [0.1]
        assert (worst_case_cvar(rect, x, problem)
                <= worst_case_cvar(ball, x, problem) + 1e-7)


class TestSolveDrccp:
    def test_zero_budget_matches_saa_lp(self, rng):
        for _ in range(5):
            atoms = rng.uniform(-2.0, 2.0, (6, 1))
            weights = rng.dirichlet(np.ones(6))
            alpha = float(rng.uniform(0.1, 0.5))
            mth = MthSpec(DiscreteDistribution(atoms, weights), [0.0],
                          ComponentStructure([1], L1))
            problem = scalar_problem(alpha)
            sol = solve_drccp(mth, problem)
            assert sol.optimal
            con = problem.constraints[0]

            def vals(x):
                return [[con.A[j].T[0] @ x * 0 + atoms[l, 0] * con.u[j][0]
                         + con.c[j] @ x + con.e[j] for j in range(con.m)]
                        for l in range(atoms.shape[0])]
            oracle, _ = saa_cvar_lp([1.0], atoms, weights, vals, alpha, 1,
                                    x_lb=[0.0])
            assert sol.value == pytest.approx(oracle, abs=1e-6)

    def test_feasible_set_shrinks_with_budget(self, rng):
        # optimal cost of a minimization is nondecreasing in eps
        for _ in range(5):
            atoms = rng.uniform(-1.0, 1.0, 5)
            alpha = float(rng.uniform(0.1, 0.4))
            problem = scalar_problem(alpha)
            values = []
            for eps in (0.0, 0.1, 0.4, 0.8):
                sol = solve_drccp(line_mth(atoms, eps), problem)
                assert sol.optimal
                values.append(sol.value)
            assert all(a <= b + 1e-8 for a, b in zip(values, values[1:]))

    def test_decision_margin_matches_cvar(self, rng):
        # at the optimum the worst-case CVaR of the active constraint is ~0
        atoms = rng.uniform(0.0, 2.0, 5)
        mth = line_mth(atoms, 0.3)
        problem = scalar_problem(0.2)
        sol = solve_drccp(mth, problem)
        x_hat = sol.groups["x"]
        assert worst_case_cvar(mth, x_hat, problem) == pytest.approx(0.0,
                                                                     abs=1e-6)

    def test_chance_constraint_validity(self, rng):
        # budgets containing the true distribution certify the true chance
        # constraint: reference = true discrete P, eps > 0 keeps P inside
        atoms = rng.uniform(-1.0, 1.0, 12)
        weights = rng.dirichlet(np.ones(12))
        alpha = 0.25
        mth = line_mth(atoms, 0.2, weights)
        problem = scalar_problem(alpha)
        sol = solve_drccp(mth, problem)
        vals = problem.constraints[0].evaluate(sol.groups["x"], atoms[:, None])
        assert weights[vals <= 1e-9].sum() >= 1.0 - alpha - 1e-9

    def test_multiple_constraints(self, rng):
        atoms = rng.uniform(-1.0, 1.0, (4, 1))
        mth = MthSpec(DiscreteDistribution(atoms), [0.2],
                      ComponentStructure([1], L1))
        con1 = BilinearPwaConstraint(0.2, A=[np.zeros((1, 1))], c=[[-1.0]],
                                     e=[0.0], u=[[1.0]])
        con2 = BilinearPwaConstraint(0.3, A=[np.zeros((1, 1))], c=[[-0.5]],
                                     e=[-0.1], u=[[0.8]])
        problem = DrccpProblem([1.0], None, [con1, con2],
                               Polyhedron.box([-5.0], [5.0]), x_lb=[0.0])
        sol = solve_drccp(mth, problem)
        assert sol.optimal
        for i in range(2):
            assert worst_case_cvar(mth, sol.groups["x"], problem, i) <= 1e-6

    def test_bilinear_term(self, rng):
        # genuine x-dependent uncertainty coupling <x, A xi>
        atoms = np.array([[0.5], [-0.5], [1.0]])
        mth = MthSpec(DiscreteDistribution(atoms), [0.1],
                      ComponentStructure([1], L1))
        con = BilinearPwaConstraint(0.3, A=[np.array([[1.0]])], c=[[0.0]],
                                    e=[-0.4])
        problem = DrccpProblem([-1.0], None, [con],
                               Polyhedron.box([-2.0], [2.0]),
                               x_lb=[0.0], x_ub=[10.0])
        sol = solve_drccp(mth, problem)
        assert sol.optimal
        # maximizing x: the constraint CVaR(x * xi - 0.4) <= 0 binds
        assert worst_case_cvar(mth, sol.groups["x"], problem) <= 1e-6


class TestValidation:
    def test_requires_p1(self):
        ref = DiscreteDistribution([[0.0]])
        mth = MthSpec(ref, [1.0], ComponentStructure([1], L2, p=2))
        with pytest.raises(NormMismatch):
            build_drccp(mth, scalar_problem())

    def test_requires_compact_support(self):
        mth = line_mth([0.0], 0.5)
        problem = scalar_problem(support=Polyhedron.whole_space(1))
        with pytest.raises(UnboundedSupport):
            build_drccp(mth, problem)

    def test_empty_decision_set(self):
        mth = line_mth([0.0], 0.5)
        con = BilinearPwaConstraint(0.2, A=[np.zeros((1, 1))], c=[[-1.0]],
                                    e=[0.0])
        X = Polyhedron([[1.0], [-1.0]], [0.0, -1.0])  # empty
        problem = DrccpProblem([1.0], X, [con], Polyhedron.box([-1.0], [1.0]))
        with pytest.raises(InfeasibleX):
            build_drccp(mth, problem)

    def test_piece_shape_validation(self):
        with pytest.raises(ValueError):
            BilinearPwaConstraint(0.2, A=[np.zeros((1, 2))], c=[[1.0, 2.0]],
                                  e=[0.0, 1.0])
        with pytest.raises(ValueError):
            BilinearPwaConstraint(1.5, A=[np.zeros((1, 1))], c=[[1.0]],
                                  e=[0.0])
