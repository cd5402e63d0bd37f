"""Conic program solving.

`solve` is the backend contract: ConicProgram -> Solution.  Pure LPs go to
HiGHS (scipy.optimize.linprog); programs with second-order or PSD cones go
to cvxopt's cone LP solver.  `solve_lp_transportation` is a self-contained
transportation simplex used as the fast path for optimal-transport LPs, so
it stays independent of the generic route.
"""

from __future__ import annotations

from collections import deque

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .core import BalanceViolation, MthdroError
from .conic import (ConicProgram, Solution, OPTIMAL, INFEASIBLE, UNBOUNDED,
                    NUMERICAL_FAILURE)


class SolverConfig:
    """Tolerances and iteration limits for the built-in backends."""

    def __init__(self, max_iterations=200, gap_tolerance=1e-8,
                 feasibility_tolerance=1e-8, regularization=1e-9):
        if min(gap_tolerance, feasibility_tolerance, regularization) <= 0:
            raise ValueError("tolerances must be positive")
        self.max_iterations = int(max_iterations)
        self.gap_tolerance = float(gap_tolerance)
        self.feasibility_tolerance = float(feasibility_tolerance)
        self.regularization = float(regularization)


DEFAULT_CONFIG = SolverConfig()


def solve(program: ConicProgram, config: SolverConfig = None) -> Solution:
    """Solve a ConicProgram; reentrant and safe to call from many workers."""
    config = config or DEFAULT_CONFIG
    if program.num_vars == 0:
        return Solution(OPTIMAL, value=program.obj_offset, x=np.zeros(0), groups={})
    if program.is_linear:
        return _solve_lp(program, config)
    return _solve_cone(program, config)


def _finish(program, status, x, value, dual_objective=None, info=None):
    sol = Solution(status, value=value, x=x,
                   groups=program.split_groups(x) if x is not None else {},
                   dual_objective=dual_objective, info=info)
    return sol


def _solve_lp(program, config):
    c = program.objective_vector()
    sign = 1.0
    if program.sense == "max":
        c = -c
        sign = -1.0
    A_ub, b_ub = program.ineq_system()
    A_eq, b_eq = program.eq_system()
    lb, ub = program.bounds()
    bounds = [(None if not np.isfinite(l) else l, None if not np.isfinite(u) else u)
              for l, u in zip(lb, ub)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if res.status == 2:
        return _finish(program, INFEASIBLE, None, np.nan)
    if res.status == 3:
        return _finish(program, UNBOUNDED, None,
                       np.inf if program.sense == "max" else -np.inf)
    if res.status != 0 or res.x is None:
        return _finish(program, NUMERICAL_FAILURE, None, np.nan,
                       info={"message": res.message})
    x = np.asarray(res.x, dtype=float)
    value = sign * float(res.fun) + program.obj_offset

    dual = 0.0
    if b_ub.size:
        dual += float(b_ub @ res.ineqlin.marginals)
    if b_eq.size:
        dual += float(b_eq @ res.eqlin.marginals)
    finite_l = np.isfinite(lb)
    finite_u = np.isfinite(ub)
    dual += float(lb[finite_l] @ res.lower.marginals[finite_l])
    dual += float(ub[finite_u] @ res.upper.marginals[finite_u])
    dual = sign * dual + program.obj_offset
    return _finish(program, OPTIMAL, x, value, dual_objective=dual)


def _solve_cone(program, config):
    from cvxopt import matrix, spmatrix, solvers

    n = program.num_vars
    c = program.objective_vector()
    sign = 1.0
    if program.sense == "max":
        c = -c
        sign = -1.0

    gl_rows, gl_cols, gl_vals, hl = [], [], [], []
    nrow = 0

    def add_row(cols, coeffs, rhs):
        nonlocal nrow
        for col, val in zip(cols, coeffs):
            if val != 0.0:
                gl_rows.append(nrow)
                gl_cols.append(int(col))
                gl_vals.append(float(val))
        hl.append(float(rhs))
        nrow += 1

    lb, ub = program.bounds()
    for i in range(n):
        if np.isfinite(lb[i]):
            add_row([i], [-1.0], -lb[i])
        if np.isfinite(ub[i]):
            add_row([i], [1.0], ub[i])
    A_ub, b_ub = program.ineq_system()
    if A_ub is not None:
        coo = A_ub.tocoo()
        gl_rows.extend((coo.row + nrow).tolist())
        gl_cols.extend(coo.col.tolist())
        gl_vals.extend(coo.data.tolist())
        hl.extend(b_ub.tolist())
        nrow += A_ub.shape[0]

    dims = {"l": nrow, "q": [], "s": []}
    G_rows, G_cols, G_vals = list(gl_rows), list(gl_cols), list(gl_vals)
    h = list(hl)

    # SOC blocks: s = h - Gx with s = (t, u) in the Lorentz cone
    for u, t in program.socs:
        base = len(h)
        for col, val in zip(t.cols, t.coeffs):
            G_rows.append(base)
            G_cols.append(int(col))
            G_vals.append(-float(val))
        h.append(float(t.const))
        for i in range(u.size):
            for j, col in enumerate(u.cols):
                val = u.matrix[i, j]
                if val != 0.0:
                    G_rows.append(base + 1 + i)
                    G_cols.append(int(col))
                    G_vals.append(-float(val))
            h.append(float(u.const[i]))
        dims["q"].append(u.size + 1)

    # PSD blocks: s = vec(F0 + sum x_j Fj)
    for F0, terms in program.psds:
        k = F0.shape[0]
        base = len(h)
        h.extend(np.asarray(F0, dtype=float).ravel(order="F").tolist())
        for col, Fi in terms:
            flat = np.asarray(Fi, dtype=float).ravel(order="F")
            for i, val in enumerate(flat):
                if val != 0.0:
                    G_rows.append(base + i)
                    G_cols.append(int(col))
                    G_vals.append(-float(val))
        dims["s"].append(k)

    G = spmatrix(G_vals, G_rows, G_cols, size=(len(h), n))
    hvec = matrix(np.asarray(h))
    cvec = matrix(c)
    A_eq, b_eq = program.eq_system()
    A = b = None
    if A_eq is not None:
        coo = A_eq.tocoo()
        A = spmatrix(coo.data.tolist(), coo.row.tolist(), coo.col.tolist(),
                     size=A_eq.shape)
        b = matrix(b_eq)

    opts = {"show_progress": False,
            "maxiters": config.max_iterations,
            "abstol": config.gap_tolerance,
            "reltol": config.gap_tolerance,
            "feastol": config.feasibility_tolerance}
    try:
        if A is not None:
            res = solvers.conelp(cvec, G, hvec, dims, A, b, options=opts)
        else:
            res = solvers.conelp(cvec, G, hvec, dims, options=opts)
    except (ValueError, ZeroDivisionError, ArithmeticError) as exc:
        return _finish(program, NUMERICAL_FAILURE, None, np.nan,
                       info={"message": str(exc)})

    status = res["status"]
    if status == "optimal":
        x = np.asarray(res["x"]).ravel()
        value = sign * float(c @ x) + program.obj_offset
        dual = None
        if res["dual objective"] is not None:
            dual = sign * float(res["dual objective"]) + program.obj_offset
        return _finish(program, OPTIMAL, x, value, dual_objective=dual)
    if status == "primal infeasible":
        return _finish(program, INFEASIBLE, None, np.nan)
    if status == "dual infeasible":
        return _finish(program, UNBOUNDED, None,
                       np.inf if program.sense == "max" else -np.inf)
    return _finish(program, NUMERICAL_FAILURE, None, np.nan,
                   info={"message": status})


# ---------------------------------------------------------------------------
# transportation simplex
# ---------------------------------------------------------------------------

def solve_lp_transportation(costs, supply, demand, tol=1e-10, max_pivots=None):
    """Balanced transportation problem: min <plan, costs> over couplings.

    Returns (value, plan) with plan row sums = supply and column sums =
    demand.  Uses the transportation-specialized simplex (northwest-corner
    start, u-v duals on the basis tree); falls back to a generic LP solve if
    the pivot cap is hit.
    """
    costs = np.atleast_2d(np.asarray(costs, dtype=float))
    supply = np.asarray(supply, dtype=float).ravel()
    demand = np.asarray(demand, dtype=float).ravel()
    m, n = costs.shape
    if supply.shape != (m,) or demand.shape != (n,):
        raise ValueError("supply/demand sizes must match the cost matrix")
    if np.any(supply < -tol) or np.any(demand < -tol):
        raise BalanceViolation("supply and demand must be nonnegative")
    if abs(supply.sum() - demand.sum()) > tol * max(1.0, supply.sum()):
        raise BalanceViolation(
            f"supply sum {supply.sum()} != demand sum {demand.sum()}")
    if max_pivots is None:
        max_pivots = 50 * (m + n) ** 2

    basis = _northwest_corner_basis(supply, demand)
    for _ in range(max_pivots):
        u, v = _tree_duals(basis, costs, m, n)
        reduced = costs - u[:, None] - v[None, :]
        enter = np.unravel_index(np.argmin(reduced), reduced.shape)
        if reduced[enter] >= -1e-12 * (1.0 + np.abs(costs).max()):
            plan = _tree_allocation(basis, supply, demand, m, n)
            plan = np.maximum(plan, 0.0)
            return float(np.sum(plan * costs)), plan
        _pivot(basis, enter, supply, demand, m, n)
    return _transportation_lp_fallback(costs, supply, demand)


def _northwest_corner_basis(supply, demand):
    m, n = supply.size, demand.size
    basis = set()
    i = j = 0
    s = supply.copy()
    d = demand.copy()
    while i < m and j < n:
        basis.add((i, j))
        move = min(s[i], d[j])
        s[i] -= move
        d[j] -= move
        if i == m - 1 and j == n - 1:
            break
        if s[i] <= d[j] and i < m - 1:
            i += 1
        elif j < n - 1:
            j += 1
        else:
            i += 1
    return basis


def _adjacency(basis, m, n):
    adj = [[] for _ in range(m + n)]
    for i, j in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    return adj


def _tree_duals(basis, costs, m, n):
    u = np.zeros(m)
    v = np.zeros(n)
    seen = np.zeros(m + n, dtype=bool)
    adj = _adjacency(basis, m, n)
    queue = deque([0])
    seen[0] = True
    while queue:
        node = queue.popleft()
        for nb in adj[node]:
            if seen[nb]:
                continue
            seen[nb] = True
            if node < m:
                v[nb - m] = costs[node, nb - m] - u[node]
            else:
                u[nb] = costs[nb, node - m] - v[node - m]
            queue.append(nb)
    return u, v


def _tree_allocation(basis, supply, demand, m, n):
    """Exact basic solution by repeatedly resolving leaves of the basis tree."""
    plan = np.zeros((m, n))
    remaining_s = supply.copy()
    remaining_d = demand.copy()
    degree = np.zeros(m + n, dtype=int)
    incident = [[] for _ in range(m + n)]
    alive = set(basis)
    for i, j in basis:
        degree[i] += 1
        degree[m + j] += 1
        incident[i].append((i, j))
        incident[m + j].append((i, j))
    leaves = deque(node for node in range(m + n) if degree[node] == 1)
    while leaves:
        node = leaves.popleft()
        cell = next((c for c in incident[node] if c in alive), None)
        if cell is None:
            continue
        i, j = cell
        amount = remaining_s[i] if node < m else remaining_d[j]
        plan[i, j] = amount
        remaining_s[i] -= amount
        remaining_d[j] -= amount
        alive.discard(cell)
        for end in (i, m + j):
            degree[end] -= 1
            if degree[end] == 1:
                leaves.append(end)
    return plan


def _find_cycle(basis, enter, m, n):
    """Alternating cycle created by the entering cell in the basis tree."""
    i0, j0 = enter
    adj = _adjacency(basis, m, n)
    # path from column node j0 back to row node i0 through the tree
    parent = {m + j0: None}
    queue = deque([m + j0])
    while queue:
        node = queue.popleft()
        if node == i0:
            break
        for nb in adj[node]:
            if nb not in parent:
                parent[nb] = node
                queue.append(nb)
    path = [i0]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    # path alternates row, col, row, ... from i0 to j0; prepend entering cell
    cycle = [enter]
    for a, b in zip(path, path[1:]):
        if a < m:
            cycle.append((a, b - m))
        else:
            cycle.append((b, a - m))
    return cycle


def _pivot(basis, enter, supply, demand, m, n):
    cycle = _find_cycle(basis, enter, m, n)
    plan = _tree_allocation(basis, supply, demand, m, n)
    minus_cells = cycle[1::2]
    amounts = [plan[c] for c in minus_cells]
    leave = minus_cells[int(np.argmin(amounts))]
    basis.discard(leave)
    basis.add(enter)


def _transportation_lp_fallback(costs, supply, demand):
    m, n = costs.shape
    c = costs.ravel()
    rows = []
    for i in range(m):
        row = sp.coo_matrix((np.ones(n), (np.zeros(n), i * n + np.arange(n))),
                            shape=(1, m * n))
        rows.append(row)
    for j in range(n):
        row = sp.coo_matrix((np.ones(m), (np.zeros(m), np.arange(m) * n + j)),
                            shape=(1, m * n))
        rows.append(row)
    A_eq = sp.vstack(rows).tocsr()
    b_eq = np.concatenate([supply, demand])
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise MthdroError(f"transportation fallback failed: {res.message}")
    plan = res.x.reshape(m, n)
    return float(res.fun), plan
