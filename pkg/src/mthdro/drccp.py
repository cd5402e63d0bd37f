"""Distributionally robust chance constraints via worst-case CVaR (p = 1).

Each chance constraint P(f_i(x, xi) <= 0) >= 1 - alpha_i is replaced by its
CVaR inner approximation, and the worst case over the MTH is compiled into
linear (or LP+SOC) constraints on the decision x per the epigraphical dual.
"""

from __future__ import annotations

import numpy as np

from .core import (DEFAULT_EXPANSION_CAP, InfeasibleX, NormMismatch,
                   Polyhedron, UnboundedSupport, L1, L2, LINF)
from .conic import AffineVector, ConicProgram, dual_norm_constraint, require_feasible
from .solver import solve


class BilinearPwaConstraint:
    """f(x, xi) = max_j <x, A_j xi> + <u_j, xi> + <c_j, x> + e_j with level alpha.

    A_j maps the uncertainty into decision space (ell x d); u_j is a fixed
    linear term in xi (zero in the plain bilinear case); b_j(x) = <c_j,x>+e_j.
    """

    def __init__(self, alpha, A, c, e, u=None):
        if not 0.0 < alpha < 1.0:
            raise ValueError("risk level alpha must lie in (0, 1)")
        A = [np.atleast_2d(np.asarray(a, dtype=float)) for a in A]
        m = len(A)
        if m < 1:
            raise ValueError("at least one piece required")
        ell, d = A[0].shape
        c = [np.asarray(ci, dtype=float).ravel() for ci in c]
        e = np.asarray(e, dtype=float).ravel()
        if u is None:
            u = [np.zeros(d) for _ in range(m)]
        u = [np.asarray(ui, dtype=float).ravel() for ui in u]
        if len(c) != m or e.shape != (m,) or len(u) != m:
            raise ValueError("pieces must align across A, c, e, u")
        for a, ci, ui in zip(A, c, u):
            if a.shape != (ell, d) or ci.shape != (ell,) or ui.shape != (d,):
                raise ValueError("piece shape mismatch")
        self.alpha = float(alpha)
        self.A = A
        self.c = c
        self.e = e
        self.u = u
        self.ell = ell
        self.d = d

    @property
    def m(self):
        return len(self.A)

    def evaluate(self, x, points):
        x = np.asarray(x, dtype=float).ravel()
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        vals = np.stack(
            [pts @ (self.A[j].T @ x + self.u[j]) + self.c[j] @ x + self.e[j]
             for j in range(self.m)], axis=1)
        return vals.max(axis=1)


class DrccpProblem:
    """min <g, x> over x in X subject to DR CVaR constraints on a compact Xi."""

    def __init__(self, g, X, constraints, support, x_lb=None, x_ub=None):
        self.g = np.asarray(g, dtype=float).ravel()
        ell = self.g.size
        if X is None:
            X = Polyhedron.whole_space(ell)
        if X.dim != ell:
            raise ValueError("decision polyhedron dimension mismatch")
        self.X = X
        self.constraints = list(constraints)
        if not self.constraints:
            raise ValueError("at least one chance constraint required")
        for con in self.constraints:
            if con.ell != ell:
                raise ValueError("constraint decision dimension mismatch")
        self.support = support
        self.x_lb = None if x_lb is None else np.asarray(x_lb, dtype=float).ravel()
        self.x_ub = None if x_ub is None else np.asarray(x_ub, dtype=float).ravel()

    @property
    def ell(self):
        return self.g.size


def _validate(mth, problem):
    if mth.structure.p != 1:
        raise NormMismatch("DRCCP reformulation requires p = 1")
    support = problem.support
    if support.dim != mth.dim:
        raise UnboundedSupport("support dimension mismatch")
    lo, hi = support.coordinate_bounds()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise UnboundedSupport("support polyhedron must be compact")
    if problem.X.rows > 0 and not problem.X.is_nonempty():
        raise InfeasibleX("decision polyhedron is empty")


def _add_decision(prog, problem):
    x = prog.add_var("x", problem.ell)
    if problem.x_lb is not None:
        prog.add_ineq(-np.eye(problem.ell), x, -problem.x_lb)
    if problem.x_ub is not None:
        prog.add_ineq(np.eye(problem.ell), x, problem.x_ub)
    if problem.X.rows > 0:
        prog.add_ineq(problem.X.C, x, problem.X.f)
    return x


def _add_cvar_block(prog, mth, problem, con, x, ref, tag):
    """Constraints tying the worst-case CVaR of one chance constraint to tau.

    Returns (tau_col, lambda_cols, s_cols) so callers can close the block
    either as a feasibility cut (build_drccp) or an epigraph
    (worst_case_cvar).  Rows are assembled in bulk across atoms because the
    experiment harness builds thousands of these programs.
    """
    st = mth.structure
    C, f = problem.support.C, problem.support.f
    r = problem.support.rows
    atoms = ref.atoms
    M, m, ell, d = ref.m, con.m, con.ell, con.d
    tau = prog.add_var(f"tau{tag}", 1)[0]
    lam = prog.add_var(f"lambda{tag}", st.n, lb=0.0)
    s = prog.add_var(f"s{tag}", ref.m, lb=0.0)
    eta = prog.add_var(f"eta{tag}", M * m * r, lb=0.0)
    eta_of = eta.reshape(M, m, r) if r else np.zeros((M, m, 0), dtype=int)

    # b_j(x) + tau + <A_j' x + u_j - C' eta_lj, xi_l> + <eta_lj, f> <= s_l
    width = ell + 1 + r + 1
    cols = np.empty((M, m, width), dtype=int)
    vals = np.empty((M, m, width))
    slack = f[None, :] - atoms @ C.T                      # (M, r)
    for j in range(m):
        cols[:, j, :ell] = x
        vals[:, j, :ell] = con.c[j] + atoms @ con.A[j].T  # (M, ell)
        cols[:, j, ell] = tau
        vals[:, j, ell] = 1.0
        cols[:, j, ell + 1:ell + 1 + r] = eta_of[:, j, :]
        vals[:, j, ell + 1:ell + 1 + r] = slack
        cols[:, j, -1] = s
        vals[:, j, -1] = -1.0
    rhs = -(con.e[None, :] + atoms @ np.stack(con.u, axis=1))  # (M, m)
    rows = np.repeat(np.arange(M * m), width)
    prog.add_ineq_triplets(rows, cols.reshape(M * m, width),
                           vals.reshape(M * m, width), rhs.reshape(M * m))

    # dual-norm constraints ||pr_k(A_j' x + u_j - C' eta_lj)||_* <= lambda_k
    for k in range(st.n):
        slc = st.slice_of(k)
        dk = slc.stop - slc.start
        norm = st.norms[k]
        if norm == L2:
            for l in range(M):
                for j in range(m):
                    v = AffineVector(np.hstack([con.A[j].T[slc], -C.T[slc]]),
                                     np.concatenate([x, eta_of[l, j]]),
                                     con.u[j][slc])
                    dual_norm_constraint(prog, v, lam[k], norm)
            continue
        # coefficient layout per scalar row v_i: [x (ell), eta (r), bound (1)]
        vw = ell + r + 1
        vcols = np.empty((M, m, dk, vw), dtype=int)
        vvals = np.empty((M, m, dk, vw))
        consts = np.empty((M, m, dk))
        if norm == LINF:
            t = prog.add_var(f"dualnorm_t{tag}", M * m * dk)
            t_of = t.reshape(M, m, dk)
        for j in range(m):
            vcols[:, j, :, :ell] = x
            vvals[:, j, :, :ell] = con.A[j][:, slc].T[None, :, :]  # (dk, ell)
            vcols[:, j, :, ell:ell + r] = eta_of[:, j, None, :]
            vvals[:, j, :, ell:ell + r] = -C[:, slc].T[None, :, :]
            consts[:, j, :] = con.u[j][slc]
        if norm == L1:           # dual LInf: -lam_k <= v_i <= lam_k
            vcols[..., -1] = lam[k]
        else:                    # LInf ground: lift through t >= |v_i|
            vcols[..., -1] = t_of
        vvals[..., -1] = -1.0
        nrows = M * m * dk
        flat_cols = vcols.reshape(nrows, vw)
        flat_vals = vvals.reshape(nrows, vw)
        flat_consts = consts.reshape(nrows)
        rows = np.repeat(np.arange(nrows), vw)
        prog.add_ineq_triplets(rows, flat_cols, flat_vals, -flat_consts)
        neg_vals = flat_vals.copy()
        neg_vals[:, :-1] *= -1.0  # flip v but keep the -1 on the bound column
        prog.add_ineq_triplets(rows, flat_cols, neg_vals, flat_consts)
        if norm == LINF:         # sum_i t_i <= lambda_k
            scols = np.concatenate([t_of.reshape(M * m, dk),
                                    np.full((M * m, 1), lam[k])], axis=1)
            svals = np.concatenate([np.ones((M * m, dk)),
                                    -np.ones((M * m, 1))], axis=1)
            rows = np.repeat(np.arange(M * m), dk + 1)
            prog.add_ineq_triplets(rows, scols, svals, np.zeros(M * m))
    return tau, lam, s


def build_drccp(mth, problem, cap=DEFAULT_EXPANSION_CAP):
    """Compile the full DRCCP into one conic program over (x, tau_i, ...)."""
    _validate(mth, problem)
    ref = mth.reference_discrete(cap=cap)
    prog = ConicProgram("min")
    x = _add_decision(prog, problem)
    prog.add_objective_term(x, problem.g)
    eps = mth.budgets  # p = 1, so transformed budgets coincide with budgets
    for i, con in enumerate(problem.constraints):
        tau, lam, s = _add_cvar_block(prog, mth, problem, con, x, ref, tag=f"_{i}")
        # <lambda_i, eps> + sum_l theta_l s_li <= tau_i * alpha_i
        row = np.concatenate([eps, ref.weights, [-con.alpha]])
        prog.add_ineq(row[None, :], np.concatenate([lam, s, [tau]]), [0.0])
    return prog


def solve_drccp(mth, problem, config=None, cap=DEFAULT_EXPANSION_CAP):
    prog = build_drccp(mth, problem, cap=cap)
    sol = solve(prog, config)
    if sol.optimal:
        require_feasible(prog, sol, 1e-6)
    return sol


def worst_case_cvar(mth, x, problem, i=0, config=None,
                    cap=DEFAULT_EXPANSION_CAP):
    """sup over the MTH of CVaR_{1-alpha_i}(f_i(x, xi)) at a frozen decision.

    The value is <= 0 exactly when x is feasible for chance constraint i.
    """
    _validate(mth, problem)
    con = problem.constraints[i]
    x = np.asarray(x, dtype=float).ravel()
    ref = mth.reference_discrete(cap=cap)
    prog = ConicProgram("min")
    xvar = prog.add_var("x", problem.ell)
    prog.add_eq(np.eye(problem.ell), xvar, x)
    t = prog.add_var("t", 1)[0]
    prog.add_objective_term([t], [1.0])
    tau, lam, s = _add_cvar_block(prog, mth, problem, con, xvar, ref, tag="")
    # <lambda, eps> + sum theta_l s_l <= alpha * (tau + t)
    row = np.concatenate([mth.budgets, ref.weights, [-con.alpha, -con.alpha]])
    prog.add_ineq(row[None, :], np.concatenate([lam, s, [tau, t]]), [0.0])
    sol = solve(prog, config)
    require_feasible(prog, sol, 1e-6)
    return float(sol.value)
