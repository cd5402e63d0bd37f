"""Dual reformulations of worst-case expectation problems over an MTH.

Every builder instantiates the same dual template: minimize
<lambda, eps^p> + sum_l theta_l * s_l over lambda >= 0, with per-atom
constraints bounding the epigraph variables s_l from below by the inner
supremum  sup_xi { h(xi) - sum_k lambda_k ||xi_k - xi_k^l||^p }.
"""

from __future__ import annotations

import numpy as np

from .core import (DEFAULT_EXPANSION_CAP, EmptySupport, L2, NormMismatch,
                   Polyhedron, PwaFunction, QuadraticFunction, UnboundedValue)
from .conic import (AffineScalar, AffineVector, ConicProgram, UNBOUNDED,
                    dual_norm_constraint, require_feasible)
from .solver import solve


def build_dual_template(mth, inner_sup_encoder, cap=DEFAULT_EXPANSION_CAP):
    """Shared skeleton of all dual programs.

    `inner_sup_encoder(prog, l, atom, lam_cols, s_col)` must append conic
    constraints forcing x[s_col] to dominate the atom's inner supremum.
    """
    ref = mth.reference_discrete(cap=cap)
    n = mth.n
    prog = ConicProgram("min")
    lam = prog.add_var("lambda", n, lb=0.0)
    s = prog.add_var("s", ref.m)
    prog.add_objective_term(lam, mth.transformed_budgets())
    prog.add_objective_term(s, ref.weights)
    for l in range(ref.m):
        inner_sup_encoder(prog, l, ref.atoms[l], lam, s[l])
    return prog


def _check_support(Xi, d):
    if Xi is None:
        Xi = Polyhedron.whole_space(d)
    if Xi.dim != d:
        raise EmptySupport(f"support dimension {Xi.dim} != {d}")
    if Xi.rows > 0 and not Xi.is_nonempty():
        raise EmptySupport("support polyhedron is infeasible")
    return Xi


def build_dro_pwa(mth, h, Xi, cap=DEFAULT_EXPANSION_CAP):
    """Worst-case expectation of a piecewise affine objective, p = 1.

    Max combiner: one multiplier gamma_lj >= 0 per atom/piece pair.
    Min combiner: per atom, a simplex-weighted combination theta_l of the
    pieces plus one support multiplier gamma_l.
    """
    if mth.structure.p != 1:
        raise NormMismatch("piecewise affine reformulation requires p = 1")
    if not isinstance(h, PwaFunction):
        raise TypeError("h must be a PwaFunction")
    Xi = _check_support(Xi, mth.dim)
    st = mth.structure
    C, f = Xi.C, Xi.f
    r = Xi.rows
    A, b = h.A, h.b
    m = h.m

    if h.combiner == PwaFunction.MAX:
        def encode(prog, l, atom, lam, s_col):
            slack = f - C @ atom
            for j in range(m):
                gamma = prog.add_var(f"gamma_{l}_{j}", r, lb=0.0)
                # b_j + <alpha_j, xi_l> + <gamma, f - C xi_l> <= s_l
                row = np.append(slack, -1.0)
                prog.add_ineq(row[None, :], np.append(gamma, s_col),
                              [-b[j] - A[j] @ atom])
                v = AffineVector(C.T, gamma, -A[j])
                for k in range(st.n):
                    dual_norm_constraint(prog, v.restrict(st.slice_of(k)),
                                         lam[k], st.norms[k])
    else:
        def encode(prog, l, atom, lam, s_col):
            slack = f - C @ atom
            gamma = prog.add_var(f"gamma_{l}", r, lb=0.0)
            theta = prog.add_var(f"theta_{l}", m, lb=0.0)
            prog.add_eq(np.ones((1, m)), theta, [1.0])
            # <theta, b + A xi_l> + <gamma, f - C xi_l> <= s_l
            row = np.concatenate([b + A @ atom, slack, [-1.0]])
            prog.add_ineq(row[None, :],
                          np.concatenate([theta, gamma, [s_col]]), [0.0])
            v = AffineVector(np.hstack([C.T, -A.T]),
                             np.concatenate([gamma, theta]), np.zeros(mth.dim))
            for k in range(st.n):
                dual_norm_constraint(prog, v.restrict(st.slice_of(k)),
                                     lam[k], st.norms[k])

    return build_dual_template(mth, encode, cap=cap)


class ConjugateOracle:
    """Conic encoders for the pieces of a max-of-concave objective.

    `pieces[j](prog, arg)` appends constraints and returns an AffineScalar
    dominating [-h_j]^*(arg) for the AffineVector argument; `support(prog,
    arg)` does the same for the support function of the uncertainty domain.
    """

    def __init__(self, pieces, support):
        self.pieces = list(pieces)
        self.support = support

    @property
    def m(self):
        return len(self.pieces)

    @staticmethod
    def affine_piece(alpha, b):
        """h_j(xi) = <alpha, xi> + b, so [-h_j]^* is b on {-alpha}, +inf elsewhere."""
        alpha = np.asarray(alpha, dtype=float).ravel()

        def encode(prog, arg):
            fixed = arg - (-alpha)
            prog.add_eq(fixed.matrix, fixed.cols, -fixed.const)
            return AffineScalar(const=float(b))
        return encode

    @staticmethod
    def indicator_piece(Aj, bj):
        """h_j = 1 - chi_{A_j xi <= b_j}; conjugate via LP duality."""
        Aj = np.atleast_2d(np.asarray(Aj, dtype=float))
        bj = np.asarray(bj, dtype=float).ravel()

        def encode(prog, arg):
            theta = prog.add_var("theta", Aj.shape[0], lb=0.0)
            lifted = arg - AffineVector(Aj.T, theta, np.zeros(arg.size))
            prog.add_eq(lifted.matrix, lifted.cols, -lifted.const)
            return AffineScalar(theta, bj, 1.0)
        return encode

    @staticmethod
    def zero_piece():
        """h_j = 0; the conjugate pins the argument to zero."""
        def encode(prog, arg):
            prog.add_eq(arg.matrix, arg.cols, -arg.const)
            return AffineScalar()
        return encode

    @staticmethod
    def polyhedral_support(Xi):
        C, f = Xi.C, Xi.f

        def encode(prog, arg):
            gamma = prog.add_var("sigma_gamma", Xi.rows, lb=0.0)
            lifted = arg - AffineVector(C.T, gamma, np.zeros(arg.size))
            prog.add_eq(lifted.matrix, lifted.cols, -lifted.const)
            return AffineScalar(gamma, f, 0.0)
        return encode

    @classmethod
    def for_pwa_max(cls, h, Xi):
        if h.combiner != PwaFunction.MAX:
            raise ValueError("oracle factory covers max-combined pieces only")
        return cls([cls.affine_piece(h.A[j], h.b[j]) for j in range(h.m)],
                   cls.polyhedral_support(Xi))

    @classmethod
    def for_indicator_union(cls, pieces, Xi):
        encoders = [cls.indicator_piece(p.C, p.f) for p in pieces]
        encoders.append(cls.zero_piece())
        return cls(encoders, cls.polyhedral_support(Xi))


def build_dro_concave_max(mth, oracle, Xi, cap=DEFAULT_EXPANSION_CAP):
    """General max-of-concave dual program driven by a ConjugateOracle, p = 1."""
    if mth.structure.p != 1:
        raise NormMismatch("concave-max reformulation requires p = 1")
    Xi = _check_support(Xi, mth.dim)
    st = mth.structure
    d = mth.dim

    def encode(prog, l, atom, lam, s_col):
        for j, piece in enumerate(oracle.pieces):
            z = prog.add_var(f"z_{l}_{j}", d)
            ups = prog.add_var(f"upsilon_{l}_{j}", d)
            zx = AffineVector.of_vars(z)
            ux = AffineVector.of_vars(ups)
            t1 = piece(prog, zx - ux)
            t2 = oracle.support(prog, ux)
            total = t1 + t2 + AffineScalar(z, -atom) + AffineScalar([s_col], [-1.0])
            prog.add_scalar_ineq(total, 0.0)
            for k in range(st.n):
                dual_norm_constraint(prog, zx.restrict(st.slice_of(k)),
                                     lam[k], st.norms[k])

    return build_dual_template(mth, encode, cap=cap)


def build_dro_quadratic(mth, h, cap=DEFAULT_EXPANSION_CAP):
    """Worst-case expectation of an indefinite quadratic, p = 2, Xi = R^d.

    One (d+1) x (d+1) PSD block per atom with the component-diagonal
    diag^d(lambda) scaling.
    """
    st = mth.structure
    if st.p != 2:
        raise NormMismatch("quadratic reformulation requires p = 2")
    if any(t != L2 for t in st.norms):
        raise NormMismatch("quadratic reformulation requires L2 component norms")
    if not isinstance(h, QuadraticFunction):
        raise TypeError("h must be a QuadraticFunction")
    if h.dim != mth.dim:
        raise NormMismatch("objective dimension mismatch")
    d = mth.dim
    Q, q = h.Qmat, h.q

    # diag^d indicator of component k
    comp_mask = [np.zeros(d) for _ in range(st.n)]
    for k in range(st.n):
        comp_mask[k][st.slice_of(k)] = 1.0

    def encode(prog, l, atom, lam, s_col):
        F0 = np.zeros((d + 1, d + 1))
        F0[:d, :d] = -Q
        F0[:d, d] = q
        F0[d, :d] = q
        terms = []
        for k in range(st.n):
            mask = comp_mask[k]
            Fk = np.zeros((d + 1, d + 1))
            Fk[:d, :d] = np.diag(mask)
            Fk[:d, d] = mask * atom
            Fk[d, :d] = mask * atom
            Fk[d, d] = float(atom @ (mask * atom))
            terms.append((lam[k], Fk))
        Fs = np.zeros((d + 1, d + 1))
        Fs[d, d] = 1.0
        terms.append((s_col, Fs))
        prog.add_psd(F0, terms)

    prog = build_dual_template(mth, encode, cap=cap)
    # Prop-5.3 programs additionally require s_l >= 0
    s = prog.groups["s"]
    prog.add_ineq(-np.eye(s.size), s, np.zeros(s.size))
    return prog


def solve_worst_case(prog, config=None, feas_tol=1e-6):
    """Solve a builder program; raises UnboundedValue on a certified ray."""
    sol = solve(prog, config)
    if sol.status == UNBOUNDED:
        raise UnboundedValue("worst-case expectation is +infinity")
    require_feasible(prog, sol, feas_tol)
    return float(sol.value), sol


def worst_case_expectation_pwa(mth, h, Xi, config=None, cap=DEFAULT_EXPANSION_CAP):
    return solve_worst_case(build_dro_pwa(mth, h, Xi, cap=cap), config)


def worst_case_expectation_quadratic(mth, h, config=None,
                                     cap=DEFAULT_EXPANSION_CAP):
    # PSD interior-point solutions sit close to the cone boundary; allow a
    # slightly looser independent feasibility check than for LPs.
    return solve_worst_case(build_dro_quadratic(mth, h, cap=cap),
                            config, feas_tol=1e-5)
