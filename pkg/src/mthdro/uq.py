"""Worst-case probabilities over MTHs for unions of polyhedra (p = 1).

The safe-set probability program follows the indicator decomposition
1_{union A_j} = max_j {1 - chi_{A_j}, 0}; complements of unions are handled
by enumerating one half-space per piece (De Morgan) and reusing the same
machinery on the resulting closed sets.
"""

from __future__ import annotations

import itertools

import numpy as np

from .core import (DEFAULT_EXPANSION_CAP, EmptyIntersection,
                   EnumerationCapExceeded, NormMismatch, Polyhedron)
from .conic import AffineVector, ConicProgram, dual_norm_constraint, require_feasible
from .reformulate import build_dual_template, _check_support
from .solver import solve

DEFAULT_ENUMERATION_CAP = 10**5


class PolyUnion:
    """Union of closed polyhedra A_j = {A_j xi <= b_j} inside a support Xi."""

    def __init__(self, pieces, support, drop_empty=False):
        pieces = list(pieces)
        if not pieces:
            raise ValueError("at least one piece required")
        kept = []
        for j, piece in enumerate(pieces):
            if piece.dim != support.dim:
                raise EmptyIntersection(f"piece {j} dimension mismatch")
            if piece.intersect(support).is_nonempty():
                kept.append(piece)
            elif not drop_empty:
                raise EmptyIntersection(
                    f"piece {j} does not intersect the support")
        if not kept:
            raise EmptyIntersection("no piece intersects the support")
        self.pieces = kept
        self.support = support

    @property
    def m(self):
        return len(self.pieces)


class OpenPolyUnion:
    """Union of open polyhedra, each an intersection of strict half-spaces.

    Piece j is {xi : <a_j^l, xi> < b_j^l for l in [alpha_j]}, stored as a
    matrix of rows a_j^l and a vector of offsets b_j^l.
    """

    def __init__(self, pieces, support):
        cleaned = []
        for j, (A, b) in enumerate(pieces):
            A = np.atleast_2d(np.asarray(A, dtype=float))
            b = np.asarray(b, dtype=float).ravel()
            if A.shape[0] < 1 or b.shape != (A.shape[0],):
                raise ValueError(f"piece {j} needs >= 1 matching half-spaces")
            if A.shape[1] != support.dim:
                raise ValueError(f"piece {j} dimension mismatch")
            cleaned.append((A, b))
        if not cleaned:
            raise ValueError("at least one piece required")
        self.pieces = cleaned
        self.support = support

    @property
    def m(self):
        return len(self.pieces)

    def half_space_counts(self):
        return tuple(A.shape[0] for A, _ in self.pieces)


def _build_probability_program(mth, pieces, support, cap):
    st = mth.structure
    C, f = support.C, support.f
    r = support.rows

    def encode(prog, l, atom, lam, s_col):
        slack = f - C @ atom
        for j, piece in enumerate(pieces):
            Aj, bj = piece.C, piece.f
            theta = prog.add_var(f"theta_{l}_{j}", Aj.shape[0], lb=0.0)
            gamma = prog.add_var(f"gamma_{l}_{j}", r, lb=0.0)
            # 1 + <theta, b_j - A_j xi_l> + <gamma, f - C xi_l> <= s_l
            row = np.concatenate([bj - Aj @ atom, slack, [-1.0]])
            prog.add_ineq(row[None, :],
                          np.concatenate([theta, gamma, [s_col]]), [-1.0])
            v = AffineVector(np.hstack([Aj.T, C.T]),
                             np.concatenate([theta, gamma]), np.zeros(mth.dim))
            for k in range(st.n):
                dual_norm_constraint(prog, v.restrict(st.slice_of(k)),
                                     lam[k], st.norms[k])

    prog = build_dual_template(mth, encode, cap=cap)
    s = prog.groups["s"]
    prog.add_ineq(-np.eye(s.size), s, np.zeros(s.size))
    return prog


def worst_case_probability(mth, union, config=None, cap=DEFAULT_EXPANSION_CAP):
    """sup over the MTH of P(xi in union of closed polyhedra)."""
    if mth.structure.p != 1:
        raise NormMismatch("uncertainty quantification requires p = 1")
    _check_support(union.support, mth.dim)
    prog = _build_probability_program(mth, union.pieces, union.support, cap)
    sol = solve(prog, config)
    require_feasible(prog, sol, 1e-6)
    return float(sol.value), sol


def worst_case_miss_probability(mth, union, config=None,
                                cap=DEFAULT_EXPANSION_CAP,
                                enumeration_cap=DEFAULT_ENUMERATION_CAP):
    """sup over the MTH of P(xi outside a union of open polyhedra).

    Enumerates one half-space index per piece (lexicographically), keeps the
    closed complements B_q that intersect the support, and evaluates the
    worst-case probability of their union.  Strict boundaries are treated as
    closed, so the returned value can overestimate the open-set complement
    by boundary mass only.
    """
    if mth.structure.p != 1:
        raise NormMismatch("uncertainty quantification requires p = 1")
    support = union.support
    _check_support(support, mth.dim)
    counts = union.half_space_counts()
    total = int(np.prod(counts))
    if total > enumeration_cap:
        raise EnumerationCapExceeded(
            f"{total} index combinations exceed the cap {enumeration_cap}")
    kept = []
    for q in itertools.product(*(range(c) for c in counts)):
        rows = np.vstack([union.pieces[j][0][qj] for j, qj in enumerate(q)])
        offs = np.array([union.pieces[j][1][qj] for j, qj in enumerate(q)])
        # B_q = {A_q xi >= b_q} written as {-A_q xi <= -b_q}
        bq = Polyhedron(-rows, -offs)
        if bq.intersect(support).is_nonempty():
            kept.append(bq)
    if not kept:
        zero = np.zeros(mth.n)
        from .conic import Solution, OPTIMAL
        return 0.0, Solution(OPTIMAL, value=0.0, x=np.zeros(0),
                             groups={"lambda": zero})
    prog = _build_probability_program(mth, kept, support, cap)
    sol = solve(prog, config)
    require_feasible(prog, sol, 1e-6)
    return float(sol.value), sol
