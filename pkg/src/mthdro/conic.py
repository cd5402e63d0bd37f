"""Solver-agnostic conic program representation.

A ConicProgram is a flat variable vector with a linear objective and a list
of constraints: linear equalities/inequalities, second-order-cone memberships
||u(x)||_2 <= t(x), and PSD memberships of affine symmetric matrix
expressions.  Builders append constraint rows as sparse triplets against
global variable indices, so variables may keep being declared while
constraints accumulate.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .core import L1, L2, LINF, MthdroError

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"
NUMERICAL_FAILURE = "NumericalFailure"


class AffineVector:
    """Affine d-vector expression  matrix @ x[cols] + const."""

    def __init__(self, matrix, cols, const):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        self.cols = np.asarray(cols, dtype=int).ravel()
        self.const = np.asarray(const, dtype=float).ravel()
        if self.matrix.shape != (self.const.size, self.cols.size):
            raise ValueError("inconsistent affine expression shapes")

    @classmethod
    def of_vars(cls, cols):
        cols = np.asarray(cols, dtype=int).ravel()
        return cls(np.eye(cols.size), cols, np.zeros(cols.size))

    @classmethod
    def constant(cls, const):
        const = np.asarray(const, dtype=float).ravel()
        return cls(np.zeros((const.size, 0)), np.zeros(0, dtype=int), const)

    @property
    def size(self):
        return self.const.size

    def restrict(self, slc):
        return AffineVector(self.matrix[slc], self.cols, self.const[slc])

    def __sub__(self, other):
        if isinstance(other, AffineVector):
            if other.size != self.size:
                raise ValueError("size mismatch")
            return AffineVector(
                np.hstack([self.matrix, -other.matrix]),
                np.concatenate([self.cols, other.cols]),
                self.const - other.const)
        return AffineVector(self.matrix, self.cols,
                            self.const - np.asarray(other, dtype=float))

    def value(self, x):
        return self.matrix @ x[self.cols] + self.const


class AffineScalar:
    """Affine scalar expression  coeffs . x[cols] + const."""

    def __init__(self, cols=(), coeffs=(), const=0.0):
        self.cols = np.asarray(cols, dtype=int).ravel()
        self.coeffs = np.asarray(coeffs, dtype=float).ravel()
        self.const = float(const)
        if self.cols.shape != self.coeffs.shape:
            raise ValueError("cols and coeffs must align")

    def __add__(self, other):
        if isinstance(other, AffineScalar):
            return AffineScalar(np.concatenate([self.cols, other.cols]),
                                np.concatenate([self.coeffs, other.coeffs]),
                                self.const + other.const)
        return AffineScalar(self.cols, self.coeffs, self.const + float(other))

    def value(self, x):
        return float(self.coeffs @ x[self.cols] + self.const)


class _TripletBlock:
    """Growing sparse matrix in COO triplet form with a row counter."""

    def __init__(self):
        self.rows = []
        self.cols = []
        self.vals = []
        self.rhs = []
        self.nrows = 0

    def add(self, matrix, cols, rhs):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        cols = np.asarray(cols, dtype=int).ravel()
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        m = matrix.shape[0]
        if matrix.shape[1] != cols.size or rhs.size != m:
            raise ValueError("inconsistent constraint block")
        r, c = np.nonzero(matrix)
        self.rows.append(r + self.nrows)
        self.cols.append(cols[c])
        self.vals.append(matrix[r, c])
        self.rhs.append(rhs)
        self.nrows += m

    def add_triplets(self, rows, cols, vals, rhs):
        """Bulk append of pre-assembled sparse rows (rows local to this block)."""
        rows = np.asarray(rows, dtype=int).ravel()
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        self.rows.append(rows + self.nrows)
        self.cols.append(np.asarray(cols, dtype=int).ravel())
        self.vals.append(np.asarray(vals, dtype=float).ravel())
        self.rhs.append(rhs)
        self.nrows += rhs.size

    def build(self, nvar):
        if self.nrows == 0:
            return None, np.zeros(0)
        rows = np.concatenate(self.rows) if self.rows else np.zeros(0, dtype=int)
        cols = np.concatenate(self.cols) if self.cols else np.zeros(0, dtype=int)
        vals = np.concatenate(self.vals) if self.vals else np.zeros(0)
        mat = sp.coo_matrix((vals, (rows, cols)), shape=(self.nrows, nvar)).tocsr()
        return mat, np.concatenate(self.rhs)


class ConicProgram:
    """Intermediate representation consumed by the solver backends."""

    def __init__(self, sense="min"):
        if sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        self.sense = sense
        self._nvar = 0
        self.groups = {}
        self._lb = []
        self._ub = []
        self._obj_cols = []
        self._obj_coeffs = []
        self.obj_offset = 0.0
        self._ineq = _TripletBlock()
        self._eq = _TripletBlock()
        self._ineq_cache = None
        self._eq_cache = None
        self.socs = []   # list of (u: AffineVector, t: AffineScalar)
        self.psds = []   # list of (F0, [(col, Fi), ...])

    # -- variables -----------------------------------------------------

    def add_var(self, name, size=1, lb=-np.inf, ub=np.inf):
        """Declare `size` scalar variables; returns their global indices."""
        base = name
        k = 1
        while name in self.groups:
            k += 1
            name = f"{base}_{k}"
        idx = np.arange(self._nvar, self._nvar + size)
        self.groups[name] = idx
        self._nvar += size
        self._ineq_cache = None
        self._eq_cache = None
        self._lb.extend([lb] * size)
        self._ub.extend([ub] * size)
        return idx

    @property
    def num_vars(self):
        return self._nvar

    def bounds(self):
        return np.array(self._lb, dtype=float), np.array(self._ub, dtype=float)

    # -- objective -----------------------------------------------------

    def add_objective_term(self, cols, coeffs):
        self._obj_cols.append(np.asarray(cols, dtype=int).ravel())
        self._obj_coeffs.append(np.asarray(coeffs, dtype=float).ravel())

    def objective_vector(self):
        c = np.zeros(self._nvar)
        for cols, coeffs in zip(self._obj_cols, self._obj_coeffs):
            np.add.at(c, cols, coeffs)
        return c

    # -- constraints ---------------------------------------------------

    def add_ineq(self, matrix, cols, rhs):
        """matrix @ x[cols] <= rhs (rows may be a block)."""
        self._ineq_cache = None
        self._ineq.add(matrix, cols, rhs)

    def add_ineq_triplets(self, rows, cols, vals, rhs):
        """Bulk sparse rows sum_j vals * x[cols] <= rhs, rows indexed from 0."""
        self._ineq_cache = None
        self._ineq.add_triplets(rows, cols, vals, rhs)

    def add_eq(self, matrix, cols, rhs):
        self._eq_cache = None
        self._eq.add(matrix, cols, rhs)

    def add_scalar_ineq(self, expr, rhs=0.0):
        """AffineScalar expr <= rhs."""
        self._ineq.add(expr.coeffs[None, :], expr.cols, [rhs - expr.const])

    def add_soc(self, u, t):
        """||u(x)||_2 <= t(x) with u an AffineVector and t an AffineScalar."""
        self.socs.append((u, t))

    def add_psd(self, const_matrix, terms):
        """const_matrix + sum_i x[col_i] * F_i  is PSD (all matrices symmetric)."""
        F0 = np.asarray(const_matrix, dtype=float)
        k = F0.shape[0]
        cleaned = []
        for col, Fi in terms:
            Fi = np.asarray(Fi, dtype=float)
            if Fi.shape != (k, k):
                raise ValueError("PSD term shape mismatch")
            cleaned.append((int(col), Fi))
        self.psds.append((F0, cleaned))

    # -- assembled matrices ---------------------------------------------

    @property
    def is_linear(self):
        return not self.socs and not self.psds

    def ineq_system(self):
        if self._ineq_cache is None:
            self._ineq_cache = self._ineq.build(self._nvar)
        return self._ineq_cache

    def eq_system(self):
        if self._eq_cache is None:
            self._eq_cache = self._eq.build(self._nvar)
        return self._eq_cache

    def dimensions(self):
        return {
            "variables": self._nvar,
            "linear_inequalities": self._ineq.nrows,
            "linear_equalities": self._eq.nrows,
            "soc_blocks": len(self.socs),
            "psd_blocks": len(self.psds),
        }

    def split_groups(self, x):
        return {name: x[idx].copy() for name, idx in self.groups.items()}


class Solution:
    """Solve outcome: status, optimal value, flat variables and named groups."""

    def __init__(self, status, value=np.nan, x=None, groups=None,
                 dual_objective=None, info=None):
        self.status = status
        self.value = value
        self.x = x
        self.groups = groups or {}
        self.dual_objective = dual_objective
        self.info = info or {}

    @property
    def optimal(self):
        return self.status == OPTIMAL

    def __repr__(self):
        return f"Solution(status={self.status}, value={self.value})"


def dual_norm_constraint(prog, v, lam_col, norm):
    """Append conic constraints encoding ||v||_* <= lambda.

    `v` is an AffineVector whose ground norm carries the given tag; the dual
    norm is what gets bounded.  L1 ground -> box constraints, LInf ground ->
    an L1 lifting with auxiliary variables, L2 -> one second-order cone.
    """
    dk = v.size
    lam_col = int(lam_col)
    if norm == L1:
        # dual is LInf: -lam <= v_i <= lam
        mat = np.hstack([v.matrix, -np.ones((dk, 1))])
        prog.add_ineq(mat, np.append(v.cols, lam_col), -v.const)
        mat = np.hstack([-v.matrix, -np.ones((dk, 1))])
        prog.add_ineq(mat, np.append(v.cols, lam_col), v.const)
    elif norm == LINF:
        # dual is L1: t_i >= |v_i|, sum t <= lam
        t = prog.add_var("dualnorm_t", dk)
        mat = np.hstack([v.matrix, -np.eye(dk)])
        prog.add_ineq(mat, np.concatenate([v.cols, t]), -v.const)
        mat = np.hstack([-v.matrix, -np.eye(dk)])
        prog.add_ineq(mat, np.concatenate([v.cols, t]), v.const)
        prog.add_ineq(np.append(np.ones(dk), -1.0)[None, :],
                      np.append(t, lam_col), [0.0])
    elif norm == L2:
        prog.add_soc(v, AffineScalar([lam_col], [1.0], 0.0))
    else:
        raise ValueError(f"unknown norm tag {norm!r}")


def check_solution(prog, x, tol=1e-6):
    """Independent feasibility check of x against every constraint of prog.

    Violations are measured relative to 1 + |rhs| (or matrix scale for PSD
    blocks).  Returns the maximum relative violation.
    """
    x = np.asarray(x, dtype=float)
    worst = 0.0
    lb, ub = prog.bounds()
    finite = np.isfinite(lb)
    if finite.any():
        worst = max(worst, np.max((lb[finite] - x[finite]) /
                                  (1.0 + np.abs(lb[finite])), initial=0.0))
    finite = np.isfinite(ub)
    if finite.any():
        worst = max(worst, np.max((x[finite] - ub[finite]) /
                                  (1.0 + np.abs(ub[finite])), initial=0.0))
    A, b = prog.ineq_system()
    if A is not None:
        resid = (A @ x - b) / (1.0 + np.abs(b))
        worst = max(worst, np.max(resid, initial=0.0))
    A, b = prog.eq_system()
    if A is not None:
        resid = np.abs(A @ x - b) / (1.0 + np.abs(b))
        worst = max(worst, np.max(resid, initial=0.0))
    for u, t in prog.socs:
        tval = t.value(x)
        viol = (np.linalg.norm(u.value(x)) - tval) / (1.0 + abs(tval))
        worst = max(worst, viol)
    for F0, terms in prog.psds:
        M = F0.copy()
        for col, Fi in terms:
            M = M + x[col] * Fi
        scale = 1.0 + np.max(np.abs(M))
        worst = max(worst, -np.linalg.eigvalsh(M).min() / scale)
    return float(worst)


def require_feasible(prog, solution, tol=1e-6):
    if not solution.optimal:
        raise MthdroError(f"solve failed with status {solution.status}")
    viol = check_solution(prog, solution.x, tol)
    if viol > tol:
        raise MthdroError(f"optimal solution violates constraints by {viol:g}")
    return solution
