"""Shared domain types: distributions, component structure, polyhedra, objectives.

All types are immutable after construction (arrays are copied and flagged
read-only) so they can be shared freely across worker processes/threads.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog

L1 = "L1"
L2 = "L2"
LINF = "LInf"
NORM_TAGS = (L1, L2, LINF)

DEFAULT_EXPANSION_CAP = 10**6

# embedded in every file the CLI/harness emits so consumers can detect layout changes
SCHEMA_VERSION = "mthdro-1"

WEIGHT_TOL = 1e-12
SYMMETRY_TOL = 1e-12


class MthdroError(Exception):
    """Base class for all library errors."""


class CapExceeded(MthdroError):
    pass


class DimensionMismatch(MthdroError):
    pass


class EmptySupport(MthdroError):
    pass


class BalanceViolation(MthdroError):
    pass


class EmptyIntersection(MthdroError):
    pass


class EnumerationCapExceeded(MthdroError):
    pass


class NormMismatch(MthdroError):
    pass


class UnboundedSupport(MthdroError):
    pass


class InfeasibleX(MthdroError):
    pass


class InfeasibleGrid(MthdroError):
    pass


class UnboundedValue(MthdroError):
    pass


class SchemaError(MthdroError):
    """Input file violates the JSON problem schema; message carries a JSON pointer."""


def _frozen(a, dtype=float):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


def norm_value(v, tag):
    """Evaluate the ground norm along the last axis."""
    v = np.asarray(v, dtype=float)
    if tag == L1:
        return np.abs(v).sum(axis=-1)
    if tag == L2:
        return np.sqrt((v * v).sum(axis=-1))
    if tag == LINF:
        return np.abs(v).max(axis=-1)
    raise ValueError(f"unknown norm tag {tag!r}")


def dual_norm_value(v, tag):
    """Evaluate the dual of the ground norm along the last axis."""
    return norm_value(v, {L1: LINF, L2: L2, LINF: L1}[tag])


class ComponentStructure:
    """Split of R^d into n consecutive components with per-component ground norms.

    dims[k] coordinates starting at offsets[k] form component k; transport
    costs use the component norm raised to the exponent p (p in {1, 2}).
    """

    def __init__(self, dims, norms, p=1):
        dims = tuple(int(d) for d in dims)
        if len(dims) == 0 or any(d < 1 for d in dims):
            raise ValueError("dims must be positive integers")
        if isinstance(norms, str):
            norms = (norms,) * len(dims)
        norms = tuple(norms)
        if len(norms) != len(dims):
            raise ValueError("one norm tag per component required")
        for t in norms:
            if t not in NORM_TAGS:
                raise ValueError(f"unknown norm tag {t!r}")
        if p not in (1, 2):
            raise ValueError("only transport exponents p in {1, 2} are supported")
        self.dims = dims
        self.norms = norms
        self.p = int(p)
        self.offsets = tuple(int(o) for o in np.concatenate([[0], np.cumsum(dims)]))

    @property
    def n(self):
        return len(self.dims)

    @property
    def d(self):
        return self.offsets[-1]

    def slice_of(self, k):
        return slice(self.offsets[k], self.offsets[k + 1])

    def project(self, points, k):
        """Extract component k (pr_k) from points of shape (..., d)."""
        return np.asarray(points)[..., self.slice_of(k)]

    def component_costs(self, a, b):
        """Per-component transport costs ||pr_k(a - b)||^p, shape (..., n)."""
        diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        cols = [norm_value(self.project(diff, k), self.norms[k]) ** self.p
                for k in range(self.n)]
        return np.stack(cols, axis=-1)

    def __repr__(self):
        return f"ComponentStructure(dims={self.dims}, norms={self.norms}, p={self.p})"


class DiscreteDistribution:
    """Finitely supported distribution: M atoms in R^d with probability weights."""

    def __init__(self, atoms, weights=None):
        atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        if atoms.ndim != 2 or atoms.shape[0] < 1:
            raise ValueError("atoms must be a nonempty (M, d) array")
        m = atoms.shape[0]
        if weights is None:
            weights = np.full(m, 1.0 / m)
        weights = np.asarray(weights, dtype=float).ravel()
        if weights.shape != (m,):
            raise DimensionMismatch("weights length must match atom count")
        if np.any(weights < -WEIGHT_TOL):
            raise ValueError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL * max(1, m):
            raise ValueError(f"weights sum to {weights.sum()}, expected 1")
        self.atoms = _frozen(atoms)
        self.weights = _frozen(np.clip(weights, 0.0, None))

    @property
    def m(self):
        return self.atoms.shape[0]

    @property
    def dim(self):
        return self.atoms.shape[1]

    def mean(self):
        return self.weights @ self.atoms

    def expectation(self, h):
        return float(self.weights @ np.asarray(h(self.atoms), dtype=float))

    def __repr__(self):
        return f"DiscreteDistribution(m={self.m}, dim={self.dim})"


class ProductDiscreteDistribution:
    """Product of n independent discrete marginals; marginal k lives in R^{dims[k]}."""

    def __init__(self, marginals):
        marginals = tuple(marginals)
        if not marginals:
            raise ValueError("at least one marginal required")
        for q in marginals:
            if not isinstance(q, DiscreteDistribution):
                raise TypeError("marginals must be DiscreteDistribution values")
        self.marginals = marginals

    @property
    def n(self):
        return len(self.marginals)

    @property
    def dims(self):
        return tuple(q.dim for q in self.marginals)

    @property
    def dim(self):
        return sum(self.dims)

    @property
    def atom_count(self):
        count = 1
        for q in self.marginals:
            count *= q.m
        return count

    def __repr__(self):
        ms = "x".join(str(q.m) for q in self.marginals)
        return f"ProductDiscreteDistribution({ms} atoms, dim={self.dim})"


def expand_product(prod, cap=DEFAULT_EXPANSION_CAP):
    """Expand a product distribution to a flat atom list.

    Atom (i_1, ..., i_n) concatenates the marginal atoms; weights multiply.
    Atoms are ordered lexicographically by marginal index (first marginal
    varies slowest), so repeated runs produce identical layouts.
    """
    total = prod.atom_count
    if total > cap:
        raise CapExceeded(f"product has {total} atoms, cap is {cap}")
    blocks = []
    weights = np.ones(1)
    left = 1
    right = total
    for q in prod.marginals:
        right //= q.m
        # repeat each atom of this marginal `right` times and tile the block `left` times
        idx = np.tile(np.repeat(np.arange(q.m), right), left)
        blocks.append(q.atoms[idx])
        weights = (weights[:, None] * q.weights[None, :]).ravel()
        left *= q.m
    atoms = np.hstack(blocks)
    weights = weights / weights.sum()
    return DiscreteDistribution(atoms, weights)


def as_discrete(reference, cap=DEFAULT_EXPANSION_CAP):
    """Flatten a (possibly product) reference distribution."""
    if isinstance(reference, ProductDiscreteDistribution):
        return expand_product(reference, cap=cap)
    return reference


class Polyhedron:
    """{xi in R^d : C xi <= f}; r = 0 rows means all of R^d."""

    def __init__(self, C, f, dim=None):
        C = np.asarray(C, dtype=float)
        f = np.asarray(f, dtype=float).ravel()
        if C.size == 0:
            if dim is None:
                raise ValueError("dim required for an unconstrained polyhedron")
            C = np.zeros((0, int(dim)))
            f = np.zeros(0)
        if C.ndim != 2:
            raise ValueError("C must be a matrix")
        if f.shape != (C.shape[0],):
            raise DimensionMismatch("f length must match row count of C")
        self.C = _frozen(C)
        self.f = _frozen(f)

    @classmethod
    def whole_space(cls, dim):
        return cls(np.zeros((0, dim)), np.zeros(0), dim=dim)

    @classmethod
    def box(cls, lo, hi):
        lo = np.asarray(lo, dtype=float).ravel()
        hi = np.asarray(hi, dtype=float).ravel()
        d = lo.size
        eye = np.eye(d)
        return cls(np.vstack([eye, -eye]), np.concatenate([hi, -lo]))

    @property
    def rows(self):
        return self.C.shape[0]

    @property
    def dim(self):
        return self.C.shape[1]

    def contains(self, points, tol=1e-9):
        if self.rows == 0:
            return np.ones(np.atleast_2d(points).shape[0], dtype=bool)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all(pts @ self.C.T <= self.f + tol, axis=1)

    def is_nonempty(self):
        if self.rows == 0:
            return True
        res = linprog(np.zeros(self.dim), A_ub=self.C, b_ub=self.f,
                      bounds=[(None, None)] * self.dim, method="highs")
        return res.status == 0

    def coordinate_bounds(self):
        """(lo, hi) per coordinate via 2d LPs; +-inf where unbounded.

        Cached: the polyhedron is immutable, and repeated compactness checks
        on a shared support would otherwise re-run the LPs.
        """
        cached = getattr(self, "_bounds_cache", None)
        if cached is not None:
            return cached
        lo = np.full(self.dim, -np.inf)
        hi = np.full(self.dim, np.inf)
        bounds = [(None, None)] * self.dim
        for i in range(self.dim):
            c = np.zeros(self.dim)
            c[i] = 1.0
            res = linprog(c, A_ub=self.C if self.rows else None,
                          b_ub=self.f if self.rows else None,
                          bounds=bounds, method="highs")
            if res.status == 0:
                lo[i] = res.fun
            res = linprog(-c, A_ub=self.C if self.rows else None,
                          b_ub=self.f if self.rows else None,
                          bounds=bounds, method="highs")
            if res.status == 0:
                hi[i] = -res.fun
        object.__setattr__(self, "_bounds_cache", (lo, hi))
        return lo, hi

    def is_bounded(self):
        lo, hi = self.coordinate_bounds()
        return bool(np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)))

    def intersect(self, other):
        if self.dim != other.dim:
            raise DimensionMismatch("polyhedra live in different dimensions")
        return Polyhedron(np.vstack([self.C, other.C]),
                          np.concatenate([self.f, other.f]), dim=self.dim)

    def __repr__(self):
        return f"Polyhedron(rows={self.rows}, dim={self.dim})"


class MthSpec:
    """Multi-transport hyperrectangle: reference distribution, budgets, structure.

    Describes the set of distributions reachable from the reference by one
    coupling whose component-k transport cost stays within budgets[k]^p.
    """

    def __init__(self, reference, budgets, structure):
        if not isinstance(structure, ComponentStructure):
            raise TypeError("structure must be a ComponentStructure")
        budgets = np.asarray(budgets, dtype=float).ravel()
        if budgets.shape != (structure.n,):
            raise DimensionMismatch("one budget per component required")
        if np.any(budgets < 0):
            raise ValueError("budgets must be nonnegative")
        if reference.dim != structure.d:
            raise DimensionMismatch(
                f"reference dim {reference.dim} != structure dim {structure.d}")
        if isinstance(reference, ProductDiscreteDistribution):
            if reference.dims != structure.dims:
                raise DimensionMismatch("product marginals must match component dims")
        self.reference = reference
        self.budgets = _frozen(budgets)
        self.structure = structure

    @property
    def n(self):
        return self.structure.n

    @property
    def dim(self):
        return self.structure.d

    def transformed_budgets(self):
        """(eps_1^p, ..., eps_n^p), the budget vector entering the dual objective."""
        return self.budgets ** self.structure.p

    def reference_discrete(self, cap=DEFAULT_EXPANSION_CAP):
        return as_discrete(self.reference, cap=cap)

    def __repr__(self):
        return (f"MthSpec(reference={self.reference!r}, "
                f"budgets={np.array2string(self.budgets)}, p={self.structure.p})")


class PwaFunction:
    """Piecewise affine h(xi) = max_j (or min_j) <alpha_j, xi> + b_j."""

    MAX = "max"
    MIN = "min"

    def __init__(self, A, b, combiner=MAX):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).ravel()
        if A.shape[0] < 1 or b.shape != (A.shape[0],):
            raise ValueError("need m >= 1 pieces with matching offsets")
        if combiner not in (self.MAX, self.MIN):
            raise ValueError("combiner must be 'max' or 'min'")
        self.A = _frozen(A)
        self.b = _frozen(b)
        self.combiner = combiner

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def dim(self):
        return self.A.shape[1]

    def __call__(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        vals = pts @ self.A.T + self.b
        out = vals.max(axis=1) if self.combiner == self.MAX else vals.min(axis=1)
        return out if np.asarray(points).ndim > 1 else float(out[0])


class QuadraticFunction:
    """Indefinite quadratic h(xi) = xi' Qmat xi + 2 q' xi."""

    def __init__(self, Qmat, q):
        Qmat = np.atleast_2d(np.asarray(Qmat, dtype=float))
        q = np.asarray(q, dtype=float).ravel()
        if Qmat.shape[0] != Qmat.shape[1] or q.shape != (Qmat.shape[0],):
            raise DimensionMismatch("Qmat must be d x d and q a d-vector")
        if np.max(np.abs(Qmat - Qmat.T), initial=0.0) > SYMMETRY_TOL:
            raise ValueError("Qmat must be symmetric")
        self.Qmat = _frozen(0.5 * (Qmat + Qmat.T))
        self.q = _frozen(q)

    @property
    def dim(self):
        return self.q.shape[0]

    def __call__(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.einsum("ij,jk,ik->i", pts, self.Qmat, pts) + 2.0 * pts @ self.q
        return out if np.asarray(points).ndim > 1 else float(out[0])


def lexicographic_index_product(sizes):
    """Deterministic lexicographic enumeration of index tuples."""
    return itertools.product(*(range(s) for s in sizes))
