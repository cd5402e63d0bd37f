"""Randomized instance generators shared by the module and acceptance tests."""

import numpy as np

from mthdro.core import (ComponentStructure, DiscreteDistribution, MthSpec,
                         Polyhedron, PwaFunction, L1, L2, LINF)

NORM_TAGS = (L1, L2, LINF)


def snap(values, step):
    """Round to the grid step so reference atoms are exactly representable."""
    return np.round(np.asarray(values, dtype=float) / step) * step


def random_pwa_instance_1d(rng, grid_points=2001, max_atoms=10, max_pieces=5,
                           alpha_scale=0.5):
    """1-D MTH + PWA objective with atoms on the oracle grid over [-1, 1]."""
    step = 2.0 / (grid_points - 1)
    M = int(rng.integers(1, max_atoms + 1))
    atoms = snap(rng.uniform(-0.9, 0.9, (M, 1)), step)
    weights = rng.dirichlet(np.ones(M))
    ref = DiscreteDistribution(atoms, weights)
    norm = rng.choice(NORM_TAGS)
    st = ComponentStructure([1], [norm], p=1)
    mth = MthSpec(ref, [float(rng.uniform(0.05, 0.6))], st)
    m = int(rng.integers(1, max_pieces + 1))
    h = PwaFunction(rng.uniform(-alpha_scale, alpha_scale, (m, 1)),
                    rng.uniform(-0.5, 0.5, m))
    support = Polyhedron.box([-1.0], [1.0])
    return mth, h, support


def random_pwa_instance_2d(rng, grid_points=200, max_atoms=4, max_pieces=5,
                           alpha_scale=0.05):
    """2-component 2-D instance with atoms on the oracle grid over [-1, 1]^2."""
    step = 2.0 / (grid_points - 1)
    M = int(rng.integers(1, max_atoms + 1))
    atoms = snap(rng.uniform(-0.9, 0.9, (M, 2)), step)
    weights = rng.dirichlet(np.ones(M))
    ref = DiscreteDistribution(atoms, weights)
    norms = [rng.choice(NORM_TAGS), rng.choice(NORM_TAGS)]
    st = ComponentStructure([1, 1], norms, p=1)
    mth = MthSpec(ref, rng.uniform(0.05, 0.4, 2), st)
    m = int(rng.integers(1, max_pieces + 1))
    h = PwaFunction(rng.uniform(-alpha_scale, alpha_scale, (m, 2)),
                    rng.uniform(-0.1, 0.1, m))
    support = Polyhedron.box([-1.0, -1.0], [1.0, 1.0])
    return mth, h, support


def random_single_ball_instance(rng, max_dim=3, max_atoms=6, max_pieces=4):
    """n = 1 instance for the classical Wasserstein-ball reduction check."""
    d = int(rng.integers(1, max_dim + 1))
    M = int(rng.integers(1, max_atoms + 1))
    atoms = rng.uniform(-1.0, 1.0, (M, d))
    weights = rng.dirichlet(np.ones(M))
    ref = DiscreteDistribution(atoms, weights)
    norm = rng.choice(NORM_TAGS)
    st = ComponentStructure([d], [norm], p=1)
    eps = float(rng.uniform(0.0, 1.0))
    mth = MthSpec(ref, [eps], st)
    m = int(rng.integers(1, max_pieces + 1))
    combiner = rng.choice([PwaFunction.MAX, PwaFunction.MIN])
    h = PwaFunction(rng.uniform(-1.0, 1.0, (m, d)),
                    rng.uniform(-1.0, 1.0, m), combiner)
    lo = rng.uniform(-3.0, -1.5, d)
    hi = rng.uniform(1.5, 3.0, d)
    support = Polyhedron.box(lo, hi)
    return mth, h, support
