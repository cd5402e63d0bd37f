"""Distributionally robust optimization over multi-transport hyperrectangles.

Compiles worst-case expectation, probability, and CVaR chance-constrained
problems with respect to componentwise optimal-transport ambiguity sets into
finite conic programs, with clustering utilities to shrink reference
distributions and brute-force oracles for verification.
"""

from .core import (ComponentStructure, DiscreteDistribution, MthSpec,
                   Polyhedron, ProductDiscreteDistribution, PwaFunction,
                   QuadraticFunction, expand_product, as_discrete,
                   norm_value, dual_norm_value, L1, L2, LINF,
                   SCHEMA_VERSION, DEFAULT_EXPANSION_CAP,
                   MthdroError, CapExceeded, DimensionMismatch, EmptySupport,
                   BalanceViolation, EmptyIntersection, EnumerationCapExceeded,
                   NormMismatch, UnboundedSupport, InfeasibleX, InfeasibleGrid,
                   UnboundedValue, SchemaError)
from .conic import (AffineScalar, AffineVector, ConicProgram, Solution,
                    dual_norm_constraint, check_solution,
                    OPTIMAL, INFEASIBLE, UNBOUNDED, NUMERICAL_FAILURE)
from .solver import SolverConfig, solve, solve_lp_transportation
from .reformulate import (ConjugateOracle, build_dual_template, build_dro_pwa,
                          build_dro_concave_max, build_dro_quadratic,
                          worst_case_expectation_pwa,
                          worst_case_expectation_quadratic)
from .uq import (PolyUnion, OpenPolyUnion, worst_case_probability,
                 worst_case_miss_probability)
from .drccp import (BilinearPwaConstraint, DrccpProblem, build_drccp,
                    solve_drccp, worst_case_cvar)
from .transport import (TransportPlan, ClusteringReport, wasserstein,
                        lloyd_quantize, cluster_reference, inflate_budgets,
                        cluster_count_for_rate,
                        DIRECT, COMPONENT_WISE, MULTI_COMPONENT)
from .oracle import GridSpec, primal_grid_value, empirical_cvar
from .experiment import ExperimentConfig, run_power_dispatch

__version__ = "0.1.0"
