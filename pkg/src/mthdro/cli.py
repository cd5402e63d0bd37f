"""Command-line surface: problem-file solving, clustering, and the experiment.

Subcommands: solve (worst-case expectation), uq (worst-case probability),
drccp (robust chance-constrained program), cluster (sample CSV -> clustered
distribution), experiment (power-dispatch study), oracle (grid-primal
debugging oracle).  Problem files are JSON; schema violations are reported
with JSON-pointer paths.  Exit codes: 0 Optimal, 2 Infeasible, 3 Unbounded,
1 any other error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time

import numpy as np

from .core import (ComponentStructure, DiscreteDistribution, MthdroError,
                   MthSpec, Polyhedron, ProductDiscreteDistribution,
                   PwaFunction, QuadraticFunction, SchemaError,
                   DEFAULT_EXPANSION_CAP, SCHEMA_VERSION)
from .conic import INFEASIBLE, UNBOUNDED
from .solver import solve
from .reformulate import (build_dro_pwa, build_dro_quadratic)
from .uq import (OpenPolyUnion, PolyUnion, worst_case_miss_probability,
                 worst_case_probability)
from .drccp import BilinearPwaConstraint, DrccpProblem, build_drccp
from .transport import (COMPONENT_WISE, DIRECT, MULTI_COMPONENT,
                        cluster_reference, inflate_budgets)
from .oracle import GridSpec, primal_grid_value
from . import experiment as exp

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2
EXIT_UNBOUNDED = 3


# ---------------------------------------------------------------------------
# schema helpers (JSON-pointer error reporting)
# ---------------------------------------------------------------------------

def _require(obj, key, pointer):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"{pointer}/{key}: required field missing")
    return obj[key]


def _as_matrix(value, pointer):
    try:
        mat = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError(f"{pointer}: expected a numeric matrix")
    if mat.ndim != 2:
        raise SchemaError(f"{pointer}: expected a 2-D array")
    return mat


def _as_vector(value, pointer):
    try:
        vec = np.asarray(value, dtype=float).ravel()
    except (TypeError, ValueError):
        raise SchemaError(f"{pointer}: expected a numeric vector")
    return vec


def parse_distribution(obj, pointer):
    if isinstance(obj, dict) and "marginals" in obj:
        margs = obj["marginals"]
        if not isinstance(margs, list) or not margs:
            raise SchemaError(f"{pointer}/marginals: expected a nonempty list")
        return ProductDiscreteDistribution(
            [parse_distribution(m, f"{pointer}/marginals/{i}")
             for i, m in enumerate(margs)])
    atoms = _as_matrix(_require(obj, "atoms", pointer), f"{pointer}/atoms")
    weights = None
    if isinstance(obj, dict) and obj.get("weights") is not None:
        weights = _as_vector(obj["weights"], f"{pointer}/weights")
    try:
        return DiscreteDistribution(atoms, weights)
    except (ValueError, MthdroError) as err:
        raise SchemaError(f"{pointer}: {err}")


def parse_structure(obj, pointer, p_override=None, norms_override=None):
    dims = _require(obj, "dims", pointer)
    norms = norms_override or _require(obj, "norms", pointer)
    p = p_override or obj.get("p", 1)
    try:
        return ComponentStructure(dims, norms, p=int(p))
    except (ValueError, TypeError) as err:
        raise SchemaError(f"{pointer}: {err}")


def parse_polyhedron(obj, pointer, dim=None):
    if obj is None:
        if dim is None:
            raise SchemaError(f"{pointer}: support required")
        return Polyhedron.whole_space(dim)
    C = _as_matrix(_require(obj, "C", pointer), f"{pointer}/C")
    f = _as_vector(_require(obj, "f", pointer), f"{pointer}/f")
    try:
        return Polyhedron(C, f, dim=dim)
    except (ValueError, MthdroError) as err:
        raise SchemaError(f"{pointer}: {err}")


def parse_mth(doc, args, pointer=""):
    reference = parse_distribution(_require(doc, "reference", pointer),
                                   f"{pointer}/reference")
    structure = parse_structure(_require(doc, "structure", pointer),
                                f"{pointer}/structure",
                                p_override=args.p, norms_override=args.norms)
    budgets = args.budgets if args.budgets is not None \
        else _require(doc, "budgets", pointer)
    budgets = _as_vector(budgets, f"{pointer}/budgets")
    try:
        return MthSpec(reference, budgets, structure)
    except (ValueError, MthdroError) as err:
        raise SchemaError(f"{pointer}: {err}")


def parse_objective(obj, pointer):
    kind = _require(obj, "type", pointer)
    if kind == "pwa":
        A = _as_matrix(_require(obj, "A", pointer), f"{pointer}/A")
        b = _as_vector(_require(obj, "b", pointer), f"{pointer}/b")
        combiner = obj.get("combiner", "max")
        if combiner not in ("max", "min"):
            raise SchemaError(f"{pointer}/combiner: must be 'max' or 'min'")
        return PwaFunction(A, b, combiner)
    if kind == "quadratic":
        Qmat = _as_matrix(_require(obj, "Qmat", pointer), f"{pointer}/Qmat")
        q = _as_vector(_require(obj, "q", pointer), f"{pointer}/q")
        try:
            return QuadraticFunction(Qmat, q)
        except (ValueError, MthdroError) as err:
            raise SchemaError(f"{pointer}: {err}")
    raise SchemaError(f"{pointer}/type: unknown objective type {kind!r}")


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _emit(result, args):
    out = args.out
    if args.format == "csv":
        lines = ["key,value"]
        for key in sorted(result):
            val = result[key]
            if isinstance(val, (dict, list)):
                val = json.dumps(val, sort_keys=True)
            lines.append(f"{key},{val}")
        payload = "\n".join(lines) + "\n"
    else:
        payload = json.dumps(result, sort_keys=True, indent=2) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)


def _result(value, solution, program, elapsed):
    groups = {}
    if solution is not None and solution.x is not None:
        groups = {name: vals.tolist()
                  for name, vals in solution.groups.items()}
    return {
        "schema_version": SCHEMA_VERSION,
        "value": value,
        "status": solution.status if solution is not None else "Optimal",
        "variables": groups,
        "wall_time_seconds": elapsed,
        "program_dimensions": program.dimensions() if program is not None else {},
    }


def _status_exit(status):
    if status == INFEASIBLE:
        return EXIT_INFEASIBLE
    if status == UNBOUNDED:
        return EXIT_UNBOUNDED
    return EXIT_OK


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as err:
        raise SchemaError(f"/: invalid JSON ({err})")
    except OSError as err:
        raise MthdroError(str(err))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_solve(args):
    doc = _load_json(args.problem)
    mth = parse_mth(doc, args)
    objective = parse_objective(_require(doc, "objective", ""), "/objective")
    start = time.perf_counter()
    if isinstance(objective, QuadraticFunction):
        program = build_dro_quadratic(mth, objective, cap=args.cap)
    else:
        support = parse_polyhedron(doc.get("support"), "/support", dim=mth.dim)
        program = build_dro_pwa(mth, objective, support, cap=args.cap)
    solution = solve(program)
    elapsed = time.perf_counter() - start
    value = solution.value if np.isfinite(solution.value) else None
    _emit(_result(value, solution, program, elapsed), args)
    return _status_exit(solution.status)


def cmd_uq(args):
    doc = _load_json(args.problem)
    mth = parse_mth(doc, args)
    support = parse_polyhedron(doc.get("support"), "/support", dim=mth.dim)
    start = time.perf_counter()
    if "open_pieces" in doc:
        pieces = []
        for j, piece in enumerate(doc["open_pieces"]):
            A = _as_matrix(_require(piece, "A", f"/open_pieces/{j}"),
                           f"/open_pieces/{j}/A")
            b = _as_vector(_require(piece, "b", f"/open_pieces/{j}"),
                           f"/open_pieces/{j}/b")
            pieces.append((A, b))
        union = OpenPolyUnion(pieces, support)
        value, solution = worst_case_miss_probability(mth, union, cap=args.cap)
    else:
        raw = _require(doc, "pieces", "")
        pieces = [parse_polyhedron(p, f"/pieces/{j}", dim=mth.dim)
                  for j, p in enumerate(raw)]
        union = PolyUnion(pieces, support, drop_empty=args.drop_empty)
        value, solution = worst_case_probability(mth, union, cap=args.cap)
    elapsed = time.perf_counter() - start
    _emit(_result(value, solution, None, elapsed), args)
    return _status_exit(solution.status)


def cmd_drccp(args):
    doc = _load_json(args.problem)
    mth = parse_mth(doc, args)
    support = parse_polyhedron(doc.get("support"), "/support", dim=mth.dim)
    g = _as_vector(_require(doc, "g", ""), "/g")
    X = parse_polyhedron(doc["X"], "/X", dim=g.size) if doc.get("X") else None
    x_lb = _as_vector(doc["x_lb"], "/x_lb") if doc.get("x_lb") is not None else None
    x_ub = _as_vector(doc["x_ub"], "/x_ub") if doc.get("x_ub") is not None else None
    constraints = []
    for i, raw in enumerate(_require(doc, "constraints", "")):
        ptr = f"/constraints/{i}"
        alpha = _require(raw, "alpha", ptr)
        A = [_as_matrix(a, f"{ptr}/A/{j}")
             for j, a in enumerate(_require(raw, "A", ptr))]
        c = [_as_vector(ci, f"{ptr}/c/{j}")
             for j, ci in enumerate(_require(raw, "c", ptr))]
        e = _as_vector(_require(raw, "e", ptr), f"{ptr}/e")
        u = None
        if raw.get("u") is not None:
            u = [_as_vector(ui, f"{ptr}/u/{j}")
                 for j, ui in enumerate(raw["u"])]
        try:
            constraints.append(BilinearPwaConstraint(alpha, A, c, e, u=u))
        except (ValueError, TypeError) as err:
            raise SchemaError(f"{ptr}: {err}")
    try:
        problem = DrccpProblem(g, X, constraints, support, x_lb=x_lb, x_ub=x_ub)
    except ValueError as err:
        raise SchemaError(f"/: {err}")
    start = time.perf_counter()
    program = build_drccp(mth, problem, cap=args.cap)
    solution = solve(program)
    elapsed = time.perf_counter() - start
    value = solution.value if np.isfinite(solution.value) else None
    _emit(_result(value, solution, program, elapsed), args)
    return _status_exit(solution.status)


def cmd_cluster(args):
    with open(args.samples, "r", encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    try:
        points = np.array([[float(v) for v in row] for row in rows])
    except ValueError:
        # tolerate a header line
        points = np.array([[float(v) for v in row] for row in rows[1:]])
    dims = [int(v) for v in args.dims.split(",")]
    norms = args.norms.split(",") if args.norms else ["L2"] * len(dims)
    structure = ComponentStructure(dims, norms, p=args.p or 1)
    if points.shape[1] != structure.d:
        raise SchemaError("/samples: column count does not match dims")
    marginals = [DiscreteDistribution(points[:, structure.slice_of(k)])
                 for k in range(structure.n)]
    prod = ProductDiscreteDistribution(marginals)
    K = [int(v) for v in args.k.split(",")]
    strategy = {"direct": DIRECT, "componentwise": COMPONENT_WISE,
                "multicomponent": MULTI_COMPONENT}[args.strategy]
    groups = None
    if args.groups:
        groups = [tuple(int(i) for i in g.split("+"))
                  for g in args.groups.split(",")]
    if strategy == DIRECT:
        K = K[0]
    report = cluster_reference(prod, structure, strategy, K, seed=args.seed,
                               groups=groups, cap=args.cap)
    clustered = report.clustered
    if isinstance(clustered, ProductDiscreteDistribution):
        dist_json = {"marginals": [{"atoms": m.atoms.tolist(),
                                    "weights": m.weights.tolist()}
                                   for m in clustered.marginals]}
    else:
        dist_json = {"atoms": clustered.atoms.tolist(),
                     "weights": clustered.weights.tolist()}
    result = {
        "schema_version": SCHEMA_VERSION,
        "strategy": report.strategy,
        "clustered": dist_json,
        "inflation": report.inflation.tolist(),
        "inflated_budgets": inflate_budgets(args.budgets, report).tolist()
        if args.budgets is not None else None,
    }
    _emit(result, args)
    return EXIT_OK


def cmd_experiment(args):
    kwargs = {}
    if args.trials is not None:
        kwargs["trials"] = args.trials
    if args.seed is not None:
        kwargs["seed"] = args.seed
    if args.workers is not None:
        kwargs["workers"] = args.workers
    if args.eps_grid:
        kwargs["eps_grid"] = tuple(float(v) for v in args.eps_grid.split(","))
    config = exp.ExperimentConfig(**kwargs)
    report = exp.run_power_dispatch(config)
    out = args.out or "dispatch_report.json"
    with open(out, "wb") as fh:
        fh.write(exp.report_json_bytes(report))
    stem = out[:-5] if out.endswith(".json") else out
    with open(stem + "_confidence.csv", "wb") as fh:
        fh.write(exp.confidence_csv_bytes(report))
    with open(stem + "_cdf.csv", "wb") as fh:
        fh.write(exp.cdf_csv_bytes(report))
    summary = {name: report["models"][name]["eps_min"]
               for name in exp.MODELS}
    sys.stdout.write(json.dumps({"eps_min": summary, "report": out},
                                sort_keys=True) + "\n")
    return EXIT_OK


def cmd_oracle(args):
    doc = _load_json(args.problem)
    mth = parse_mth(doc, args)
    objective = parse_objective(_require(doc, "objective", ""), "/objective")
    support = parse_polyhedron(doc.get("support"), "/support", dim=mth.dim)
    axes = [(a[0], a[1], int(a[2]))
            for a in _require(doc, "grid", "")]
    start = time.perf_counter()
    value = primal_grid_value(mth, objective, GridSpec(axes), support=support)
    elapsed = time.perf_counter() - start
    _emit({"schema_version": SCHEMA_VERSION, "value": value,
           "status": "Optimal", "wall_time_seconds": elapsed}, args)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(sub):
    sub.add_argument("--out", default=None, help="output file (default stdout)")
    sub.add_argument("--format", choices=["json", "csv"], default="json")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--cap", type=int, default=DEFAULT_EXPANSION_CAP)


def _add_problem_flags(sub):
    sub.add_argument("--p", type=int, default=None,
                     help="override the transport exponent")
    sub.add_argument("--norms", default=None, nargs="+",
                     help="override per-component norm tags")
    sub.add_argument("--budgets", type=float, default=None, nargs="+",
                     help="override the budget vector")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mthdro",
        description="Distributionally robust optimization over "
                    "multi-transport hyperrectangles")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("solve", help="worst-case expectation")
    p.add_argument("problem")
    _add_problem_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_solve)

    p = subs.add_parser("uq", help="worst-case probability")
    p.add_argument("problem")
    p.add_argument("--drop-empty", action="store_true",
                   help="silently drop pieces that miss the support")
    _add_problem_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_uq)

    p = subs.add_parser("drccp", help="robust chance-constrained program")
    p.add_argument("problem")
    _add_problem_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_drccp)

    p = subs.add_parser("cluster", help="cluster a sample CSV")
    p.add_argument("samples")
    p.add_argument("--strategy", default="componentwise",
                   choices=["direct", "componentwise", "multicomponent"])
    p.add_argument("--k", required=True,
                   help="cluster counts, comma-separated")
    p.add_argument("--dims", required=True,
                   help="component dimensions, comma-separated")
    p.add_argument("--norms", default=None,
                   help="norm tags, comma-separated")
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--groups", default=None,
                   help="component groups like 0+1,2 (multicomponent)")
    p.add_argument("--budgets", type=float, default=None, nargs="+")
    _add_common(p)
    p.set_defaults(func=cmd_cluster)

    p = subs.add_parser("experiment", help="power-dispatch study")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--eps-grid", default=None,
                   help="radius grid, comma-separated")
    _add_common(p)
    p.set_defaults(func=cmd_experiment)

    p = subs.add_parser("oracle", help="grid-primal verification oracle")
    p.add_argument("problem")
    _add_problem_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as err:
        sys.stderr.write(f"schema error: {err}\n")
        return EXIT_ERROR
    except MthdroError as err:
        sys.stderr.write(f"error: {err}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
