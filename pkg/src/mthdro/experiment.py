"""Power-dispatch tuning experiment.

A planner buys x units of extra power ahead of time; the realized balance is
d + xi_2 - xi_1 - x (demand offset d, renewable production xi_1, consumption
xi_2) and the chance constraint asks the shortfall CVaR at level 1 - alpha to
be nonpositive.  Per Monte Carlo trial the harness draws N joint samples of
(xi_1, xi_2) from a known mixture-of-uniforms product, builds three ambiguity
models on the sample — a single 1-Wasserstein ball on the joint empirical,
a two-component hyperrectangle on the product empirical, and the same
hyperrectangle with clustered marginals — solves the robust dispatch LP per
radius on a grid, and records how often the decision satisfies the true CVaR
constraint (checked against a closed-form oracle).  The tuned radius
eps_min is the smallest grid radius reaching the target confidence.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.optimize import minimize_scalar

from .core import (ComponentStructure, DiscreteDistribution, MthdroError,
                   Polyhedron, ProductDiscreteDistribution, SCHEMA_VERSION,
                   MthSpec, L1, expand_product)
from .drccp import BilinearPwaConstraint, DrccpProblem, solve_drccp
from .transport import COMPONENT_WISE, cluster_reference

MODEL_BALL = "Ball"
MODEL_MTH = "MTH"
MODEL_MTH_CLUSTERED = "MTH-clustered"
MODELS = (MODEL_BALL, MODEL_MTH, MODEL_MTH_CLUSTERED)

FEASIBILITY_SLACK = 1e-7


def _default_eps_grid():
    fine = np.round(np.arange(0.30, 0.701, 0.02), 10)
    coarse = np.array([0.75, 0.80, 0.85, 0.90])
    return tuple(float(e) for e in np.concatenate([fine, coarse]))


@dataclass
class ExperimentConfig:
    """Parameters of the dispatch study; defaults reproduce the reference setup."""

    d_nominal: float = 4.5
    alpha: float = 0.2
    n_samples: int = 20
    trials: int = 500
    eps_grid: tuple = field(default_factory=_default_eps_grid)
    cluster_sizes: tuple = (9, 8)
    confidence: float = 0.9
    seed: int = 0
    # mixture components (weight, lo, hi) for production xi_1 and demand xi_2
    mixture_xi1: tuple = ((0.4, 11.0, 16.0), (0.6, 24.0, 27.0))
    mixture_xi2: tuple = ((0.6, 3.0, 6.0), (0.4, 10.0, 11.0))
    # fraction of the grid radius allotted to each hyperrectangle component
    budget_split: tuple = (0.5, 0.5)
    workers: int = 0  # 0 = automatic

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must lie in (0, 1)")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        grid = np.asarray(self.eps_grid, dtype=float)
        if grid.size < 1 or np.any(np.diff(grid) <= 0):
            raise ValueError("eps_grid must be strictly increasing")
        if abs(sum(self.budget_split) - 1.0) > 1e-12:
            raise ValueError("budget_split must sum to 1")


# ---------------------------------------------------------------------------
# mixture-of-uniforms oracle
# ---------------------------------------------------------------------------

def sample_mixture(components, rng, size):
    """Draw from a mixture of uniforms given as (weight, lo, hi) triples."""
    weights = np.array([c[0] for c in components])
    weights = weights / weights.sum()
    which = rng.choice(len(components), size=size, p=weights)
    lo = np.array([c[1] for c in components])[which]
    hi = np.array([c[2] for c in components])[which]
    return rng.uniform(lo, hi)


def mixture_support(components):
    return (min(c[1] for c in components), max(c[2] for c in components))


def _uniform_tail_integral(p, q, lo, hi):
    """Integral over [lo, hi] of g(u) = E[(U[p,q] - u)_+], in closed form."""
    total = 0.0
    # u <= p: g(u) = (p+q)/2 - u
    a, b = lo, min(hi, p)
    if b > a:
        total += 0.5 * (p + q) * (b - a) - 0.5 * (b * b - a * a)
    # p <= u <= q: g(u) = (q-u)^2 / (2(q-p))
    a, b = max(lo, p), min(hi, q)
    if b > a:
        total += ((q - a) ** 3 - (q - b) ** 3) / (6.0 * (q - p))
    return total


def difference_tail_expectation(plus_components, minus_components, t):
    """E[(Y - Z - t)_+] for independent mixtures Y and Z of uniforms."""
    total = 0.0
    for wy, p, q in plus_components:
        for wz, a, b in minus_components:
            # W = -Z ~ U[-b, -a]; E[(Y + W - t)_+] averages g over w in [-b, -a]
            r, s = -b, -a
            total += wy * wz * _uniform_tail_integral(p, q, t - s, t - r) / (s - r)
    return total


def true_cvar_difference(plus_components, minus_components, alpha):
    """CVaR at level 1 - alpha of Y - Z, i.e. inf_tau E[(Y-Z+tau)_+]/alpha - tau."""
    lo = (min(c[1] for c in plus_components)
          - max(c[2] for c in minus_components))
    hi = (max(c[2] for c in plus_components)
          - min(c[1] for c in minus_components))

    def objective(tau):
        return (difference_tail_expectation(plus_components, minus_components,
                                            -tau) / alpha - tau)

    res = minimize_scalar(objective, bounds=(-hi, -lo), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.fun)


def dispatch_threshold(config):
    """Smallest feasible dispatch x*: d plus the true CVaR of xi_2 - xi_1."""
    return config.d_nominal + true_cvar_difference(
        config.mixture_xi2, config.mixture_xi1, config.alpha)


# ---------------------------------------------------------------------------
# per-trial solves
# ---------------------------------------------------------------------------

def _dispatch_problem(config, support):
    # f(x, xi) = d - x + xi_2 - xi_1, a single piece with no bilinear term
    con = BilinearPwaConstraint(config.alpha, A=[np.zeros((1, 2))],
                                c=[[-1.0]], e=[config.d_nominal],
                                u=[[-1.0, 1.0]])
    return DrccpProblem(g=[1.0], X=None, constraints=[con], support=support,
                        x_lb=[0.0])


def _experiment_support(config):
    lo1, hi1 = mixture_support(config.mixture_xi1)
    lo2, hi2 = mixture_support(config.mixture_xi2)
    return Polyhedron.box([lo1, lo2], [hi1, hi2])


def _trial_references(config, seed_seq):
    """Deterministically rebuild the three per-trial reference distributions."""
    rng = np.random.default_rng(seed_seq)
    s1 = sample_mixture(config.mixture_xi1, rng, config.n_samples)
    s2 = sample_mixture(config.mixture_xi2, rng, config.n_samples)
    joint_structure = ComponentStructure([2], [L1], p=1)
    split_structure = ComponentStructure([1, 1], [L1, L1], p=1)
    ball_ref = DiscreteDistribution(np.column_stack([s1, s2]))
    prod = ProductDiscreteDistribution([DiscreteDistribution(s1[:, None]),
                                        DiscreteDistribution(s2[:, None])])
    prod_flat = expand_product(prod)
    cluster_seed = int(seed_seq.generate_state(2)[1])
    clustering = cluster_reference(prod, split_structure, COMPONENT_WISE,
                                   config.cluster_sizes, seed=cluster_seed)
    clustered_flat = expand_product(clustering.clustered)
    return {MODEL_BALL: (ball_ref, joint_structure),
            MODEL_MTH: (prod_flat, split_structure),
            MODEL_MTH_CLUSTERED: (clustered_flat, split_structure)}


def _model_spec(config, refs, name, eps):
    """Ambiguity set of one model at grid radius eps.

    The grid radius is the enclosing-ball radius of the (possibly inflated)
    hyperrectangle under the L1 product metric, so both rectangle models
    solve with the same componentwise split of eps.
    """
    ref, structure = refs[name]
    if name == MODEL_BALL:
        budgets = np.array([eps])
    else:
        budgets = np.asarray(config.budget_split, dtype=float) * eps
    return MthSpec(ref, budgets, structure)


def _solve_decision(config, refs, problem, name, eps):
    """x-hat of one model at one radius, or NaN on solver failure."""
    try:
        sol = solve_drccp(_model_spec(config, refs, name, eps), problem)
    except MthdroError:
        return np.nan
    if not sol.optimal:
        return np.nan
    return float(sol.groups["x"][0])


def run_trial(config, seed_seq, x_star):
    """One Monte Carlo trial: smallest feasible grid index per model.

    x-hat is nondecreasing in the radius (ambiguity sets are nested), so the
    first grid radius whose decision covers the true threshold x_star is
    located by bisection over the grid.  Returns ({model: index}, failures);
    index == len(grid) means no grid radius was large enough, None marks a
    solver failure that invalidates the trial for that model.
    """
    refs = _trial_references(config, seed_seq)
    support = _experiment_support(config)
    problem = _dispatch_problem(config, support)
    grid = np.asarray(config.eps_grid, dtype=float)
    thresholds = {}
    failures = 0
    for name in MODELS:
        def feasible(e_idx):
            x_hat = _solve_decision(config, refs, problem, name, grid[e_idx])
            if np.isnan(x_hat):
                raise _TrialFailure
            return x_hat >= x_star - FEASIBILITY_SLACK
        try:
            if not feasible(grid.size - 1):
                thresholds[name] = grid.size
                continue
            lo, hi = 0, grid.size - 1  # hi is feasible
            if feasible(0):
                thresholds[name] = 0
                continue
            while hi - lo > 1:  # lo infeasible, hi feasible
                mid = (lo + hi) // 2
                if feasible(mid):
                    hi = mid
                else:
                    lo = mid
            thresholds[name] = hi
        except _TrialFailure:
            thresholds[name] = None
            failures += 1
    return thresholds, failures


class _TrialFailure(Exception):
    pass


def trial_decisions(config, seed_seq, eps_by_model):
    """Decisions of one trial at chosen per-model radii (NaN on failure)."""
    refs = _trial_references(config, seed_seq)
    support = _experiment_support(config)
    problem = _dispatch_problem(config, support)
    return {name: (_solve_decision(config, refs, problem, name, eps)
                   if eps is not None else np.nan)
            for name, eps in eps_by_model.items()}


def _threshold_worker(payload):
    config, index, seed_seq, x_star = payload
    thresholds, failures = run_trial(config, seed_seq, x_star)
    return index, thresholds, failures


def _decision_worker(payload):
    config, index, seed_seq, eps_by_model = payload
    return index, trial_decisions(config, seed_seq, eps_by_model)


def resolve_workers(config):
    cap = os.environ.get("MTHDRO_THREADS")
    workers = config.workers if config.workers > 0 else (os.cpu_count() or 1)
    if cap:
        workers = min(workers, max(1, int(cap)))
    return max(1, min(workers, config.trials))


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def _solution_cdf(values):
    values = np.sort(values)
    uniq, counts = np.unique(values, return_counts=True)
    cum = np.cumsum(counts) / values.size
    return uniq.tolist(), cum.tolist()


def _map_trials(worker, payloads, workers):
    if workers == 1:
        yield from map(worker, payloads)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(worker, payloads, chunksize=1)


def run_power_dispatch(config):
    """Run the full study; returns a JSON-serializable report dict."""
    x_star = dispatch_threshold(config)
    grid = np.asarray(config.eps_grid, dtype=float)
    workers = resolve_workers(config)
    seeds = np.random.SeedSequence(config.seed).spawn(config.trials)

    # phase 1: smallest feasible grid index per (trial, model)
    thresholds = {name: np.full(config.trials, -1, dtype=float)
                  for name in MODELS}
    failures = 0
    payloads = [(config, i, seeds[i], x_star) for i in range(config.trials)]
    for index, result, fail in _map_trials(_threshold_worker, payloads, workers):
        failures += fail
        for name in MODELS:
            thresholds[name][index] = (np.nan if result[name] is None
                                       else result[name])

    models = {}
    eps_min_by_model = {}
    for name in MODELS:
        th = thresholds[name]
        ok = np.isfinite(th)
        trials_ok = int(ok.sum())
        # a trial is feasible at grid index e iff its threshold index <= e
        conf = np.array([(th[ok] <= e).mean() if trials_ok else 0.0
                         for e in range(grid.size)])
        hit = np.nonzero(conf >= config.confidence)[0]
        eps_min = float(grid[hit[0]]) if hit.size else None
        eps_min_by_model[name] = eps_min
        models[name] = {
            "confidence": conf.tolist(),
            "trials_per_eps": [trials_ok] * grid.size,
            "eps_min": eps_min,
        }

    # phase 2: decision distribution of each model at its tuned radius
    decisions = {name: np.full(config.trials, np.nan) for name in MODELS}
    payloads = [(config, i, seeds[i], eps_min_by_model)
                for i in range(config.trials)]
    for index, result in _map_trials(_decision_worker, payloads, workers):
        for name in MODELS:
            decisions[name][index] = result[name]
    for name in MODELS:
        entry = models[name]
        vals = decisions[name][np.isfinite(decisions[name])]
        if entry["eps_min"] is not None and vals.size:
            entry["mean_decision"] = float(vals.mean())
            xs, ps = _solution_cdf(vals)
            entry["cdf"] = {"x_value": xs, "cum_prob": ps}
        else:
            entry["mean_decision"] = None
            entry["cdf"] = {"x_value": [], "cum_prob": []}

    return {
        "schema_version": SCHEMA_VERSION,
        "config": asdict(config),
        "x_star": x_star,
        "eps_grid": grid.tolist(),
        "trials": config.trials,
        "solver_failures": failures,
        "models": models,
    }


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------

def report_json_bytes(report):
    return (json.dumps(report, sort_keys=True, indent=2) + "\n").encode("utf-8")


def confidence_csv_bytes(report):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "epsilon", "confidence", "trials"])
    for name in MODELS:
        entry = report["models"][name]
        for eps, conf, t in zip(report["eps_grid"], entry["confidence"],
                                entry["trials_per_eps"]):
            writer.writerow([name, repr(float(eps)), repr(float(conf)), t])
    return buf.getvalue().encode("utf-8")


def cdf_csv_bytes(report):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "x_value", "cum_prob"])
    for name in MODELS:
        cdf = report["models"][name]["cdf"]
        for x, pcum in zip(cdf["x_value"], cdf["cum_prob"]):
            writer.writerow([name, repr(float(x)), repr(float(pcum))])
    return buf.getvalue().encode("utf-8")
