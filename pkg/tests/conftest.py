"""Shared test fixtures and solve instrumentation.

Every Optimal solve performed anywhere in the suite is re-checked by the
independent constraint-residual checker at 1e-6; a violation fails the test
that triggered it.  The acceptance suite reads the counters to report how
many solves were audited.
"""

import numpy as np
import pytest

import mthdro.solver as solver_mod
import mthdro.reformulate as reformulate_mod
import mthdro.uq as uq_mod
import mthdro.drccp as drccp_mod
import mthdro.cli as cli_mod
from mthdro.conic import check_solution

RESIDUAL_TOL = 1e-6
SOLVE_AUDIT = {"checked": 0, "worst": 0.0}

_real_solve = solver_mod.solve

ACCEPTANCE_LINES = []


def _audited_solve(program, config=None):
    sol = _real_solve(program, config)
    if sol.optimal:
        viol = check_solution(program, sol.x)
        SOLVE_AUDIT["checked"] += 1
        SOLVE_AUDIT["worst"] = max(SOLVE_AUDIT["worst"], viol)
        if viol > RESIDUAL_TOL:
            raise AssertionError(
                f"optimal solve violates constraints by {viol:.3e} "
                f"(> {RESIDUAL_TOL})")
    return sol


def pytest_configure(config):
    # modules bind `solve` by name at import time; patch every binding
    for mod in (solver_mod, reformulate_mod, uq_mod, drccp_mod, cli_mod):
        mod.solve = _audited_solve


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
