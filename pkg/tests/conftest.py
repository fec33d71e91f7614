"""Shared reference runs, computed once per session.

Each fixture returns (ingredients..., solution, wall_seconds) so the
acceptance tests can gate both values and runtimes without re-solving.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from bilinoc import problems
from bilinoc.ensemble import EnsembleConfig, ensemble_solve
from bilinoc.model import BilinearSystem, BoundaryConditions, QuadraticCost, TimeGrid
from bilinoc.solver import SolverConfig, solve


@pytest.fixture(scope="session")
def population_run():
    sys_, cost, bc = problems.population()
    t0 = time.perf_counter()
    sol = solve(
        sys_, cost, bc,
        SolverConfig(n_t=2000, tol_terminal=1e-6, tol_iterate=1e-7, max_iter=50),
    )
    return sys_, cost, bc, sol, time.perf_counter() - t0


@pytest.fixture(scope="session")
def bloch_run():
    sys_, cost, bc = problems.bloch(omega=0.5)
    grid = TimeGrid(cost.tf, 2000)
    t0 = time.perf_counter()
    sol = solve(
        sys_, cost, bc,
        SolverConfig(n_t=2000, tol_terminal=1e-5, tol_iterate=1e-7, max_iter=40),
        x_init=problems.great_circle_path(grid),
    )
    return sys_, cost, bc, sol, time.perf_counter() - t0


@pytest.fixture(scope="session")
def harmonic_run():
    sys_ = BilinearSystem(
        A=np.array([[0.0, -1.0], [1.0, 0.0]]),
        B=np.array([[0.0], [1.0]]),
        N=np.zeros((2, 2, 1)),
    )
    cost = QuadraticCost(Q=np.zeros((2, 2)), R=np.eye(1), tf=2.0)
    bc = BoundaryConditions(x0=np.zeros(2), xf=np.array([1.0, 0.0]))
    t0 = time.perf_counter()
    sol = solve(
        sys_, cost, bc,
        SolverConfig(n_t=2000, tol_terminal=1e-6, tol_iterate=1e-9, max_iter=5),
    )
    return sys_, cost, bc, sol, time.perf_counter() - t0


@pytest.fixture(scope="session")
def ensemble_run():
    prob = problems.bloch_ensemble(omega_range=(-1.0, 1.0), tf=10.0)
    pgrid = problems.bloch_ensemble_grid(n_beta=21, n_eval=141)
    config = EnsembleConfig(
        n_t=2048, n_t_ctrl=256, tol_terminal=1e-2, max_iter=300, update="frozen"
    )
    gc = problems.great_circle_path(TimeGrid(prob.cost.tf, config.n_t))
    x_init = np.broadcast_to(gc, (pgrid.n_beta,) + gc.shape).copy()
    t0 = time.perf_counter()
    sol = ensemble_solve(prob, pgrid, config, x_init=x_init)
    return prob, pgrid, config, sol, time.perf_counter() - t0
