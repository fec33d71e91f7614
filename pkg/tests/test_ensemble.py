"""Ensemble synthesis: operator scalings, SVD expansion, reference runs.

Protocol notes for the grid-consistency test: the stopping tolerance and
expansion threshold interact with the sample count, so both runs use
tol_terminal = 3e-3 with eps = 1e-3.  At the bundled desk-scale settings
the control energy moves by under 15% between 21 and 41 design samples
(measured 8.2%); the looser default eps = tol/2 does not converge at
n_beta = 41 at all, which is why eps is pinned here.
"""

from __future__ import annotations

import numpy as np
import pytest

from bilinoc.ensemble import (
    EnsembleConfig,
    EnsembleProblem,
    ParameterGrid,
    assemble_L,
    controllability_diagnostics,
    ensemble_solve,
    freeze_ensemble,
    propagate_ensemble,
    sample_parameters,
    svd_synthesize,
)
from bilinoc.errors import BadSpec, TargetNotReachable
from bilinoc.model import BilinearSystem, BoundaryConditions, QuadraticCost, TimeGrid
from bilinoc.oracle import gramian_min_energy
from bilinoc.solver import SolverConfig, solve
from bilinoc import problems


# ── parameter grids ───────────────────────────────────────────────────────────


def test_trapezoid_weights_and_measure():
    pg = sample_parameters((-1.0, 1.0), 3)
    assert np.abs(pg.samples[:, 0] - np.array([-1.0, 0.0, 1.0])).max() == 0.0
    assert np.abs(pg.weights - np.array([0.5, 1.0, 0.5])).max() == 0.0
    assert pg.measure == 2.0


def test_tensor_product_measure_exact():
    pg = sample_parameters([(-1.0, 1.0), (0.0, 2.0)], [5, 4])
    assert pg.d == 2 and pg.n_beta == 20
    assert abs(pg.weights.sum() - 4.0) <= 1e-14


def test_eval_grid_attached():
    pg = sample_parameters((-1.0, 1.0), 5, eval_counts=31)
    assert pg.eval_samples.shape == (31, 1)
    assert pg.eval_samples[0, 0] == -1.0 and pg.eval_samples[-1, 0] == 1.0


def test_grid_validation():
    with pytest.raises(BadSpec):
        sample_parameters((-1.0, 1.0), 1)
    with pytest.raises(BadSpec):
        sample_parameters((1.0, -1.0), 5)
    with pytest.raises(BadSpec):
        ParameterGrid(samples=np.zeros((2, 1)), weights=np.array([1.0, 0.0]))


def test_config_validation():
    with pytest.raises(BadSpec):
        EnsembleConfig(n_t=1000, n_t_ctrl=256)
    with pytest.raises(BadSpec):
        EnsembleConfig(update="midpoint")
    with pytest.raises(BadSpec):
        EnsembleConfig(terminal_norm="l1")
    assert EnsembleConfig(tol_terminal=1e-2).eps_value == 5e-3


# ── operator assembly ─────────────────────────────────────────────────────────


def _two_sample_family(rng):
    R = np.array([[2.0, 0.3], [0.3, 1.0]])
    Ab = rng.normal(size=(3, 3)) * 0.3
    Bb = rng.normal(size=(3, 2))
    Nb = rng.normal(size=(3, 3, 2)) * 0.2
    prob = EnsembleProblem(
        system_of=lambda b: BilinearSystem(A=Ab * (1.0 + 0.5 * float(b[0])), B=Bb, N=Nb),
        cost=QuadraticCost(Q=np.zeros((3, 3)), R=R, tf=1.5),
        x0_of=lambda b: np.array([1.0, 0.0, 0.0]),
        xf_of=lambda b: np.array([0.0, 1.0, 0.5 * float(b[0])]),
    )
    return prob, sample_parameters((-1.0, 1.0), 2)


def test_scaled_norms_realize_weighted_integrals():
    # ||u_scaled||^2 must equal the R-weighted control energy of the knots
    rng = np.random.default_rng(4)
    prob, pg = _two_sample_family(rng)
    X = rng.normal(size=(2, 513, 3)) * 0.5
    frozen = freeze_ensemble(prob, X, None, pg)
    ctrl = TimeGrid(1.5, 64)
    L, xi = assemble_L(frozen, prob, pg, ctrl)
    u = rng.normal(size=(64, 2))
    Rhalf = np.linalg.inv(L.Rhalf_inv)
    u_s = ((u @ Rhalf) * np.sqrt(ctrl.dt)).ravel()
    energy = ctrl.dt * np.einsum("km,ms,ks->", u, prob.cost.R, u)
    assert abs(u_s @ u_s - energy) <= 1e-12 * max(1.0, energy)


def test_L_times_Lt_reproduces_gramian():
    # single sample, N = 0, constant A: L L' is the midpoint-rule Gramian
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    prob = EnsembleProblem(
        system_of=lambda b: BilinearSystem(A=A, B=B, N=np.zeros((2, 2, 1))),
        cost=QuadraticCost(Q=np.zeros((2, 2)), R=np.eye(1), tf=1.0),
        x0_of=lambda b: np.zeros(2),
        xf_of=lambda b: np.array([1.0, 0.0]),
    )
    pg = ParameterGrid(samples=np.zeros((1, 1)), weights=np.ones(1))
    X = np.zeros((1, 4097, 2))
    frozen = freeze_ensemble(prob, X, None, pg)
    L, _ = assemble_L(frozen, prob, pg, TimeGrid(1.0, 4096))
    W_exact = np.array([[1.0 / 3.0, -0.5], [-0.5, 1.0]])
    assert np.abs(L.matrix @ L.matrix.T - W_exact).max() <= 1e-8


def test_xi_zero_when_endpoints_match_and_drift_free():
    prob = EnsembleProblem(
        system_of=lambda b: BilinearSystem(
            A=np.zeros((2, 2)), B=np.eye(2), N=np.zeros((2, 2, 2))
        ),
        cost=QuadraticCost(Q=np.zeros((2, 2)), R=np.eye(2), tf=1.0),
        x0_of=lambda b: np.array([0.3, -0.7]),
        xf_of=lambda b: np.array([0.3, -0.7]),
    )
    pg = sample_parameters((-1.0, 1.0), 3)
    X = np.broadcast_to(np.array([0.3, -0.7]), (3, 129, 2)).copy()
    frozen = freeze_ensemble(prob, X, None, pg)
    _, xi = assemble_L(frozen, prob, pg, TimeGrid(1.0, 32))
    assert np.abs(xi).max() == 0.0


# ── SVD synthesis ─────────────────────────────────────────────────────────────


def test_truncation_residual_bounded_by_next_sigma():
    rng = np.random.default_rng(17)
    prob, pg = _two_sample_family(rng)
    X = rng.normal(size=(2, 513, 3)) * 0.5
    frozen = freeze_ensemble(prob, X, None, pg)
    L, xi = assemble_L(frozen, prob, pg, TimeGrid(1.5, 64))
    svd, _ = svd_synthesize(L, xi, eps=1e-12)
    assert np.all(np.diff(svd.residual_history) <= 1e-12)
    for Ncut in (1, 2, 4):
        bound = svd.sigma[Ncut] if Ncut < svd.sigma.size else 0.0
        # ||xi - L u_N|| <= sigma_{N+1} ||eta|| can be probed directly on
        # the residual history since xi has unit-bounded expansion data
        MN = (svd.U[:, :Ncut] * svd.sigma[:Ncut]) @ svd.Vt[:Ncut]
        v = rng.normal(size=L.matrix.shape[1])
        v /= np.linalg.norm(v)
        assert np.linalg.norm((L.matrix - MN) @ v) <= bound + 1e-12


def test_min_norm_solution_matches_dual_ridge():
    rng = np.random.default_rng(23)
    prob, pg = _two_sample_family(rng)
    X = rng.normal(size=(2, 513, 3)) * 0.5
    frozen = freeze_ensemble(prob, X, None, pg)
    L, xi = assemble_L(frozen, prob, pg, TimeGrid(1.5, 64))
    svd, _ = svd_synthesize(L, xi, eps=1e-12)
    M = L.matrix
    u_full = svd.Vt[: svd.rank_cap].T @ (
        (svd.U[:, : svd.rank_cap].T @ xi) / svd.sigma[: svd.rank_cap]
    )
    lam = 1e-12 * float(svd.sigma[0]) ** 2
    u_ridge = M.T @ np.linalg.solve(M @ M.T + lam * np.eye(M.shape[0]), xi)
    assert np.abs(u_full - u_ridge).max() <= 1e-6 * max(1.0, np.abs(u_full).max())


def test_unreachable_target_raises():
    # two drift-free scalar copies sharing one control cannot reach
    # opposite-signed targets: the operator rows are identical
    sys_ = BilinearSystem(A=np.zeros((1, 1)), B=np.ones((1, 1)), N=np.zeros((1, 1, 1)))
    prob = EnsembleProblem(
        system_of=lambda b: sys_,
        cost=QuadraticCost(Q=np.zeros((1, 1)), R=np.eye(1), tf=1.0),
        x0_of=lambda b: np.zeros(1),
        xf_of=lambda b: np.array([1.0 if b[0] > 0 else -1.0]),
    )
    pg = sample_parameters((-1.0, 1.0), 2)
    X = np.zeros((2, 257, 1))
    frozen = freeze_ensemble(prob, X, None, pg)
    L, xi = assemble_L(frozen, prob, pg, TimeGrid(1.0, 64))
    with pytest.raises(TargetNotReachable):
        svd_synthesize(L, xi, eps=1e-3)


def test_diagnostics_clean_for_reachable_target():
    sys_ = BilinearSystem(A=np.zeros((1, 1)), B=np.ones((1, 1)), N=np.zeros((1, 1, 1)))
    prob = EnsembleProblem(
        system_of=lambda b: sys_,
        cost=QuadraticCost(Q=np.zeros((1, 1)), R=np.eye(1), tf=1.0),
        x0_of=lambda b: np.zeros(1),
        xf_of=lambda b: np.ones(1),
    )
    pg = sample_parameters((-1.0, 1.0), 2)
    X = np.zeros((2, 257, 1))
    frozen = freeze_ensemble(prob, X, None, pg)
    L, xi = assemble_L(frozen, prob, pg, TimeGrid(1.0, 64))
    svd, _ = svd_synthesize(L, xi, eps=1e-6)
    diag = controllability_diagnostics(svd, xi)
    assert not diag["flagged"]
    assert diag["rel_out_of_range"] <= 1e-12


def test_embedded_control_defect_within_first_order_knot_error():
    # re-evaluating a K-knot synthesis under the 2K-knot operator moves the
    # defect by no more than O(dt) of the target norm
    prob = problems.bloch_ensemble()
    pg = problems.bloch_ensemble_grid(5, 11)
    gc = problems.great_circle_path(TimeGrid(10.0, 1024))
    X = np.broadcast_to(gc, (5,) + gc.shape).copy()
    frozen = freeze_ensemble(prob, X, None, pg)
    K = 64
    Lk, xik = assemble_L(frozen, prob, pg, TimeGrid(10.0, K))
    svdk, uk = svd_synthesize(Lk, xik, eps=1e-10)
    r_k = float(svdk.residual_history[svdk.N_eps])
    L2, xi2 = assemble_L(frozen, prob, pg, TimeGrid(10.0, 2 * K))
    u2 = np.repeat(uk, 2, axis=0)
    Rhalf = np.linalg.inv(L2.Rhalf_inv)
    u2s = ((u2 @ Rhalf) * np.sqrt(L2.ctrl_grid.dt)).ravel()
    r_embed = float(np.linalg.norm(L2.matrix @ u2s - xi2))
    dt_k = 10.0 / K
    assert abs(r_embed - r_k) <= dt_k * np.linalg.norm(xik)


# ── degenerations and reference runs ──────────────────────────────────────────


def test_single_sample_equals_single_system_loop():
    sys_ = BilinearSystem(A=np.zeros((1, 1)), B=np.ones((1, 1)), N=np.zeros((1, 1, 1)))
    cost = QuadraticCost(Q=np.zeros((1, 1)), R=np.eye(1), tf=1.0)
    prob = EnsembleProblem(
        system_of=lambda b: sys_, cost=cost,
        x0_of=lambda b: np.zeros(1), xf_of=lambda b: np.ones(1),
    )
    pg = ParameterGrid(samples=np.zeros((1, 1)), weights=np.ones(1))
    for update in ("bilinear", "frozen"):
        sol_e = ensemble_solve(
            prob, pg,
            EnsembleConfig(n_t=1024, n_t_ctrl=128, tol_terminal=1e-10, max_iter=5, update=update),
        )
        sol_s = solve(
            sys_, cost, BoundaryConditions(x0=np.zeros(1), xf=np.ones(1)),
            SolverConfig(n_t=1024, tol_terminal=1e-10, tol_iterate=1e-12),
        )
        assert sol_e.iterations == 1
        assert np.abs(sol_e.Xpaths[0] - sol_s.xpath).max() <= 1e-8


def test_linear_ensemble_matches_gramian_knots():
    # one harmonic-oscillator sample: the synthesized knots agree with the
    # Gramian control sampled at knot midpoints
    A = np.array([[0.0, -1.0], [1.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    prob = EnsembleProblem(
        system_of=lambda b: BilinearSystem(A=A, B=B, N=np.zeros((2, 2, 1))),
        cost=QuadraticCost(Q=np.zeros((2, 2)), R=np.eye(1), tf=2.0),
        x0_of=lambda b: np.zeros(2),
        xf_of=lambda b: np.array([1.0, 0.0]),
    )
    pg = ParameterGrid(samples=np.zeros((1, 1)), weights=np.ones(1))
    n_t, K = 4096, 2048
    sol = ensemble_solve(
        prob, pg, EnsembleConfig(n_t=n_t, n_t_ctrl=K, tol_terminal=1e-7, eps=1e-9, max_iter=10)
    )
    grid = TimeGrid(2.0, n_t)
    Ap = np.broadcast_to(A, (n_t + 1, 2, 2)).copy()
    Bp = np.broadcast_to(B, (n_t + 1, 2, 1)).copy()
    u_g, _, _ = gramian_min_energy(
        Ap, Bp, np.eye(1), BoundaryConditions(x0=np.zeros(2), xf=np.array([1.0, 0.0])), grid
    )
    r = n_t // K
    u_mid = 0.5 * (u_g[:-1:r] + u_g[r::r])
    assert sol.iterations == 1
    assert np.abs(sol.upath - u_mid).max() <= 1e-6


def test_bloch_ensemble_reference_run(ensemble_run):
    prob, pgrid, config, sol, _ = ensemble_run
    assert sol.converged
    assert sol.iterations <= 300
    assert sol.weighted_terminal <= 1e-2
    assert abs(sol.records[-1].energy - 12.292865286244496) <= 1e-3
    # terminal errors are measured on the true bilinear propagation
    prop = propagate_ensemble(prob, pgrid, sol.upath, sol.ctrl_grid, config.n_t)
    assert abs(prop.weighted_terminal - sol.weighted_terminal) <= 1e-12


def test_bloch_ensemble_energy_grid_consistency():
    prob = problems.bloch_ensemble()
    energies, its = {}, {}
    for n_beta in (21, 41):
        pgrid = problems.bloch_ensemble_grid(n_beta=n_beta, n_eval=None)
        config = EnsembleConfig(
            n_t=2048, n_t_ctrl=256, tol_terminal=3e-3, eps=1e-3, max_iter=200, update="frozen"
        )
        gc = problems.great_circle_path(TimeGrid(prob.cost.tf, config.n_t))
        x_init = np.broadcast_to(gc, (pgrid.n_beta,) + gc.shape).copy()
        sol = ensemble_solve(prob, pgrid, config, x_init=x_init)
        assert sol.converged and sol.iterations <= 150
        energies[n_beta] = sol.records[-1].energy
        its[n_beta] = sol.iterations
    rel = abs(energies[21] - energies[41]) / energies[41]
    assert rel <= 0.15
    assert 14.0 <= energies[21] <= 18.0 and 14.0 <= energies[41] <= 18.0
