"""Sweep passes: Riccati, transport, endpoint map, multiplier.

Closed forms used:
  scalar plant A=0, B=1, Q=R=1  ->  K(t) = tanh(tf - t)
  Q = 0                          ->  K = 0, S(t) = Phi(tf, t)', and
                                     P(0) = -Phi W Phi' with Phi = Phi(tf, 0)
                                     and W the [0, tf] controllability Gramian
"""

from __future__ import annotations

import numpy as np
import pytest
from scipy.linalg import expm

from bilinoc.errors import NotControllable
from bilinoc.model import BilinearSystem, BoundaryConditions, QuadraticCost, TimeGrid
from bilinoc.ode import transition_matrix
from bilinoc.oracle import gramian_min_energy
from bilinoc.solver import build_frozen
from bilinoc.sweep import FrozenLinearSystem, solve_sweep


def _scalar_setup(n_t=2000):
    sys_ = BilinearSystem(A=np.zeros((1, 1)), B=np.ones((1, 1)), N=np.zeros((1, 1, 1)))
    cost = QuadraticCost(Q=np.eye(1), R=np.eye(1), tf=1.5)
    bc = BoundaryConditions(x0=np.ones(1), xf=np.array([0.4]))
    grid = TimeGrid(1.5, n_t)
    X = np.linspace(1.0, 0.4, n_t + 1)[:, None]
    frozen = build_frozen(sys_, cost, X, np.zeros_like(X))
    return sys_, cost, bc, grid, frozen


def _double_integrator(n_t=2000):
    sys_ = BilinearSystem(
        A=np.array([[0.0, 1.0], [0.0, 0.0]]),
        B=np.array([[0.0], [1.0]]),
        N=np.zeros((2, 2, 1)),
    )
    cost = QuadraticCost(Q=np.zeros((2, 2)), R=np.eye(1), tf=1.0)
    bc = BoundaryConditions(x0=np.zeros(2), xf=np.array([1.0, 0.0]))
    grid = TimeGrid(1.0, n_t)
    X = np.linspace(0.0, 1.0, n_t + 1)[:, None] * bc.xf
    frozen = build_frozen(sys_, cost, X, np.zeros_like(X))
    return sys_, cost, bc, grid, frozen


# ── closed forms ──────────────────────────────────────────────────────────────


def test_scalar_riccati_matches_tanh():
    _, cost, bc, grid, frozen = _scalar_setup()
    sw = solve_sweep(frozen, cost.Q, bc, grid)
    assert abs(float(sw.Kpath[0, 0, 0]) - np.tanh(1.5)) <= 1e-12
    tanh_path = np.tanh(1.5 - grid.t)
    assert np.abs(sw.Kpath[:, 0, 0] - tanh_path).max() <= 1e-10


def test_q_zero_initial_P_equals_gramian_form():
    sys_, cost, bc, grid, frozen = _double_integrator()
    sw = solve_sweep(frozen, cost.Q, bc, grid, skip_riccati=True)
    Ap = np.broadcast_to(sys_.A, (grid.n_t + 1, 2, 2)).copy()
    Bp = np.broadcast_to(sys_.B, (grid.n_t + 1, 2, 1)).copy()
    _, W, _ = gramian_min_energy(Ap, Bp, cost.R, bc, grid)
    Phi = expm(sys_.A * cost.tf)
    assert np.abs(sw.Ppath[0] + Phi @ W @ Phi.T).max() <= 1e-6


def test_q_zero_shortcut_and_transport():
    sys_, cost, bc, grid, frozen = _double_integrator(n_t=400)
    sw = solve_sweep(frozen, cost.Q, bc, grid, skip_riccati=True)
    assert np.abs(sw.Kpath).max() == 0.0
    for i in (0, 133, 266):
        Phi = transition_matrix(frozen.Apath, grid, i, grid.n_t)
        assert np.abs(sw.Spath[i] - Phi.T).max() <= 1e-8


# ── structural conditions ─────────────────────────────────────────────────────


def test_terminal_conditions_and_symmetry():
    _, cost, bc, grid, frozen = _scalar_setup(n_t=500)
    sw = solve_sweep(frozen, cost.Q, bc, grid)
    assert np.abs(sw.Kpath[-1]).max() == 0.0
    assert np.abs(sw.Spath[-1] - np.eye(1)).max() == 0.0
    assert np.abs(sw.Ppath[-1]).max() == 0.0
    assert np.abs(sw.Kpath - np.transpose(sw.Kpath, (0, 2, 1))).max() <= 1e-12
    assert np.abs(sw.Ppath - np.transpose(sw.Ppath, (0, 2, 1))).max() <= 1e-12
    assert np.abs(sw.lam_path[-1] - sw.nu).max() == 0.0


def test_endpoint_map_identity_along_run():
    sys_, cost, bc, grid, frozen = _double_integrator(n_t=1000)
    sw = solve_sweep(frozen, cost.Q, bc, grid, skip_riccati=True)
    recon = np.einsum("tji,tj->ti", sw.Spath, sw.xpath) + np.einsum(
        "tij,j->ti", sw.Ppath, sw.nu
    )
    assert np.abs(recon - bc.xf).max() <= 1e-6
    assert np.abs(sw.xpath[-1] - bc.xf).max() <= 1e-8
    assert np.abs(sw.xpath[0] - bc.x0).max() == 0.0


def test_costate_residual_second_order():
    # lam from the sweep satisfies lamdot = -Q x - A~' lam up to O(dt^2)
    # (central differences); halving dt shrinks the residual ~4x
    def residual(n_t):
        _, cost, bc, grid, frozen = _scalar_setup(n_t=n_t)
        sw = solve_sweep(frozen, cost.Q, bc, grid)
        dlam = (sw.lam_path[2:] - sw.lam_path[:-2]) / (2.0 * grid.dt)
        rhs = -np.einsum("tj,jk->tk", sw.xpath, cost.Q) - np.einsum(
            "tkj,tk->tj", frozen.Apath, sw.lam_path
        )
        return float(np.abs(dlam - rhs[1:-1]).max())

    r1, r2 = residual(250), residual(500)
    assert 2.5 <= r1 / r2 <= 6.5


def test_uncontrollable_frozen_model_rejected():
    # B = 0 makes the endpoint map singular between distinct endpoints
    grid = TimeGrid(1.0, 200)
    frozen = FrozenLinearSystem(
        grid=grid,
        Apath=np.zeros((201, 2, 2)),
        BRBpath=np.zeros((201, 2, 2)),
    )
    bc = BoundaryConditions(x0=np.zeros(2), xf=np.ones(2))
    with pytest.raises(NotControllable):
        solve_sweep(frozen, np.zeros((2, 2)), bc, grid, skip_riccati=True)


def test_cond_P0_reported_finite():
    _, cost, bc, grid, frozen = _double_integrator(n_t=500)
    sw = solve_sweep(frozen, cost.Q, bc, grid, skip_riccati=True)
    assert np.isfinite(sw.cond_P0) and sw.cond_P0 >= 1.0
