"""Integrators: RK4 order, transition matrices, interpolation."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.linalg import expm

from bilinoc.errors import OutOfRange
from bilinoc.model import TimeGrid
from bilinoc.ode import (
    cubic_midpoints,
    interpolate,
    linear_midpoints,
    rk4_integrate,
    transition_from_start,
    transition_matrix,
)


# ── RK4 basics ────────────────────────────────────────────────────────────────


def test_rk4_exact_on_cubic_rhs():
    # the classical scheme integrates time polynomials up to t^3 exactly
    grid = TimeGrid(2.0, 40)
    path = rk4_integrate(lambda t, y: np.array([3.0 * t ** 2 - 2.0 * t + 1.0]), np.zeros(1), grid)
    exact = grid.t ** 3 - grid.t ** 2 + grid.t
    assert np.abs(path[:, 0] - exact).max() <= 1e-13


def test_rk4_halving_ratio_fourth_order():
    def rhs(t, y):
        return np.sin(y) + np.cos(3.0 * t)

    y0 = np.array([0.3])
    ref = rk4_integrate(rhs, y0, TimeGrid(2.0, 3200))[-1, 0]
    e1 = abs(rk4_integrate(rhs, y0, TimeGrid(2.0, 100))[-1, 0] - ref)
    e2 = abs(rk4_integrate(rhs, y0, TimeGrid(2.0, 200))[-1, 0] - ref)
    assert 8.0 <= e1 / e2 <= 32.0


def test_rk4_backward_round_trip():
    def rhs(t, y):
        return np.array([y[1], -np.sin(y[0]) - 0.1 * y[1] + np.cos(t)])

    grid = TimeGrid(3.0, 600)
    y0 = np.array([0.4, -0.2])
    fwd = rk4_integrate(rhs, y0, grid, "forward")
    back = rk4_integrate(rhs, fwd[-1], grid, "backward")
    assert np.abs(back[0] - y0).max() <= 1e-9
    assert np.abs(back - fwd).max() <= 1e-9


# ── transition matrices ───────────────────────────────────────────────────────


def test_constant_coefficients_match_matrix_exponential():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(3, 3)) * 0.5
    grid = TimeGrid(2.0, 400)
    Apath = np.broadcast_to(A, (401, 3, 3)).copy()
    Phi = transition_matrix(Apath, grid, 0, 400)
    assert np.abs(Phi - expm(2.0 * A)).max() <= 1e-8


def test_skew_generator_gives_orthogonal_transition():
    rng = np.random.default_rng(8)
    S = rng.normal(size=(4, 4))
    A = S - S.T
    grid = TimeGrid(1.0, 500)
    Apath = np.broadcast_to(A, (501, 4, 4)).copy()
    Phi = transition_matrix(Apath, grid, 0, 500)
    assert np.abs(Phi.T @ Phi - np.eye(4)).max() <= 1e-8
    assert abs(np.linalg.det(Phi) - 1.0) <= 1e-8


def test_semigroup_composition():
    rng = np.random.default_rng(21)
    grid = TimeGrid(2.0, 600)
    Apath = np.einsum("t,ij->tij", np.sin(grid.t), rng.normal(size=(3, 3)) * 0.4)
    Apath = Apath + 0.3 * rng.normal(size=(3, 3))
    mid = 200
    P20 = transition_matrix(Apath, grid, 0, 600)
    P21 = transition_matrix(Apath, grid, mid, 600)
    P10 = transition_matrix(Apath, grid, 0, mid)
    assert np.abs(P20 - P21 @ P10).max() <= 1e-8


def test_transition_from_start_inverts_forward_map():
    # transition_from_start returns Phi(0, t_i); composing with the forward
    # map over [0, t_i] must give the identity at every probed node
    rng = np.random.default_rng(2)
    grid = TimeGrid(1.5, 300)
    Apath = np.einsum("t,ij->tij", np.cos(grid.t), rng.normal(size=(2, 2)))
    Psi = transition_from_start(Apath, grid)
    assert np.abs(Psi[0] - np.eye(2)).max() == 0.0
    for i in (75, 150, 300):
        fwd = transition_matrix(Apath, grid, 0, i)
        assert np.abs(Psi[i] @ fwd - np.eye(2)).max() <= 1e-8


# ── interpolation ─────────────────────────────────────────────────────────────


def test_interpolate_linear_exact_and_range_checked():
    grid = TimeGrid(1.0, 10)
    path = np.column_stack([2.0 * grid.t + 1.0, -grid.t])
    v = interpolate(path, grid, 0.537)
    assert np.abs(v - np.array([2.0 * 0.537 + 1.0, -0.537])).max() <= 1e-14
    with pytest.raises(OutOfRange):
        interpolate(path, grid, 1.0 + 1e-9)
    with pytest.raises(OutOfRange):
        interpolate(path, grid, -1e-9)


def test_midpoint_rules_on_polynomials():
    grid = TimeGrid(1.0, 64)
    t = grid.t
    mids = 0.5 * (t[:-1] + t[1:])
    lin = linear_midpoints(np.column_stack([t]))
    assert np.abs(lin[:, 0] - mids).max() <= 1e-15
    # the 4-point stencil reproduces cubics exactly away from the ends
    cub = cubic_midpoints(np.column_stack([t ** 3]))
    assert np.abs(cub[1:-1, 0] - mids[1:-1] ** 3).max() <= 1e-13
