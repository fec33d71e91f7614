"""Bundled example problems.

Three named setups exercised throughout the tests and the CLI: a scalar
population-transfer problem with a pure product nonlinearity, a single
Bloch system driven by two transverse fields, and the broadband ensemble
version of the Bloch problem over a band of resonance offsets.
"""

from __future__ import annotations

import numpy as np

from .ensemble import EnsembleProblem, ParameterGrid, sample_parameters
from .errors import BadSpec
from .model import BilinearSystem, BoundaryConditions, QuadraticCost, TimeGrid

__all__ = [
    "population",
    "bloch",
    "bloch_ensemble",
    "bloch_ensemble_grid",
    "great_circle_path",
    "BUILTIN_SINGLE",
    "BUILTIN_ENSEMBLE",
]


def population() -> tuple[BilinearSystem, QuadraticCost, BoundaryConditions]:
    """Scalar growth control: dx/dt = x u, steer 1 -> 1/3 on [0, 2].

    Running cost (x^2 + u^2) / 2.  The plant is the pure bilinear product,
    A = B = 0.
    """
    sys = BilinearSystem(
        A=np.zeros((1, 1)), B=np.zeros((1, 1)), N=np.ones((1, 1, 1))
    )
    cost = QuadraticCost(Q=np.eye(1), R=np.eye(1), tf=2.0)
    bc = BoundaryConditions(x0=np.array([1.0]), xf=np.array([1.0 / 3.0]))
    return sys, cost, bc


def _bloch_matrices(omega: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    A = np.array([[0.0, -omega, 0.0], [omega, 0.0, 0.0], [0.0, 0.0, 0.0]])
    B = np.zeros((3, 2))
    N = np.array(
        [
            [[0.0, 0.0], [0.0, 0.0], [-1.0, 0.0]],
            [[0.0, 0.0], [0.0, 0.0], [0.0, 1.0]],
            [[1.0, 0.0], [0.0, -1.0], [0.0, 0.0]],
        ]
    )
    return A, B, N


def bloch(omega: float = 0.5) -> tuple[BilinearSystem, QuadraticCost, BoundaryConditions]:
    """Single spin at offset omega: pi/2 excitation (0,0,1) -> (1,0,0), tf = 1.

    Minimum-energy cost (Q = 0, R = I).  Both rf quadratures are controls;
    the generator is skew-symmetric so the state stays on the unit sphere.
    """
    A, B, N = _bloch_matrices(omega)
    sys = BilinearSystem(A=A, B=B, N=N)
    cost = QuadraticCost(Q=np.zeros((3, 3)), R=np.eye(2), tf=1.0)
    bc = BoundaryConditions(x0=np.array([0.0, 0.0, 1.0]), xf=np.array([1.0, 0.0, 0.0]))
    return sys, cost, bc


def great_circle_path(grid: TimeGrid) -> np.ndarray:
    """Shortest arc on the sphere from (0,0,1) to (1,0,0), sampled on grid.

    The standard initial trajectory for the Bloch problems (endpoints with
    least distance on the sphere).
    """
    s = grid.t / grid.tf
    return np.stack(
        [np.sin(s * np.pi / 2.0), np.zeros_like(s), np.cos(s * np.pi / 2.0)], axis=1
    )


def bloch_ensemble(
    omega_range: tuple[float, float] = (-1.0, 1.0),
    tf: float = 10.0,
) -> EnsembleProblem:
    """Band of spins sharing one pulse: (0,0,1) -> (1,0,0) for every offset.

    omega_range is the closed offset interval; the drift scales linearly
    with the offset while the control coupling is offset-independent.
    """
    lo, hi = float(omega_range[0]), float(omega_range[1])
    if not hi > lo:
        raise BadSpec(f"empty offset range ({lo}, {hi})")
    _, B, N = _bloch_matrices(0.0)
    Az = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])

    def system_of(beta: np.ndarray) -> BilinearSystem:
        return BilinearSystem(A=float(beta[0]) * Az, B=B, N=N)

    return EnsembleProblem(
        system_of=system_of,
        cost=QuadraticCost(Q=np.zeros((3, 3)), R=np.eye(2), tf=tf),
        x0_of=lambda beta: np.array([0.0, 0.0, 1.0]),
        xf_of=lambda beta: np.array([1.0, 0.0, 0.0]),
    )


def bloch_ensemble_grid(
    n_beta: int = 21,
    n_eval: int = 141,
    omega_range: tuple[float, float] = (-1.0, 1.0),
) -> ParameterGrid:
    """Design and evaluation grids for the Bloch ensemble built-in."""
    return sample_parameters(omega_range, n_beta, eval_counts=n_eval)


BUILTIN_SINGLE = {"population": population, "bloch": bloch}
BUILTIN_ENSEMBLE = {"bloch_ensemble": bloch_ensemble}
