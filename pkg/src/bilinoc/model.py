"""Problem data for fixed-endpoint quadratic control of bilinear systems.

A system is

    dx/dt = A x + B u + (sum_i u_i * Bc_i) x,

where each Bc_i is n x n ("control-side" form).  The same bilinear term can
be folded the other way, (sum_j x_j * N_j) u with each N_j of shape n x m
("state-side" form); the two are related entrywise by N_j[k, i] = Bc_i[k, j].
The solver works with the state-side matrices, so BilinearSystem stores those
and optionally remembers the control-side originals.

Costs are J = 1/2 * integral of (x'Qx + u'Ru) over [0, tf] with R positive
definite and Q positive semidefinite.  All trajectories are node-sampled
arrays on a uniform TimeGrid; consumers interpolate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadSpec, DimensionMismatch

__all__ = [
    "TimeGrid",
    "BilinearSystem",
    "QuadraticCost",
    "BoundaryConditions",
    "state_side_from_control_side",
    "control_side_from_state_side",
    "eval_rhs",
    "hamiltonian",
]


def _as_matrix(a, shape, name: str) -> np.ndarray:
    out = np.asarray(a, dtype=float)
    if out.shape != shape:
        raise DimensionMismatch(f"{name}: expected shape {shape}, got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise BadSpec(f"{name} contains non-finite entries")
    return out


def state_side_from_control_side(Bc: list[np.ndarray] | np.ndarray) -> np.ndarray:
    """Convert m control-side n x n matrices to n state-side n x m matrices.

    Returns a stacked array of shape (n, n, m) whose slice [j] is N_j, with
    N_j[k, i] = Bc_i[k, j].
    """
    Bc = np.asarray(Bc, dtype=float)
    if Bc.ndim != 3 or Bc.shape[1] != Bc.shape[2]:
        raise DimensionMismatch(f"control-side stack must be (m, n, n), got {Bc.shape}")
    # (m, k, j) -> (j, k, i=m)
    return np.ascontiguousarray(np.transpose(Bc, (2, 1, 0)))


def control_side_from_state_side(N: np.ndarray) -> np.ndarray:
    """Inverse of state_side_from_control_side; returns shape (m, n, n)."""
    N = np.asarray(N, dtype=float)
    if N.ndim != 3 or N.shape[0] != N.shape[1]:
        raise DimensionMismatch(f"state-side stack must be (n, n, m), got {N.shape}")
    return np.ascontiguousarray(np.transpose(N, (2, 1, 0)))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < ... < t_{n_t} = tf."""

    tf: float
    n_t: int
    t: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.tf > 0.0 and np.isfinite(self.tf)):
            raise BadSpec(f"tf must be positive and finite, got {self.tf}")
        if self.n_t < 2:
            raise BadSpec(f"n_t must be at least 2, got {self.n_t}")
        # linspace pins the last node to tf exactly
        object.__setattr__(self, "t", np.linspace(0.0, self.tf, self.n_t + 1))

    @property
    def dt(self) -> float:
        return self.tf / self.n_t


@dataclass(frozen=True)
class BilinearSystem:
    """Time-invariant bilinear plant in state-side form.

    N is stacked (n, n, m): N[j] multiplies u and is weighted by x_j.
    """

    A: np.ndarray
    B: np.ndarray
    N: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        n = A.shape[0]
        B = np.asarray(self.B, dtype=float)
        if B.ndim != 2 or B.shape[0] != n:
            raise DimensionMismatch(f"B must be ({n}, m), got {B.shape}")
        m = B.shape[1]
        N = np.asarray(self.N, dtype=float)
        if N.shape != (n, n, m):
            raise DimensionMismatch(f"N must be ({n}, {n}, {m}), got {N.shape}")
        for nm, arr in (("A", A), ("B", B), ("N", N)):
            if not np.all(np.isfinite(arr)):
                raise BadSpec(f"{nm} contains non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "N", N)

    @classmethod
    def from_control_side(cls, A, B, Bc) -> "BilinearSystem":
        """Build from the m control-side matrices (each n x n)."""
        return cls(A=A, B=B, N=state_side_from_control_side(Bc))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def control_side(self) -> np.ndarray:
        return control_side_from_state_side(self.N)

    def n_of(self, x: np.ndarray) -> np.ndarray:
        """N(x) = sum_j x_j N_j, shape (n, m)."""
        return np.einsum("j,jkm->km", x, self.N)


_SYM_TOL = 1e-10


@dataclass(frozen=True)
class QuadraticCost:
    """Running cost 1/2 (x'Qx + u'Ru) on [0, tf]; R must admit a Cholesky
    factor, Q must be symmetric PSD up to round-off."""

    Q: np.ndarray
    R: np.ndarray
    tf: float

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        R = np.asarray(self.R, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise DimensionMismatch(f"Q must be square, got {Q.shape}")
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise DimensionMismatch(f"R must be square, got {R.shape}")
        if not (self.tf > 0.0 and np.isfinite(self.tf)):
            raise BadSpec(f"tf must be positive, got {self.tf}")
        scale_q = max(1.0, float(np.abs(Q).max(initial=0.0)))
        if np.abs(Q - Q.T).max(initial=0.0) > _SYM_TOL * scale_q:
            raise BadSpec("Q is not symmetric")
        w = np.linalg.eigvalsh(0.5 * (Q + Q.T))
        if w.min(initial=0.0) < -_SYM_TOL * scale_q:
            raise BadSpec(f"Q has negative eigenvalue {w.min()}")
        scale_r = max(1.0, float(np.abs(R).max(initial=0.0)))
        if np.abs(R - R.T).max(initial=0.0) > _SYM_TOL * scale_r:
            raise BadSpec("R is not symmetric")
        try:
            np.linalg.cholesky(R)
        except np.linalg.LinAlgError as exc:
            raise BadSpec("R is not positive definite") from exc
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        object.__setattr__(self, "R", 0.5 * (R + R.T))

    @property
    def is_min_energy(self) -> bool:
        return not np.any(self.Q)


@dataclass(frozen=True)
class BoundaryConditions:
    """Fixed endpoints x(0) = x0, x(tf) = xf."""

    x0: np.ndarray
    xf: np.ndarray

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        xf = np.asarray(self.xf, dtype=float).reshape(-1)
        if x0.shape != xf.shape:
            raise DimensionMismatch(f"x0 {x0.shape} and xf {xf.shape} differ")
        if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(xf))):
            raise BadSpec("boundary conditions contain non-finite entries")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "xf", xf)

    @property
    def n(self) -> int:
        return self.x0.shape[0]


def eval_rhs(sys: BilinearSystem, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Right-hand side A x + B u + (sum_j x_j N_j) u at one point."""
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if x.shape[0] != sys.n:
        raise DimensionMismatch(f"x has length {x.shape[0]}, system n = {sys.n}")
    if u.shape[0] != sys.m:
        raise DimensionMismatch(f"u has length {u.shape[0]}, system m = {sys.m}")
    return sys.A @ x + sys.B @ u + sys.n_of(x) @ u


def hamiltonian(
    sys: BilinearSystem,
    cost: QuadraticCost,
    x: np.ndarray,
    u: np.ndarray,
    lam: np.ndarray,
) -> float:
    """Control Hamiltonian 1/2 (x'Qx + u'Ru) + lam' f(x, u).

    Quadratic in u with Hessian R, so the pointwise minimizer is
    u = -R^{-1} (B + N(x))' lam.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if lam.shape[0] != sys.n:
        raise DimensionMismatch(f"lam has length {lam.shape[0]}, system n = {sys.n}")
    running = 0.5 * (x @ cost.Q @ x + u @ cost.R @ u)
    return float(running + lam @ eval_rhs(sys, x, u))
