"""Backward sweep for fixed-endpoint linear-quadratic problems.

Given a frozen time-varying linear model

    dx/dt = At(t) x + "Bt(t) u",   J = 1/2 integral (x'Qx + u'Ru),

with both endpoints pinned, the costate splits as lam = K x + S nu where

    dK/dt = -Q - At'K - K At + K G K,          K(tf) = 0,
    dS/dt = -(At' - K G) S,                    S(tf) = I,
    dP/dt = S' G S,                            P(tf) = 0,

G = Bt R^{-1} Bt' and nu solves P(0) nu = xf - S(0)' x0.  The closed loop
dx/dt = At x - G (K x + S nu) then hits xf by construction.

Only the product G is consumed here.  For frozen bilinear models G can be
indefinite (it need not factor as Bt R^{-1} Bt' with a real Bt), which is
fine: none of the sweep equations require a factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, FiniteEscape, NonFiniteState, NotControllable
from .model import BoundaryConditions, TimeGrid
from .ode import half_grid, rk4_slots

__all__ = [
    "FrozenLinearSystem",
    "SweepSolution",
    "riccati_backward",
    "transport_backward",
    "endpoint_map_backward",
    "solve_multiplier",
    "closed_loop_forward",
    "reconstruct_costate",
    "solve_sweep",
]

ESCAPE_NORM = 1e12
COND_LIMIT = 1e12


@dataclass(frozen=True)
class FrozenLinearSystem:
    """Node-sampled coefficients of a frozen linear model.

    Apath is the drift matrix path, BRBpath the (possibly indefinite)
    quadratic input product G(t).  Bpath optionally stores an explicit
    input factor (n x m), needed by consumers that integrate against the
    input operator directly (ensemble synthesis).
    """

    grid: TimeGrid
    Apath: np.ndarray
    BRBpath: np.ndarray
    Bpath: np.ndarray | None = None

    def __post_init__(self):
        npts = self.grid.n_t + 1
        A = np.asarray(self.Apath, dtype=float)
        G = np.asarray(self.BRBpath, dtype=float)
        if A.ndim != 3 or A.shape[0] != npts or A.shape[1] != A.shape[2]:
            raise DimensionMismatch(f"Apath must be ({npts}, n, n), got {A.shape}")
        n = A.shape[1]
        if G.shape != (npts, n, n):
            raise DimensionMismatch(f"BRBpath must be ({npts}, {n}, {n}), got {G.shape}")
        gap = np.abs(G - np.transpose(G, (0, 2, 1))).max(initial=0.0)
        scale = max(1.0, np.abs(G).max(initial=0.0))
        if gap > 1e-10 * scale:
            raise DimensionMismatch(f"BRBpath is not symmetric (gap {gap:.3g})")
        if self.Bpath is not None:
            Bp = np.asarray(self.Bpath, dtype=float)
            if Bp.ndim != 3 or Bp.shape[0] != npts or Bp.shape[1] != n:
                raise DimensionMismatch(f"Bpath must be ({npts}, {n}, m), got {Bp.shape}")
            object.__setattr__(self, "Bpath", Bp)
        object.__setattr__(self, "Apath", A)
        object.__setattr__(self, "BRBpath", 0.5 * (G + np.transpose(G, (0, 2, 1))))

    @property
    def n(self) -> int:
        return self.Apath.shape[1]


@dataclass(frozen=True)
class SweepSolution:
    """One full sweep: gain, transport, endpoint map, multiplier, and the
    resulting closed-loop state/costate paths."""

    grid: TimeGrid
    Kpath: np.ndarray
    Spath: np.ndarray
    Ppath: np.ndarray
    nu: np.ndarray
    xpath: np.ndarray
    lam_path: np.ndarray
    cond_P0: float
    terminal_defect: float


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def riccati_backward(frozen: FrozenLinearSystem, Q: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Gain path K(t) from the matrix Riccati equation, terminal K(tf) = 0.

    Symmetrizes after every step; raises FiniteEscape if the solution blows
    up before reaching t = 0 (always possible with an indefinite G).
    """
    n = frozen.n
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (n, n):
        raise DimensionMismatch(f"Q must be ({n}, {n}), got {Q.shape}")
    Ah = half_grid(frozen.Apath, "cubic")
    Gh = half_grid(frozen.BRBpath, "cubic")

    def rhs(s, K):
        A = Ah[s]
        KG = K @ Gh[s]
        return -Q - A.T @ K - K @ A + KG @ K

    try:
        return rk4_slots(
            rhs, np.zeros((n, n)), grid.n_t, grid.dt, "backward",
            post_step=_sym, escape_norm=ESCAPE_NORM,
        )
    except NonFiniteState as exc:
        raise FiniteEscape(f"Riccati backward pass escaped: {exc}") from exc


def transport_backward(
    frozen: FrozenLinearSystem, Kpath: np.ndarray, grid: TimeGrid
) -> np.ndarray:
    """Multiplier transport S(t), dS/dt = -(At' - K G) S, S(tf) = I."""
    n = frozen.n
    Ah = half_grid(frozen.Apath, "cubic")
    Gh = half_grid(frozen.BRBpath, "cubic")
    Kh = half_grid(np.asarray(Kpath, dtype=float), "cubic")
    Mh = -(np.transpose(Ah, (0, 2, 1)) - np.einsum("sij,sjk->sik", Kh, Gh))
    return rk4_slots(lambda s, S: Mh[s] @ S, np.eye(n), grid.n_t, grid.dt, "backward")


def endpoint_map_backward(
    frozen: FrozenLinearSystem, Spath: np.ndarray, grid: TimeGrid
) -> np.ndarray:
    """Endpoint map P(t), dP/dt = S' G S, P(tf) = 0, symmetrized per node.

    Together with S it expresses the pinned endpoint along the closed loop:
    xf = S(t)' x(t) + P(t) nu for all t.
    """
    n = frozen.n
    Gh = half_grid(frozen.BRBpath, "cubic")
    Sh = half_grid(np.asarray(Spath, dtype=float), "cubic")
    SGS = np.einsum("sji,sjk,skl->sil", Sh, Gh, Sh)
    return rk4_slots(
        lambda s, P: SGS[s], np.zeros((n, n)), grid.n_t, grid.dt, "backward",
        post_step=_sym,
    )


def solve_multiplier(
    P0: np.ndarray, S0: np.ndarray, bc: BoundaryConditions
) -> tuple[np.ndarray, float]:
    """Terminal multiplier nu from P(0) nu = xf - S(0)' x0.

    Returns (nu, cond(P0)).  Raises NotControllable when P(0) is singular
    or hopelessly ill-conditioned: the frozen model then cannot steer x0
    to xf (nonsingular P(0) is equivalent to controllability of the frozen
    model on [0, tf]).
    """
    P0 = np.asarray(P0, dtype=float)
    S0 = np.asarray(S0, dtype=float)
    rhs = bc.xf - S0.T @ bc.x0
    cond = float(np.linalg.cond(P0))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NotControllable(
            f"endpoint map P(0) is singular to working precision (cond {cond:.3g}); "
            "the frozen system cannot reach the target on this horizon"
        )
    nu = np.linalg.solve(P0, rhs)
    return nu, cond


def closed_loop_forward(
    frozen: FrozenLinearSystem,
    Kpath: np.ndarray,
    Spath: np.ndarray,
    nu: np.ndarray,
    bc: BoundaryConditions,
    grid: TimeGrid,
) -> tuple[np.ndarray, float]:
    """Integrate dx/dt = (At - G K) x - G S nu forward from bc.x0.

    Returns (xpath, terminal defect |x(tf) - xf|_2).  The sweep enforces
    the endpoint through nu, so the defect is pure integration error.
    """
    x0 = np.asarray(bc.x0, dtype=float)
    if x0.shape[0] != frozen.n:
        raise DimensionMismatch(f"x0 has length {x0.shape[0]}, system n = {frozen.n}")
    Ah = half_grid(frozen.Apath, "cubic")
    Gh = half_grid(frozen.BRBpath, "cubic")
    Kh = half_grid(np.asarray(Kpath, dtype=float), "cubic")
    SNu = np.asarray(Spath, dtype=float) @ np.asarray(nu, dtype=float)
    SNuh = half_grid(SNu, "cubic")
    Mh = Ah - np.einsum("sij,sjk->sik", Gh, Kh)
    bh = -np.einsum("sij,sj->si", Gh, SNuh)
    xpath = rk4_slots(
        lambda s, x: Mh[s] @ x + bh[s], x0, grid.n_t, grid.dt, "forward"
    )
    return xpath, float(np.linalg.norm(xpath[-1] - bc.xf))


def reconstruct_costate(
    Kpath: np.ndarray, Spath: np.ndarray, nu: np.ndarray, xpath: np.ndarray
) -> np.ndarray:
    """lam(t) = K(t) x(t) + S(t) nu at every node; lam(tf) = nu exactly."""
    return (
        np.einsum("tij,tj->ti", np.asarray(Kpath, dtype=float), np.asarray(xpath, dtype=float))
        + np.asarray(Spath, dtype=float) @ np.asarray(nu, dtype=float)
    )


def solve_sweep(
    frozen: FrozenLinearSystem,
    Q: np.ndarray,
    bc: BoundaryConditions,
    grid: TimeGrid,
    skip_riccati: bool = False,
) -> SweepSolution:
    """Run one full sweep pass on a frozen model.

    skip_riccati=True sets K to zero analytically (exact whenever Q = 0,
    since K(tf) = 0 makes the zero path an exact solution).
    """
    n = frozen.n
    if skip_riccati:
        Kpath = np.zeros((grid.n_t + 1, n, n))
    else:
        Kpath = riccati_backward(frozen, Q, grid)
    Spath = transport_backward(frozen, Kpath, grid)
    Ppath = endpoint_map_backward(frozen, Spath, grid)
    nu, cond_P0 = solve_multiplier(Ppath[0], Spath[0], bc)
    xpath, defect = closed_loop_forward(frozen, Kpath, Spath, nu, bc, grid)
    lam_path = reconstruct_costate(Kpath, Spath, nu, xpath)
    return SweepSolution(
        grid=grid,
        Kpath=Kpath,
        Spath=Spath,
        Ppath=Ppath,
        nu=nu,
        xpath=xpath,
        lam_path=lam_path,
        cond_P0=cond_P0,
        terminal_defect=defect,
    )
