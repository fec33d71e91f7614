"""Fixed-step integration utilities on uniform time grids.

Everything is classical RK4.  Paths are stored at the n_t + 1 grid nodes;
time-varying coefficients supplied as node paths are treated as piecewise
linear, so their half-step values are plain averages.  Solution paths that
downstream passes must re-sample at half steps get cubic midpoints instead
(4-point stencil), which keeps composed sweeps at fourth order.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DimensionMismatch, NonFiniteState, OutOfRange
from .model import TimeGrid

__all__ = [
    "rk4_integrate",
    "transition_matrix",
    "transition_from_start",
    "interpolate",
    "linear_midpoints",
    "cubic_midpoints",
]


def rk4_integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    grid: TimeGrid,
    direction: str = "forward",
) -> np.ndarray:
    """Integrate dy/dt = rhs(t, y) across the whole grid.

    direction "forward" starts from y(0) = y0; "backward" starts from
    y(tf) = y0 and fills the path down to t = 0.  The returned array has
    shape (n_t + 1,) + y0.shape with entries at the grid nodes.

    Raises NonFiniteState as soon as a step produces NaN/Inf.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be forward or backward, got {direction!r}")
    y = np.asarray(y0, dtype=float).copy()
    t = grid.t
    dt = grid.dt
    h2 = 0.5 * dt
    h6 = dt / 6.0
    out = np.empty((grid.n_t + 1,) + y.shape)
    if direction == "forward":
        out[0] = y
        for i in range(grid.n_t):
            ti = t[i]
            k1 = rhs(ti, y)
            k2 = rhs(ti + h2, y + h2 * k1)
            k3 = rhs(ti + h2, y + h2 * k2)
            k4 = rhs(t[i + 1], y + dt * k3)
            y = y + h6 * (k1 + 2.0 * (k2 + k3) + k4)
            if not np.all(np.isfinite(y)):
                raise NonFiniteState(f"forward RK4 produced non-finite state at t = {t[i + 1]:.6g}")
            out[i + 1] = y
    else:
        out[grid.n_t] = y
        for i in range(grid.n_t - 1, -1, -1):
            ti = t[i + 1]
            k1 = rhs(ti, y)
            k2 = rhs(ti - h2, y - h2 * k1)
            k3 = rhs(ti - h2, y - h2 * k2)
            k4 = rhs(t[i], y - dt * k3)
            y = y - h6 * (k1 + 2.0 * (k2 + k3) + k4)
            if not np.all(np.isfinite(y)):
                raise NonFiniteState(f"backward RK4 produced non-finite state at t = {t[i]:.6g}")
            out[i] = y
    return out


def interpolate(path: np.ndarray, grid: TimeGrid, t: float) -> np.ndarray:
    """Linear interpolation of a node-sampled path; exact at the nodes."""
    path = np.asarray(path)
    if path.shape[0] != grid.n_t + 1:
        raise DimensionMismatch(
            f"path has {path.shape[0]} samples, grid has {grid.n_t + 1} nodes"
        )
    eps = 1e-12 * max(1.0, grid.tf)
    if t < -eps or t > grid.tf + eps:
        raise OutOfRange(f"t = {t} outside [0, {grid.tf}]")
    t = min(max(t, 0.0), grid.tf)
    i = min(int(t / grid.dt), grid.n_t - 1)
    nodes = grid.t
    theta = (t - nodes[i]) / (nodes[i + 1] - nodes[i])
    if theta <= 0.0:
        return path[i].copy()
    if theta >= 1.0:
        return path[i + 1].copy()
    return (1.0 - theta) * path[i] + theta * path[i + 1]


def linear_midpoints(path: np.ndarray) -> np.ndarray:
    """Averages of consecutive nodes; exact for piecewise-linear data."""
    return 0.5 * (path[:-1] + path[1:])


def cubic_midpoints(path: np.ndarray) -> np.ndarray:
    """Midpoint values from a 4-point cubic stencil (one-sided at the ends).

    Used when a smooth solution path, known only at the nodes, feeds a later
    RK4 pass: cubic midpoints keep the composition at fourth order where
    linear averaging would cap it at second.
    """
    npts = path.shape[0]
    if npts < 3:
        raise DimensionMismatch("need at least 3 nodes for midpoint reconstruction")
    if npts == 3:
        mids = np.empty((2,) + path.shape[1:])
        mids[0] = 0.375 * path[0] + 0.75 * path[1] - 0.125 * path[2]
        mids[1] = -0.125 * path[0] + 0.75 * path[1] + 0.375 * path[2]
        return mids
    mids = np.empty((npts - 1,) + path.shape[1:])
    mids[1:-1] = (
        -path[:-3] + 9.0 * path[1:-2] + 9.0 * path[2:-1] - path[3:]
    ) / 16.0
    mids[0] = (5.0 * path[0] + 15.0 * path[1] - 5.0 * path[2] + path[3]) / 16.0
    mids[-1] = (path[-4] - 5.0 * path[-3] + 15.0 * path[-2] + 5.0 * path[-1]) / 16.0
    return mids


def half_grid(path: np.ndarray, kind: str = "linear") -> np.ndarray:
    """Interleave nodes with midpoints: slot 2i is node i, slot 2i+1 the
    midpoint of interval i.  kind selects the midpoint rule."""
    mids = linear_midpoints(path) if kind == "linear" else cubic_midpoints(path)
    out = np.empty((2 * path.shape[0] - 1,) + path.shape[1:])
    out[0::2] = path
    out[1::2] = mids
    return out


def rk4_slots(
    f: Callable[[int, np.ndarray], np.ndarray],
    y0: np.ndarray,
    n_t: int,
    dt: float,
    direction: str = "forward",
    post_step: Callable[[np.ndarray], np.ndarray] | None = None,
    escape_norm: float | None = None,
) -> np.ndarray:
    """RK4 where the rhs is indexed by half-grid slot instead of time.

    Slot 2i is node i and slot 2i+1 the midpoint of interval i, matching
    half_grid().  post_step (e.g. symmetrization) is applied after every
    step; escape_norm raises NonFiniteState when max|y| exceeds it.
    """
    y = np.asarray(y0, dtype=float).copy()
    h2 = 0.5 * dt
    h6 = dt / 6.0
    out = np.empty((n_t + 1,) + y.shape)
    if direction == "forward":
        out[0] = y
        rng = range(n_t)
    else:
        out[n_t] = y
        rng = range(n_t - 1, -1, -1)
    for i in rng:
        if direction == "forward":
            s0, sm, s1 = 2 * i, 2 * i + 1, 2 * i + 2
            k1 = f(s0, y)
            k2 = f(sm, y + h2 * k1)
            k3 = f(sm, y + h2 * k2)
            k4 = f(s1, y + dt * k3)
            y = y + h6 * (k1 + 2.0 * (k2 + k3) + k4)
            idx = i + 1
        else:
            s0, sm, s1 = 2 * i + 2, 2 * i + 1, 2 * i
            k1 = f(s0, y)
            k2 = f(sm, y - h2 * k1)
            k3 = f(sm, y - h2 * k2)
            k4 = f(s1, y - dt * k3)
            y = y - h6 * (k1 + 2.0 * (k2 + k3) + k4)
            idx = i
        if post_step is not None:
            y = post_step(y)
        if not np.all(np.isfinite(y)):
            raise NonFiniteState(f"RK4 produced non-finite values at node {idx}")
        if escape_norm is not None and np.abs(y).max() > escape_norm:
            raise NonFiniteState(f"RK4 state exceeded {escape_norm:g} at node {idx}")
        out[idx] = y
    return out


def transition_matrix(
    Apath: np.ndarray, grid: TimeGrid, i_from: int, i_to: int
) -> np.ndarray:
    """State-transition matrix Phi(t_to, t_from) of dx/dt = A(t) x.

    A(t) is the piecewise-linear path through Apath.  Integrates
    dPhi/dt = A(t) Phi forward (or the same ODE downward when i_to < i_from)
    between the two node indices.
    """
    Apath = np.asarray(Apath, dtype=float)
    n = Apath.shape[1]
    if Apath.shape[0] != grid.n_t + 1 or Apath.shape[1] != Apath.shape[2]:
        raise DimensionMismatch(f"Apath must be (n_t+1, n, n), got {Apath.shape}")
    for idx in (i_from, i_to):
        if not (0 <= idx <= grid.n_t):
            raise OutOfRange(f"node index {idx} outside [0, {grid.n_t}]")
    if i_from == i_to:
        return np.eye(n)
    Ahalf = half_grid(Apath, "linear")
    dt = grid.dt
    h2 = 0.5 * dt
    h6 = dt / 6.0
    Y = np.eye(n)
    if i_to > i_from:
        for i in range(i_from, i_to):
            k1 = Ahalf[2 * i] @ Y
            k2 = Ahalf[2 * i + 1] @ (Y + h2 * k1)
            k3 = Ahalf[2 * i + 1] @ (Y + h2 * k2)
            k4 = Ahalf[2 * i + 2] @ (Y + dt * k3)
            Y = Y + h6 * (k1 + 2.0 * (k2 + k3) + k4)
    else:
        for i in range(i_from - 1, i_to - 1, -1):
            k1 = Ahalf[2 * i + 2] @ Y
            k2 = Ahalf[2 * i + 1] @ (Y - h2 * k1)
            k3 = Ahalf[2 * i + 1] @ (Y - h2 * k2)
            k4 = Ahalf[2 * i] @ (Y - dt * k3)
            Y = Y - h6 * (k1 + 2.0 * (k2 + k3) + k4)
    if not np.all(np.isfinite(Y)):
        raise NonFiniteState("transition-matrix integration produced non-finite values")
    return Y


def transition_from_start(Apath: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Phi(0, t_i) for every node i in a single forward pass.

    Uses d/dt Phi(0, t) = -Phi(0, t) A(t), Phi(0, 0) = I.  Returns shape
    (n_t + 1, n, n).
    """
    Apath = np.asarray(Apath, dtype=float)
    if Apath.shape[0] != grid.n_t + 1:
        raise DimensionMismatch(
            f"Apath has {Apath.shape[0]} samples, grid has {grid.n_t + 1} nodes"
        )
    n = Apath.shape[1]
    Ahalf = half_grid(Apath, "linear")
    return rk4_slots(
        lambda s, Y: -Y @ Ahalf[s], np.eye(n), grid.n_t, grid.dt, "forward"
    )
