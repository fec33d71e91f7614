"""Ensemble synthesis: one open-loop control for a parameterized family.

The family ẋ = A(β)x + B(β)u + (Σⱼ xⱼNⱼ(β))u is sampled on a compact
parameter set; each outer iteration freezes the bilinear term along the
current per-sample trajectories (input-matrix reading, B̃ = B + N(X(t))),
discretizes the input-to-state operator

    (L u)(β) = ∫ Φ(0, σ, β) B̃(σ, β) u(σ) dσ

on a zero-order-hold control grid, and synthesizes the minimum-energy
control hitting ξ(β) = Φ(0, tf, β)X_f(β) − X₀(β) by a truncated SVD
expansion.  Rows of the assembled matrix carry sqrt(β-quadrature-weights)
and columns sqrt(dt)·R^{-1/2}, so plain Euclidean norms realize the
weighted L₂ norm over the parameter set and the R-weighted control energy;
the minimum-norm SVD solution is therefore the minimum-energy control.

State updates between iterations propagate the TRUE bilinear dynamics
under the synthesized control.  With a held control each knot is a
constant affine system, so propagation uses one augmented matrix
exponential per knot and is exact up to expm accuracy; norm-preserving
families (Bloch) stay on the sphere to machine precision.

The loop maintains no costate, so mode "costate" affects the freeze only
when a costate path is supplied explicitly to freeze_ensemble; inside
ensemble_solve it degenerates to "picard".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .errors import (
    BadSpec,
    DimensionMismatch,
    NonFiniteState,
    NotConverged,
    TargetNotReachable,
)
from .model import BilinearSystem, QuadraticCost, TimeGrid
from .solver import FREEZE_MODES, build_frozen
from .sweep import FrozenLinearSystem

__all__ = [
    "ParameterGrid",
    "EnsembleProblem",
    "EnsembleConfig",
    "LOperatorMatrix",
    "SvdSystem",
    "EnsemblePropagation",
    "EnsembleRecord",
    "EnsembleSolution",
    "sample_parameters",
    "freeze_ensemble",
    "assemble_L",
    "svd_synthesize",
    "propagate_ensemble",
    "ensemble_solve",
    "controllability_diagnostics",
]


# ---------------------------------------------------------------------------
# parameter sampling


@dataclass(frozen=True)
class ParameterGrid:
    """Design samples with L2 quadrature weights, optional evaluation grid."""

    samples: np.ndarray  # (n_beta, d)
    weights: np.ndarray  # (n_beta,)
    eval_samples: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "samples", np.atleast_2d(np.asarray(self.samples, dtype=float)))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.samples.shape[0] != self.weights.shape[0]:
            raise DimensionMismatch(
                f"{self.samples.shape[0]} samples but {self.weights.shape[0]} weights"
            )
        if np.any(self.weights <= 0):
            raise BadSpec("quadrature weights must be positive")
        if self.eval_samples is not None:
            object.__setattr__(
                self, "eval_samples", np.atleast_2d(np.asarray(self.eval_samples, dtype=float))
            )

    @property
    def n_beta(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    @property
    def measure(self) -> float:
        return float(self.weights.sum())


def _trapezoid_weights(points: np.ndarray) -> np.ndarray:
    """Composite trapezoid weights for sorted 1-d points."""
    if points.size == 1:
        return np.ones(1)
    w = np.empty(points.size)
    w[0] = 0.5 * (points[1] - points[0])
    w[-1] = 0.5 * (points[-1] - points[-2])
    w[1:-1] = 0.5 * (points[2:] - points[:-2])
    return w


def sample_parameters(
    intervals, counts, eval_counts=None
) -> ParameterGrid:
    """Uniform tensor-product grid over the given interval(s).

    intervals: (lo, hi) for d = 1 or a list of such pairs; counts likewise a
    scalar or a per-dimension list (each >= 2).  Weights are tensor products
    of 1-d trapezoid rules, so they sum to the measure of the box exactly.
    eval_counts builds a denser uniform evaluation grid (no weights needed).
    """
    pairs = [intervals] if np.ndim(intervals[0]) == 0 else list(intervals)
    counts = [counts] * len(pairs) if np.ndim(counts) == 0 else list(counts)
    if len(counts) != len(pairs):
        raise BadSpec(f"{len(pairs)} intervals but {len(counts)} counts")
    axes, waxes = [], []
    for (lo, hi), c in zip(pairs, counts):
        c = int(c)
        if c < 2:
            raise BadSpec("need at least 2 samples per dimension")
        if not hi > lo:
            raise BadSpec(f"empty interval ({lo}, {hi})")
        pts = np.linspace(float(lo), float(hi), c)
        axes.append(pts)
        waxes.append(_trapezoid_weights(pts))
    mesh = np.meshgrid(*axes, indexing="ij")
    samples = np.stack([m.ravel() for m in mesh], axis=1)
    wmesh = np.meshgrid(*waxes, indexing="ij")
    weights = np.ones(samples.shape[0])
    for w in wmesh:
        weights = weights * w.ravel() if len(wmesh) > 1 else w.ravel()
    eval_samples = None
    if eval_counts is not None:
        ecounts = [eval_counts] * len(pairs) if np.ndim(eval_counts) == 0 else list(eval_counts)
        eaxes = [np.linspace(float(lo), float(hi), int(c)) for (lo, hi), c in zip(pairs, ecounts)]
        emesh = np.meshgrid(*eaxes, indexing="ij")
        eval_samples = np.stack([m.ravel() for m in emesh], axis=1)
    return ParameterGrid(samples=samples, weights=weights, eval_samples=eval_samples)


# ---------------------------------------------------------------------------
# problem container


@dataclass(frozen=True)
class EnsembleProblem:
    """Parameterized family with shared cost and per-sample endpoints.

    system_of(beta) -> BilinearSystem; x0_of / xf_of map beta to endpoint
    vectors.  The cost must be minimum-energy (Q = 0): the synthesis metric
    is control energy only.
    """

    system_of: Callable[[np.ndarray], BilinearSystem]
    cost: QuadraticCost
    x0_of: Callable[[np.ndarray], np.ndarray]
    xf_of: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if not self.cost.is_min_energy:
            raise BadSpec("ensemble synthesis requires a minimum-energy cost (Q = 0)")


@dataclass(frozen=True)
class EnsembleConfig:
    """Knobs for the ensemble loop.

    n_t is the state grid (propagation/freeze resolution) and must be a
    multiple of n_t_ctrl, the zero-order-hold control grid.  eps is the
    SVD truncation residual target in the weighted-L2 metric (defaults to
    half the stopping tolerance); rcond caps the usable spectrum at
    sigma_n / sigma_1 > rcond.  terminal_norm picks the stopping norm over
    the parameter set ("l2" weighted, or "sup").  update selects the
    trajectory fed to the next freeze: "bilinear" re-propagates the true
    dynamics, "frozen" uses the response of the frozen linear model itself
    (the contraction argument's update; each frozen trajectory ends near
    the target by construction, which keeps successive freezes close and
    stabilizes cold starts).  Stopping always measures the true defect.
    """

    n_t: int = 2048
    n_t_ctrl: int = 256
    tol_terminal: float = 1e-5
    max_iter: int = 300
    eps: float | None = None
    rcond: float = 1e-8
    mode: str = "picard"
    terminal_norm: str = "l2"
    update: str = "bilinear"

    def __post_init__(self):
        if self.mode not in FREEZE_MODES:
            raise BadSpec(f"mode must be one of {FREEZE_MODES}, got {self.mode!r}")
        if self.terminal_norm not in ("l2", "sup"):
            raise BadSpec(f"terminal_norm must be 'l2' or 'sup', got {self.terminal_norm!r}")
        if self.update not in ("bilinear", "frozen"):
            raise BadSpec(f"update must be 'bilinear' or 'frozen', got {self.update!r}")
        if self.n_t_ctrl < 1 or self.n_t < 1:
            raise BadSpec("grid sizes must be positive")
        if self.n_t % self.n_t_ctrl != 0:
            raise BadSpec(f"n_t = {self.n_t} must be a multiple of n_t_ctrl = {self.n_t_ctrl}")
        if self.tol_terminal <= 0 or self.rcond <= 0:
            raise BadSpec("tolerances must be positive")
        if self.eps is not None and self.eps <= 0:
            raise BadSpec("eps must be positive when given")
        if self.max_iter < 1:
            raise BadSpec("max_iter must be at least 1")

    @property
    def eps_value(self) -> float:
        return 0.5 * self.tol_terminal if self.eps is None else self.eps


# ---------------------------------------------------------------------------
# freeze and operator assembly


def freeze_ensemble(
    prob: EnsembleProblem,
    Xpaths: np.ndarray,
    lam_paths: np.ndarray | None,
    pgrid: ParameterGrid,
    mode: str = "picard",
) -> list[FrozenLinearSystem]:
    """Per-sample frozen models along Xpaths (n_beta, n_t+1, n).

    The explicit input factor B̃ = B(β) + N(X(t)) is always stored; mode
    "costate" additionally applies the drift correction, which needs
    lam_paths (zeros give back the plain drift A(β)).
    """
    X = np.asarray(Xpaths, dtype=float)
    if X.ndim != 3 or X.shape[0] != pgrid.n_beta:
        raise DimensionMismatch(
            f"Xpaths must be (n_beta, n_t+1, n) with n_beta = {pgrid.n_beta}, got {X.shape}"
        )
    L = np.zeros_like(X) if lam_paths is None else np.asarray(lam_paths, dtype=float)
    if L.shape != X.shape:
        raise DimensionMismatch(f"lam_paths shape {L.shape} != Xpaths shape {X.shape}")
    out = []
    for b in range(pgrid.n_beta):
        sysb = prob.system_of(pgrid.samples[b])
        out.append(
            build_frozen(sysb, prob.cost, X[b], L[b], mode=mode, with_factor=True)
        )
    return out


@dataclass(frozen=True)
class LOperatorMatrix:
    """Scaled dense discretization of the input-to-state operator.

    matrix rows are grouped per sample (n entries each, scaled by
    sqrt(weight)); columns per control knot (m entries, scaled by
    sqrt(dt) R^{-1/2}).  Rhalf_inv and dt are kept so synthesized controls
    unscale exactly.
    """

    matrix: np.ndarray
    n: int
    m: int
    n_beta: int
    ctrl_grid: TimeGrid
    Rhalf_inv: np.ndarray
    sqrt_weights: np.ndarray


def _sym_sqrt_inv(R: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(np.asarray(R, dtype=float))
    if np.any(w <= 0):
        raise BadSpec("R must be positive definite")
    return (V * (w**-0.5)) @ V.T


def _phi_ladder(Apath: np.ndarray, grid: TimeGrid, ctrl_grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Phi(0, t) at control-knot midpoints and at tf.

    Constant drift uses exact exponential factors; time-varying drift a
    midpoint-exponential product per segment (coefficients interpolated
    linearly from the state grid).
    """
    n = Apath.shape[1]
    K = ctrl_grid.n_t
    dtc = ctrl_grid.dt
    mids = (np.arange(K) + 0.5) * dtc
    constant = bool(np.all(Apath == Apath[0]))
    Phi_mids = np.empty((K, n, n))
    if constant:
        A0 = Apath[0]
        Eh = expm(-A0 * (0.5 * dtc))
        Ef = Eh @ Eh
        P = Eh.copy()
        for j in range(K):
            Phi_mids[j] = P
            P = P @ Ef
        # step back half a knot from the last midpoint product
        Phi_tf = Phi_mids[-1] @ Eh
    else:
        t_grid = Apath.shape[0] - 1
        dts = grid.dt

        def A_at(t):
            s = min(max(t / dts, 0.0), t_grid - 1e-12)
            i = int(s)
            f = s - i
            return (1.0 - f) * Apath[i] + f * Apath[i + 1]

        pts = np.concatenate([[0.0], mids, [ctrl_grid.tf]])
        P = np.eye(n)
        for j in range(len(pts) - 1):
            seg = pts[j + 1] - pts[j]
            P = P @ expm(-A_at(0.5 * (pts[j] + pts[j + 1])) * seg)
            if j < K:
                Phi_mids[j] = P
        Phi_tf = P
    return Phi_mids, Phi_tf


def assemble_L(
    frozen: list[FrozenLinearSystem],
    prob: EnsembleProblem,
    pgrid: ParameterGrid,
    ctrl_grid: TimeGrid,
) -> tuple[LOperatorMatrix, np.ndarray]:
    """Dense scaled operator matrix and the stacked scaled target xi.

    Per sample and knot the physical column block is the midpoint-rule
    integral Phi(0, mid) B̃(mid) dt; scalings as in LOperatorMatrix.  The
    target is xi(β) = Phi(0, tf, β) X_f(β) − X₀(β), scaled by sqrt(weight).
    """
    if len(frozen) != pgrid.n_beta:
        raise DimensionMismatch(f"{len(frozen)} frozen systems, {pgrid.n_beta} samples")
    n = frozen[0].n
    m = frozen[0].Bpath.shape[2] if frozen[0].Bpath is not None else None
    if m is None:
        raise BadSpec("assemble_L needs frozen systems with the explicit input factor")
    K = ctrl_grid.n_t
    dtc = ctrl_grid.dt
    Rhalf_inv = _sym_sqrt_inv(prob.cost.R)
    sqw = np.sqrt(pgrid.weights)
    grid = frozen[0].grid
    dts = grid.dt
    mids = (np.arange(K) + 0.5) * dtc
    # linear interpolation of B̃ at knot midpoints
    s = np.clip(mids / dts, 0.0, grid.n_t - 1e-12)
    i0 = s.astype(int)
    frac = (s - i0)[:, None, None]

    M = np.empty((n * pgrid.n_beta, m * K))
    xi = np.empty(n * pgrid.n_beta)
    for b in range(pgrid.n_beta):
        fz = frozen[b]
        Bm = (1.0 - frac) * fz.Bpath[i0] + frac * fz.Bpath[i0 + 1]
        Phi_mids, Phi_tf = _phi_ladder(fz.Apath, grid, ctrl_grid)
        cols = np.einsum("kij,kjm,ms->kis", Phi_mids, Bm, Rhalf_inv) * np.sqrt(dtc)
        M[b * n : (b + 1) * n] = sqw[b] * cols.transpose(1, 0, 2).reshape(n, K * m)
        beta = pgrid.samples[b]
        xi[b * n : (b + 1) * n] = sqw[b] * (Phi_tf @ prob.xf_of(beta) - prob.x0_of(beta))
    if not (np.all(np.isfinite(M)) and np.all(np.isfinite(xi))):
        raise NonFiniteState("operator assembly produced non-finite entries")
    return (
        LOperatorMatrix(
            matrix=M, n=n, m=m, n_beta=pgrid.n_beta, ctrl_grid=ctrl_grid,
            Rhalf_inv=Rhalf_inv, sqrt_weights=sqw,
        ),
        xi,
    )


# ---------------------------------------------------------------------------
# SVD synthesis


@dataclass(frozen=True)
class SvdSystem:
    """Spectrum and expansion data of the assembled operator."""

    sigma: np.ndarray
    U: np.ndarray
    Vt: np.ndarray
    coef: np.ndarray  # <xi, u_n>
    N_eps: int
    rank_cap: int
    residual_history: np.ndarray  # residual after N terms, N = 0..len(sigma)

    @property
    def residual(self) -> float:
        return float(self.residual_history[self.N_eps])


def svd_synthesize(
    L: LOperatorMatrix,
    xi: np.ndarray,
    eps: float = 1e-3,
    rcond: float = 1e-8,
) -> tuple[SvdSystem, np.ndarray]:
    """Truncated minimum-energy control u_N = Σ σ_n^{-1} <xi, u_n> v_n.

    N is the smallest term count whose residual ‖xi − L u_N‖ falls to eps,
    capped at the rcond-relative numerical rank.  Raises TargetNotReachable
    when even the full capped expansion leaves more than half of ‖xi‖
    unexplained (the target is outside the numerical range).  Returns the
    physical piecewise-constant control (n_t_ctrl, m) with scalings undone.
    """
    U, s, Vt = np.linalg.svd(L.matrix, full_matrices=False)
    c = U.T @ xi
    xi_norm = float(np.linalg.norm(xi))
    res_sq = np.concatenate([[xi_norm**2], xi_norm**2 - np.cumsum(c**2)])
    residual_history = np.sqrt(np.maximum(res_sq, 0.0))
    positive = s > (rcond * s[0] if s.size and s[0] > 0 else 0.0)
    rank_cap = int(np.count_nonzero(positive))
    if xi_norm > 0 and residual_history[rank_cap] > 0.5 * xi_norm:
        raise TargetNotReachable(
            f"target retains {residual_history[rank_cap] / xi_norm:.1%} of its norm "
            f"outside the numerical range of the input-to-state operator "
            f"(rank {rank_cap})"
        )
    below = np.nonzero(residual_history[: rank_cap + 1] <= eps)[0]
    N = int(below[0]) if below.size else rank_cap
    u_scaled = Vt[:N].T @ (c[:N] / s[:N]) if N > 0 else np.zeros(L.matrix.shape[1])
    upath = (u_scaled.reshape(L.ctrl_grid.n_t, L.m) @ L.Rhalf_inv) / np.sqrt(L.ctrl_grid.dt)
    svd = SvdSystem(
        sigma=s, U=U, Vt=Vt, coef=c, N_eps=N, rank_cap=rank_cap,
        residual_history=residual_history,
    )
    return svd, upath


def controllability_diagnostics(svd: SvdSystem, xi: np.ndarray, threshold: float = 0.5) -> dict:
    """Spectral health report: energy partial sums and out-of-range residual.

    partial_energy[N] = Σ_{n<=N} (coef_n / sigma_n)^2 grows without plateau
    when the target leans on vanishing singular values; rel_out_of_range is
    the fraction of ‖xi‖ outside the numerically usable range.
    """
    usable = svd.sigma[: svd.rank_cap]
    terms = (svd.coef[: svd.rank_cap] / usable) ** 2 if svd.rank_cap else np.zeros(0)
    partial = np.concatenate([[0.0], np.cumsum(terms)])
    xi_norm = float(np.linalg.norm(xi))
    rel = float(svd.residual_history[svd.rank_cap] / xi_norm) if xi_norm > 0 else 0.0
    return {
        "partial_energy": partial,
        "rel_out_of_range": rel,
        "flagged": rel > threshold,
        "rank_cap": svd.rank_cap,
        "sigma_head": svd.sigma[: min(8, svd.sigma.size)].copy(),
    }


# ---------------------------------------------------------------------------
# propagation and the outer loop


@dataclass(frozen=True)
class EnsemblePropagation:
    Xpaths: np.ndarray  # (n_beta, n_t+1, n)
    terminal_errors: np.ndarray  # (n_beta,)
    weighted_terminal: float
    sup_terminal: float


def propagate_ensemble(
    prob: EnsembleProblem,
    pgrid: ParameterGrid,
    upath: np.ndarray,
    ctrl_grid: TimeGrid,
    n_t: int,
    on_eval_grid: bool = False,
) -> EnsemblePropagation:
    """True bilinear propagation of every sample under the held control.

    Each knot is a constant affine system, integrated exactly with one
    augmented matrix exponential and stepped at the state-grid resolution
    (n_t must be a multiple of n_t_ctrl).  on_eval_grid switches to the
    evaluation samples; their trapezoid weights are recomputed (1-d only).
    """
    upath = np.atleast_2d(np.asarray(upath, dtype=float))
    K = ctrl_grid.n_t
    if upath.shape[0] != K:
        raise DimensionMismatch(f"upath must have {K} knot values, got {upath.shape[0]}")
    if n_t % K != 0:
        raise BadSpec(f"n_t = {n_t} must be a multiple of n_t_ctrl = {K}")
    r = n_t // K
    dts = ctrl_grid.tf / n_t
    if on_eval_grid:
        if pgrid.eval_samples is None:
            raise BadSpec("parameter grid has no evaluation samples")
        if pgrid.d != 1:
            raise BadSpec("evaluation-grid propagation implemented for d = 1 only")
        samples = pgrid.eval_samples
        weights = _trapezoid_weights(samples[:, 0])
    else:
        samples, weights = pgrid.samples, pgrid.weights

    n_samp = samples.shape[0]
    sys0 = prob.system_of(samples[0])
    n = sys0.n
    Xpaths = np.empty((n_samp, n_t + 1, n))
    errs = np.empty(n_samp)
    aug = np.zeros((n + 1, n + 1))
    for b in range(n_samp):
        beta = samples[b]
        sysb = prob.system_of(beta)
        y = np.empty(n + 1)
        y[:n] = prob.x0_of(beta)
        y[n] = 1.0
        Xpaths[b, 0] = y[:n]
        node = 0
        for j in range(K):
            uj = upath[j]
            aug[:n, :n] = sysb.A + np.einsum("s,jks->kj", uj, sysb.N)
            aug[:n, n] = sysb.B @ uj
            E = expm(aug * dts)
            for _ in range(r):
                y = E @ y
                node += 1
                Xpaths[b, node] = y[:n]
        errs[b] = float(np.linalg.norm(Xpaths[b, -1] - prob.xf_of(beta)))
    if not np.all(np.isfinite(Xpaths)):
        raise NonFiniteState("ensemble propagation produced non-finite states")
    return EnsemblePropagation(
        Xpaths=Xpaths,
        terminal_errors=errs,
        weighted_terminal=float(np.sqrt(np.sum(weights * errs**2))),
        sup_terminal=float(errs.max()),
    )


def _propagate_frozen(
    frozen: list[FrozenLinearSystem],
    prob: EnsembleProblem,
    pgrid: ParameterGrid,
    upath: np.ndarray,
    ctrl_grid: TimeGrid,
) -> np.ndarray:
    """Response of each frozen linear model to the held control.

    Per state step x -> E x + E_half B̃(mid) u dt with E = expm(A dt)
    (picard drift is constant per sample; time-varying drift falls back to
    a midpoint exponential per step).  Returns paths on the state grid.
    """
    grid = frozen[0].grid
    n_t = grid.n_t
    K = ctrl_grid.n_t
    if n_t % K != 0:
        raise BadSpec(f"n_t = {n_t} must be a multiple of n_t_ctrl = {K}")
    r = n_t // K
    dts = grid.dt
    n = frozen[0].n
    Xpaths = np.empty((pgrid.n_beta, n_t + 1, n))
    for b in range(pgrid.n_beta):
        fz = frozen[b]
        Bmid = 0.5 * (fz.Bpath[:-1] + fz.Bpath[1:])
        const = bool(np.all(fz.Apath == fz.Apath[0]))
        if const:
            Eh = expm(fz.Apath[0] * (0.5 * dts))
            E = Eh @ Eh
        x = prob.x0_of(pgrid.samples[b]).copy()
        Xpaths[b, 0] = x
        for i in range(n_t):
            if not const:
                Eh = expm((0.5 * (fz.Apath[i] + fz.Apath[i + 1])) * (0.5 * dts))
                E = Eh @ Eh
            x = E @ x + Eh @ (Bmid[i] @ upath[i // r]) * dts
            Xpaths[b, i + 1] = x
    if not np.all(np.isfinite(Xpaths)):
        raise NonFiniteState("frozen-linear propagation produced non-finite states")
    return Xpaths


@dataclass(frozen=True)
class EnsembleRecord:
    k: int
    weighted_terminal: float
    sup_terminal: float
    residual: float
    N_eps: int
    rank_cap: int
    sigma_head: tuple
    energy: float
    dX: float


@dataclass(frozen=True)
class EnsembleSolution:
    pgrid: ParameterGrid
    state_grid: TimeGrid
    ctrl_grid: TimeGrid
    upath: np.ndarray
    Xpaths: np.ndarray
    terminal_errors: np.ndarray
    records: list[EnsembleRecord]
    svd: SvdSystem
    converged: bool

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def weighted_terminal(self) -> float:
        return self.records[-1].weighted_terminal if self.records else float("inf")

    @property
    def energy(self) -> float:
        return self.records[-1].energy if self.records else float("nan")


def ensemble_solve(
    prob: EnsembleProblem,
    pgrid: ParameterGrid,
    config: EnsembleConfig = EnsembleConfig(),
    x_init: np.ndarray | None = None,
) -> EnsembleSolution:
    """Outer loop: freeze, assemble, synthesize, propagate, repeat.

    Stops when the terminal error in the configured norm falls below
    tol_terminal; raises NotConverged (with records) after max_iter.
    x_init optionally seeds per-sample trajectories (n_beta, n_t+1, n);
    the default is a straight line per sample.
    """
    grid = TimeGrid(prob.cost.tf, config.n_t)
    ctrl_grid = TimeGrid(prob.cost.tf, config.n_t_ctrl)
    if x_init is None:
        s = (grid.t / grid.tf)[None, :, None]
        X0 = np.stack([prob.x0_of(b) for b in pgrid.samples])[:, None, :]
        Xf = np.stack([prob.xf_of(b) for b in pgrid.samples])[:, None, :]
        Xpaths = (1.0 - s) * X0 + s * Xf
    else:
        Xpaths = np.asarray(x_init, dtype=float)
        n = prob.system_of(pgrid.samples[0]).n
        if Xpaths.shape != (pgrid.n_beta, config.n_t + 1, n):
            raise DimensionMismatch(
                f"x_init must be ({pgrid.n_beta}, {config.n_t + 1}, {n}), got {Xpaths.shape}"
            )

    records: list[EnsembleRecord] = []
    svd = None
    upath = None
    prop = None
    for k in range(1, config.max_iter + 1):
        frozen = freeze_ensemble(prob, Xpaths, None, pgrid, mode=config.mode)
        Lop, xi = assemble_L(frozen, prob, pgrid, ctrl_grid)
        svd, upath = svd_synthesize(Lop, xi, eps=config.eps_value, rcond=config.rcond)
        prop = propagate_ensemble(prob, pgrid, upath, ctrl_grid, config.n_t)
        energy = float(
            ctrl_grid.dt * np.einsum("km,ms,ks->", upath, prob.cost.R, upath)
        )
        if config.update == "frozen":
            Xnew = _propagate_frozen(frozen, prob, pgrid, upath, ctrl_grid)
        else:
            Xnew = prop.Xpaths
        dX = float(np.abs(Xnew - Xpaths).max())
        records.append(
            EnsembleRecord(
                k=k,
                weighted_terminal=prop.weighted_terminal,
                sup_terminal=prop.sup_terminal,
                residual=svd.residual,
                N_eps=svd.N_eps,
                rank_cap=svd.rank_cap,
                sigma_head=tuple(svd.sigma[: max(svd.N_eps, min(8, svd.sigma.size))]),
                energy=energy,
                dX=dX,
            )
        )
        err = prop.weighted_terminal if config.terminal_norm == "l2" else prop.sup_terminal
        Xpaths = Xnew
        if err <= config.tol_terminal:
            return EnsembleSolution(
                pgrid=pgrid, state_grid=grid, ctrl_grid=ctrl_grid, upath=upath,
                Xpaths=prop.Xpaths, terminal_errors=prop.terminal_errors,
                records=records, svd=svd, converged=True,
            )
    raise NotConverged(
        f"ensemble iteration did not reach {config.tol_terminal:.1e} in "
        f"{config.max_iter} iterations (terminal {records[-1].weighted_terminal:.3e})",
        records=records,
    )
