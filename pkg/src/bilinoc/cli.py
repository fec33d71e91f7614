"""Command-line front end: config-driven runs with CSV/JSON artifacts.

Subcommands: solve (single system), ensemble, oracle (shooting
cross-check), validate (invariant suites).  Configs are JSON documents
validated strictly: unknown keys anywhere are a config error.  All output
files are written atomically and deterministically; two runs of the same
config are byte-identical.

Exit codes: 0 success, 1 failed validation check, 2 iteration did not
converge, 3 bad config or problem specification, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import problems
from .ensemble import (
    EnsembleConfig,
    EnsembleProblem,
    ParameterGrid,
    ensemble_solve,
    propagate_ensemble,
    sample_parameters,
)
from .errors import (
    BadInitialTrajectory,
    BadSpec,
    ConfigError,
    DimensionMismatch,
    DimensionTooLarge,
    IterationFailure,
    NonFiniteState,
    NotControllable,
    OracleDiverged,
    OutOfRange,
    TargetNotReachable,
)
from .model import BilinearSystem, BoundaryConditions, QuadraticCost, TimeGrid
from .oracle import shooting_solve
from .solver import SolverConfig, solve
from .validate import SCOPES, run_checks

__all__ = ["main"]

FMT = "%.17g"

_TOP_KEYS = {"kind", "system", "cost", "bc", "solver"}
_COST_KEYS = {"Q", "R", "tf"}
_BC_KEYS = {"x0", "xf"}
_SINGLE_SOLVER_KEYS = {"n_t", "tol_terminal", "tol_iterate", "max_iter", "alpha", "init", "mode"}
_ENSEMBLE_SOLVER_KEYS = {
    "n_t", "n_t_ctrl", "tol_terminal", "max_iter", "mode",
    "eps", "rcond", "init", "update", "terminal_norm",
}
_BUILTIN_PARAMS = {
    "population": set(),
    "bloch": {"omega"},
    "bloch_ensemble": {"omega_range", "n_beta", "n_eval", "tf"},
}
_BUILTIN_KIND = {"population": "single", "bloch": "single", "bloch_ensemble": "ensemble"}
_EXPLICIT_SINGLE_KEYS = {"A", "B", "N"}
_EXPLICIT_ENSEMBLE_KEYS = {"A0", "A_l", "B", "N", "intervals", "n_beta", "n_eval"}

_CONFIG_ERRORS = (
    ConfigError, BadSpec, DimensionMismatch, DimensionTooLarge,
    BadInitialTrajectory, OutOfRange,
)
_NUMERICAL_ERRORS = (NonFiniteState, NotControllable, TargetNotReachable, OracleDiverged)


# ---------------------------------------------------------------------------
# config loading and validation


def _reject_unknown(block: dict, allowed: set, where: str) -> None:
    extra = sorted(set(block) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) {extra} in {where}; allowed: {sorted(allowed)}")


def load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    _reject_unknown(cfg, _TOP_KEYS, "config root")
    kind = cfg.get("kind")
    if kind not in ("single", "ensemble"):
        raise ConfigError(f'kind must be "single" or "ensemble", got {kind!r}')
    if "system" not in cfg or not isinstance(cfg["system"], dict):
        raise ConfigError("config needs a 'system' object")
    return cfg


def _matrix(block: dict, key: str, where: str) -> np.ndarray:
    if key not in block:
        raise ConfigError(f"missing {key!r} in {where}")
    try:
        arr = np.asarray(block[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.{key} is not a numeric array: {exc}") from exc
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{where}.{key} contains non-finite entries")
    return arr


def _cost_from(cfg: dict) -> QuadraticCost:
    block = cfg.get("cost")
    if not isinstance(block, dict):
        raise ConfigError("explicit systems need a 'cost' object with Q, R, tf")
    _reject_unknown(block, _COST_KEYS, "cost")
    Q = _matrix(block, "Q", "cost")
    R = _matrix(block, "R", "cost")
    if "tf" not in block:
        raise ConfigError("missing 'tf' in cost")
    return QuadraticCost(Q=Q, R=R, tf=float(block["tf"]))


def _bc_from(cfg: dict) -> BoundaryConditions:
    block = cfg.get("bc")
    if not isinstance(block, dict):
        raise ConfigError("explicit systems need a 'bc' object with x0, xf")
    _reject_unknown(block, _BC_KEYS, "bc")
    return BoundaryConditions(x0=_matrix(block, "x0", "bc"), xf=_matrix(block, "xf", "bc"))


def _solver_block(cfg: dict, kind: str, overrides: dict) -> dict:
    block = dict(cfg.get("solver", {}))
    allowed = _SINGLE_SOLVER_KEYS if kind == "single" else _ENSEMBLE_SOLVER_KEYS
    _reject_unknown(block, allowed, "solver")
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "n_beta":
            continue
        if key not in allowed:
            raise ConfigError(f"flag --{key.replace('_', '-')} does not apply to kind={kind!r}")
        block[key] = value
    return block


def _builtin_name(cfg: dict, kind: str):
    system = cfg["system"]
    if "builtin" not in system:
        return None
    name = system["builtin"]
    if name not in _BUILTIN_PARAMS:
        raise ConfigError(f"unknown builtin {name!r}; have {sorted(_BUILTIN_PARAMS)}")
    if _BUILTIN_KIND[name] != kind:
        raise ConfigError(f"builtin {name!r} requires kind={_BUILTIN_KIND[name]!r}")
    _reject_unknown(system, {"builtin"} | _BUILTIN_PARAMS[name], "system")
    for blk in ("cost", "bc"):
        if blk in cfg:
            raise ConfigError(f"builtin systems define their own {blk!r}; remove that block")
    return name


def resolve_single(cfg: dict, overrides: dict):
    """Returns (sys, cost, bc, SolverConfig, x_init, system_echo)."""
    if cfg["kind"] != "single":
        raise ConfigError("this command needs a kind='single' config")
    system = cfg["system"]
    name = _builtin_name(cfg, "single")
    if name == "population":
        sys_, cost, bc = problems.population()
        echo = {"builtin": "population"}
    elif name == "bloch":
        omega = float(system.get("omega", 0.5))
        sys_, cost, bc = problems.bloch(omega=omega)
        echo = {"builtin": "bloch", "omega": omega}
    else:
        _reject_unknown(system, _EXPLICIT_SINGLE_KEYS, "system")
        sys_ = BilinearSystem(
            A=_matrix(system, "A", "system"),
            B=_matrix(system, "B", "system"),
            N=_matrix(system, "N", "system"),
        )
        cost = _cost_from(cfg)
        bc = _bc_from(cfg)
        echo = {"A": sys_.A.tolist(), "B": sys_.B.tolist(), "N": sys_.N.tolist()}

    block = _solver_block(cfg, "single", overrides)
    init = block.pop("init", "straight-line")
    kwargs = {k: block[k] for k in ("n_t", "tol_terminal", "tol_iterate", "max_iter", "alpha", "mode") if k in block}
    for k in ("n_t", "max_iter"):
        if k in kwargs:
            kwargs[k] = int(kwargs[k])
    scfg = SolverConfig(init="straight-line" if init == "great-circle" else init, **kwargs)
    x_init = None
    if init == "great-circle":
        if sys_.n != 3:
            raise ConfigError("init 'great-circle' needs a 3-state system")
        x_init = problems.great_circle_path(TimeGrid(cost.tf, scfg.n_t))
    return sys_, cost, bc, scfg, x_init, echo


def _midpoint_grid(intervals, eval_counts=None) -> ParameterGrid:
    pairs = [intervals] if np.ndim(intervals[0]) == 0 else list(intervals)
    mids = np.array([[0.5 * (float(lo) + float(hi)) for lo, hi in pairs]])
    eval_samples = None
    if eval_counts is not None:
        eval_samples = sample_parameters(pairs, [max(2, int(eval_counts))] * len(pairs)).samples
    return ParameterGrid(samples=mids, weights=np.ones(1), eval_samples=eval_samples)


def resolve_ensemble(cfg: dict, overrides: dict):
    """Returns (prob, pgrid, EnsembleConfig, x_init, init, system_echo)."""
    if cfg["kind"] != "ensemble":
        raise ConfigError("this command needs a kind='ensemble' config")
    system = cfg["system"]
    name = _builtin_name(cfg, "ensemble")
    n_beta_override = overrides.get("n_beta")
    if name == "bloch_ensemble":
        omega_range = tuple(float(v) for v in system.get("omega_range", (-1.0, 1.0)))
        n_beta = int(n_beta_override or system.get("n_beta", 21))
        n_eval = int(system.get("n_eval", 141))
        tf = float(system.get("tf", 10.0))
        prob = problems.bloch_ensemble(omega_range=omega_range, tf=tf)
        if n_beta == 1:
            pgrid = _midpoint_grid(omega_range, n_eval)
        else:
            pgrid = problems.bloch_ensemble_grid(n_beta=n_beta, n_eval=n_eval, omega_range=omega_range)
        echo = {
            "builtin": "bloch_ensemble", "omega_range": list(omega_range),
            "n_beta": n_beta, "n_eval": n_eval, "tf": tf,
        }
    else:
        _reject_unknown(system, _EXPLICIT_ENSEMBLE_KEYS, "system")
        A0 = _matrix(system, "A0", "system")
        A_l = [np.asarray(a, dtype=float) for a in system.get("A_l", [])]
        B = _matrix(system, "B", "system")
        N = _matrix(system, "N", "system")
        intervals = system.get("intervals")
        if intervals is None:
            raise ConfigError("explicit ensembles need 'intervals' in system")
        if len(A_l) != (1 if np.ndim(intervals[0]) == 0 else len(intervals)):
            raise ConfigError("need one A_l matrix per parameter interval")
        cost = _cost_from(cfg)
        bc = _bc_from(cfg)

        def system_of(beta, A0=A0, A_l=A_l, B=B, N=N):
            A = A0 + sum(float(b) * Al for b, Al in zip(np.atleast_1d(beta), A_l))
            return BilinearSystem(A=A, B=B, N=N)

        prob = EnsembleProblem(
            system_of=system_of, cost=cost,
            x0_of=lambda beta: bc.x0, xf_of=lambda beta: bc.xf,
        )
        n_beta = int(n_beta_override or system.get("n_beta", 21))
        n_eval = system.get("n_eval")
        if n_beta == 1:
            pgrid = _midpoint_grid(intervals, n_eval)
        else:
            pgrid = sample_parameters(intervals, n_beta, eval_counts=n_eval)
        echo = {
            "A0": A0.tolist(), "A_l": [a.tolist() for a in A_l],
            "B": B.tolist(), "N": N.tolist(),
            "intervals": intervals, "n_beta": n_beta,
        }
        if n_eval is not None:
            echo["n_eval"] = int(n_eval)
        echo["bc"] = {"x0": bc.x0.tolist(), "xf": bc.xf.tolist()}

    block = _solver_block(cfg, "ensemble", overrides)
    init = block.pop("init", "straight-line")
    kwargs = {
        k: block[k]
        for k in ("n_t", "n_t_ctrl", "tol_terminal", "max_iter", "eps", "rcond", "mode", "terminal_norm", "update")
        if k in block
    }
    for k in ("n_t", "n_t_ctrl", "max_iter"):
        if k in kwargs:
            kwargs[k] = int(kwargs[k])
    ecfg = EnsembleConfig(**kwargs)
    x_init = None
    if init == "great-circle":
        gc = problems.great_circle_path(TimeGrid(prob.cost.tf, ecfg.n_t))
        if gc.shape[1] != 3:
            raise ConfigError("init 'great-circle' needs a 3-state system")
        x_init = np.broadcast_to(gc, (pgrid.n_beta,) + gc.shape).copy()
    elif init != "straight-line":
        raise ConfigError(f"ensemble init must be 'straight-line' or 'great-circle', got {init!r}")
    return prob, pgrid, ecfg, x_init, init, echo


# ---------------------------------------------------------------------------
# deterministic artifact writers


def _write_atomic(path: str, text: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_csv(path: str, header: list, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(FMT % float(v) for v in row))
    _write_atomic(path, "\n".join(lines) + "\n")


def _write_json(path: str, obj) -> None:
    _write_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _echo_solver_single(scfg: SolverConfig, init: str) -> dict:
    return {
        "n_t": scfg.n_t, "tol_terminal": scfg.tol_terminal,
        "tol_iterate": scfg.tol_iterate, "max_iter": scfg.max_iter,
        "alpha": scfg.alpha, "init": init, "mode": scfg.mode,
    }


def _echo_solver_ensemble(ecfg: EnsembleConfig, init: str) -> dict:
    return {
        "n_t": ecfg.n_t, "n_t_ctrl": ecfg.n_t_ctrl,
        "tol_terminal": ecfg.tol_terminal, "max_iter": ecfg.max_iter,
        "eps": ecfg.eps_value, "rcond": ecfg.rcond, "mode": ecfg.mode,
        "terminal_norm": ecfg.terminal_norm, "update": ecfg.update, "init": init,
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    overrides = {
        "n_t": args.n_t, "tol_terminal": args.tol, "max_iter": args.max_iter,
        "alpha": args.alpha, "mode": args.mode,
    }
    sys_, cost, bc, scfg, x_init, sys_echo = resolve_single(cfg, overrides)
    sol = solve(sys_, cost, bc, scfg, x_init=x_init)

    os.makedirs(args.out, exist_ok=True)
    t = sol.grid.t
    _write_csv(
        os.path.join(args.out, "control.csv"),
        ["t"] + [f"u{i + 1}" for i in range(sys_.m)],
        np.column_stack([t, sol.upath]),
    )
    _write_csv(
        os.path.join(args.out, "trajectory.csv"),
        ["t"] + [f"x{i + 1}" for i in range(sys_.n)],
        np.column_stack([t, sol.xpath]),
    )
    _write_csv(
        os.path.join(args.out, "convergence.csv"),
        ["iter", "terminal_error", "dx", "dK", "dSnu", "cost", "cond_P0"],
        [[r.k, r.terminal_error, r.dx, r.dK, r.dSnu, r.cost, r.cond_P0] for r in sol.records],
    )
    last = sol.records[-1]
    summary = {
        "converged": sol.converged,
        "iterations": sol.iterations,
        "cost": last.cost,
        "terminal_error": last.terminal_error,
        "config": {
            "kind": "single",
            "system": sys_echo,
            "cost": {"Q": cost.Q.tolist(), "R": cost.R.tolist(), "tf": cost.tf},
            "bc": {"x0": bc.x0.tolist(), "xf": bc.xf.tolist()},
            "solver": _echo_solver_single(scfg, "great-circle" if x_init is not None else scfg.init),
        },
    }
    _write_json(os.path.join(args.out, "summary.json"), summary)
    print(
        f"converged in {sol.iterations} iterations: terminal error "
        f"{last.terminal_error:.3e}, cost {last.cost:.8f} -> {args.out}/"
    )
    return 0


def cmd_ensemble(args) -> int:
    cfg = load_config(args.config)
    overrides = {
        "n_t": args.n_t, "tol_terminal": args.tol, "max_iter": args.max_iter,
        "mode": args.mode, "eps": args.eps, "rcond": args.rcond, "n_beta": args.n_beta,
    }
    prob, pgrid, ecfg, x_init, init, sys_echo = resolve_ensemble(cfg, overrides)
    sol = ensemble_solve(prob, pgrid, ecfg, x_init=x_init)

    os.makedirs(args.out, exist_ok=True)
    K, m = sol.upath.shape
    knots = np.arange(K) * sol.ctrl_grid.dt
    _write_csv(
        os.path.join(args.out, "control.csv"),
        ["t"] + [f"u{i + 1}" for i in range(m)],
        np.column_stack([knots, sol.upath]),
    )
    n = sol.Xpaths.shape[2]
    t = sol.state_grid.t
    rows = np.empty((pgrid.n_beta * t.size, 2 + n))
    for b in range(pgrid.n_beta):
        rows[b * t.size : (b + 1) * t.size, 0] = pgrid.samples[b, 0]
        rows[b * t.size : (b + 1) * t.size, 1] = t
        rows[b * t.size : (b + 1) * t.size, 2:] = sol.Xpaths[b]
    _write_csv(
        os.path.join(args.out, "trajectory.csv"),
        ["beta", "t"] + [f"x{i + 1}" for i in range(n)],
        rows,
    )
    conv_rows = []
    for r in sol.records:
        cond = r.sigma_head[0] / r.sigma_head[min(r.N_eps, len(r.sigma_head)) - 1]
        conv_rows.append([r.k, r.weighted_terminal, r.dX, 0.0, 0.0, 0.5 * r.energy, cond])
    _write_csv(
        os.path.join(args.out, "convergence.csv"),
        ["iter", "terminal_error", "dx", "dK", "dSnu", "cost", "cond_P0"],
        conv_rows,
    )
    svd = sol.svd
    _write_csv(
        os.path.join(args.out, "spectrum.csv"),
        ["index", "sigma", "coef", "partial_residual"],
        [
            [i + 1, svd.sigma[i], svd.coef[i], svd.residual_history[i + 1]]
            for i in range(svd.sigma.size)
        ],
    )
    if pgrid.eval_samples is not None:
        eprop = propagate_ensemble(
            prob, pgrid, sol.upath, sol.ctrl_grid, ecfg.n_t, on_eval_grid=True
        )
        betas, Xe = pgrid.eval_samples, eprop.Xpaths
    else:
        betas, Xe = pgrid.samples, sol.Xpaths
        eprop = None
    errs = eprop.terminal_errors if eprop is not None else sol.terminal_errors
    _write_csv(
        os.path.join(args.out, "eval_terminal.csv"),
        ["beta", "terminal_error"] + [f"x{i + 1}" for i in range(n)],
        np.column_stack([betas[:, 0], errs, Xe[:, -1, :]]),
    )
    last = sol.records[-1]
    summary = {
        "converged": sol.converged,
        "iterations": sol.iterations,
        "cost": 0.5 * last.energy,
        "terminal_error": last.weighted_terminal,
        "sup_terminal_error": last.sup_terminal,
        "control_energy": last.energy,
        "expansion_terms": last.N_eps,
        "rank_cap": last.rank_cap,
        "config": {
            "kind": "ensemble",
            "system": sys_echo,
            "cost": {"Q": prob.cost.Q.tolist(), "R": prob.cost.R.tolist(), "tf": prob.cost.tf},
            "n_beta": pgrid.n_beta,
            "solver": _echo_solver_ensemble(ecfg, init),
        },
    }
    _write_json(os.path.join(args.out, "summary.json"), summary)
    print(
        f"converged in {sol.iterations} iterations: weighted terminal error "
        f"{last.weighted_terminal:.3e}, energy {last.energy:.6f} -> {args.out}/"
    )
    return 0


def _read_csv_matrix(path: str) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    sys_, cost, bc, scfg, _, _ = resolve_single(cfg, {})
    grid = TimeGrid(cost.tf, scfg.n_t)
    shot = shooting_solve(sys_, cost, bc, grid=grid)

    os.makedirs(args.out, exist_ok=True)
    diff = None
    prior_control = os.path.join(args.out, "control.csv")
    if os.path.exists(prior_control):
        prior = _read_csv_matrix(prior_control)
        if prior.shape == (grid.n_t + 1, 1 + sys_.m):
            diff = {"control_sup_diff": float(np.abs(prior[:, 1:] - shot.upath).max())}
            prior_traj = os.path.join(args.out, "trajectory.csv")
            if os.path.exists(prior_traj):
                ptraj = _read_csv_matrix(prior_traj)
                if ptraj.shape == (grid.n_t + 1, 1 + sys_.n):
                    diff["trajectory_sup_diff"] = float(np.abs(ptraj[:, 1:] - shot.xpath).max())
            prior_summary = os.path.join(args.out, "summary.json")
            if os.path.exists(prior_summary):
                with open(prior_summary, encoding="utf-8") as fh:
                    diff["cost_abs_diff"] = abs(float(json.load(fh)["cost"]) - shot.J)
        else:
            diff = {"note": f"prior control.csv has shape {prior.shape}, expected {(grid.n_t + 1, 1 + sys_.m)}"}
        _write_json(os.path.join(args.out, "diff_report.json"), diff)

    odir = os.path.join(args.out, "oracle")
    os.makedirs(odir, exist_ok=True)
    _write_csv(
        os.path.join(odir, "control.csv"),
        ["t"] + [f"u{i + 1}" for i in range(sys_.m)],
        np.column_stack([grid.t, shot.upath]),
    )
    _write_csv(
        os.path.join(odir, "trajectory.csv"),
        ["t"] + [f"x{i + 1}" for i in range(sys_.n)],
        np.column_stack([grid.t, shot.xpath]),
    )
    _write_json(
        os.path.join(odir, "summary.json"),
        {
            "converged": True,
            "iterations": shot.newton_iters,
            "cost": shot.J,
            "terminal_error": shot.terminal_defect,
            "method": "shooting",
        },
    )
    line = f"shooting: {shot.newton_iters} Newton steps, terminal defect {shot.terminal_defect:.3e}, cost {shot.J:.8f}"
    if diff is not None and "control_sup_diff" in diff:
        line += f"; control sup diff vs prior solve {diff['control_sup_diff']:.3e}"
    print(line + f" -> {odir}/")
    return 0


def cmd_validate(args) -> int:
    t0 = time.perf_counter()
    results = run_checks(scope=args.scope, seed=args.seed)
    width = max(len(r.name) for r in results)
    fails = 0
    for r in results:
        if r.passed is None:
            tag = "info"
        elif r.passed:
            tag = "PASS"
        else:
            tag, fails = "FAIL", fails + 1
        tol = "" if np.isnan(r.tolerance) else f" (tol {r.tolerance:.3g})"
        extra = f"  [{r.detail}]" if r.detail else ""
        print(f"[{tag}] {r.scope:<8s} {r.name:<{width}s} {r.value:.6e}{tol}{extra}")
    n_hard = sum(1 for r in results if r.passed is not None)
    print(f"{n_hard - fails}/{n_hard} checks passed in {time.perf_counter() - t0:.1f}s")
    return 1 if fails else 0


# ---------------------------------------------------------------------------


def _add_common(p, ensemble: bool):
    p.add_argument("config", help="JSON problem configuration")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--n-t", dest="n_t", type=int, default=None)
    p.add_argument("--tol", type=float, default=None, help="terminal tolerance override")
    p.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p.add_argument("--mode", choices=("picard", "costate"), default=None)
    if ensemble:
        p.add_argument("--eps", type=float, default=None, help="expansion truncation threshold")
        p.add_argument("--rcond", type=float, default=None)
        p.add_argument("--n-beta", dest="n_beta", type=int, default=None)
    else:
        p.add_argument("--alpha", type=float, default=None, help="iterate-norm weight")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="bilinoc",
        description="Fixed-endpoint quadratic optimal control of bilinear systems and ensembles.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a single-system problem")
    _add_common(p, ensemble=False)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("ensemble", help="solve an ensemble problem")
    _add_common(p, ensemble=True)
    p.set_defaults(fn=cmd_ensemble)

    p = sub.add_parser("oracle", help="cross-check a single-system problem by shooting")
    p.add_argument("config")
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("validate", help="run the invariant suites")
    p.add_argument("scope", nargs="?", default="all", choices=("all",) + SCOPES)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except IterationFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
