"""Command-line surface: bundles, exit codes, overrides, determinism."""

from __future__ import annotations

import json

import numpy as np
import pytest

from bilinoc.cli import main
from bilinoc.model import BoundaryConditions, TimeGrid
from bilinoc.oracle import gramian_min_energy

POP = {
    "kind": "single",
    "system": {"builtin": "population"},
    "solver": {"n_t": 2000, "tol_terminal": 1e-6, "tol_iterate": 1e-7, "max_iter": 50},
}

HARMONIC_SINGLE = {
    "kind": "single",
    "system": {
        "A": [[0.0, -1.0], [1.0, 0.0]],
        "B": [[0.0], [1.0]],
        "N": [[[0.0], [0.0]], [[0.0], [0.0]]],
    },
    "cost": {"Q": [[0.0, 0.0], [0.0, 0.0]], "R": [[1.0]], "tf": 2.0},
    "bc": {"x0": [0.0, 0.0], "xf": [1.0, 0.0]},
    "solver": {"n_t": 1000, "tol_terminal": 1e-6, "max_iter": 5},
}

HARMONIC_ENSEMBLE = {
    "kind": "ensemble",
    "system": {
        "A0": [[0.0, -1.0], [1.0, 0.0]],
        "A_l": [[[0.0, 0.0], [0.0, 0.0]]],
        "B": [[0.0], [1.0]],
        "N": [[[0.0], [0.0]], [[0.0], [0.0]]],
        "intervals": [[-1.0, 1.0]],
        "n_beta": 3,
        "n_eval": 5,
    },
    "cost": {"Q": [[0.0, 0.0], [0.0, 0.0]], "R": [[1.0]], "tf": 2.0},
    "bc": {"x0": [0.0, 0.0], "xf": [1.0, 0.0]},
    # the 256-knot hold floors the terminal defect near 4e-6; tol sits above it
    "solver": {"n_t": 1024, "n_t_ctrl": 256, "tol_terminal": 1e-5, "eps": 1e-8, "max_iter": 5},
}


def _write(tmp_path, cfg, name="prob.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _first_line(path):
    return path.read_text().splitlines()[0]


# ── solve bundles ─────────────────────────────────────────────────────────────


def test_population_solve_bundle(tmp_path):
    out = tmp_path / "out"
    assert main(["solve", _write(tmp_path, POP), "--out", str(out)]) == 0
    assert _first_line(out / "control.csv") == "t,u1"
    assert _first_line(out / "trajectory.csv") == "t,x1"
    assert _first_line(out / "convergence.csv") == "iter,terminal_error,dx,dK,dSnu,cost,cond_P0"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["converged"] is True
    assert summary["iterations"] <= 50
    assert summary["terminal_error"] <= 1e-6
    assert abs(summary["cost"] - 0.6992452596598638) <= 1e-6
    solver = summary["config"]["solver"]
    assert solver["mode"] == "picard" and solver["alpha"] == 0.0
    assert summary["config"]["system"]["builtin"] == "population"


def test_solve_determinism_byte_identical(tmp_path):
    cfg = _write(tmp_path, POP)
    for out in ("a", "b"):
        assert main(["solve", cfg, "--out", str(tmp_path / out)]) == 0
    for name in ("control.csv", "trajectory.csv", "convergence.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_flag_overrides_echoed(tmp_path):
    # costate freezing coincides with the default on a linear plant, so the
    # override is observable in the echo without changing the solution
    out = tmp_path / "out"
    rc = main([
        "solve", _write(tmp_path, HARMONIC_SINGLE), "--out", str(out),
        "--n-t", "800", "--tol", "1e-5", "--max-iter", "10", "--mode", "costate",
    ])
    assert rc == 0
    solver = json.loads((out / "summary.json").read_text())["config"]["solver"]
    assert solver["n_t"] == 800
    assert solver["tol_terminal"] == 1e-5
    assert solver["max_iter"] == 10
    assert solver["mode"] == "costate"
    assert np.loadtxt(out / "control.csv", delimiter=",", skiprows=1).shape == (801, 2)


# ── oracle cross-check ────────────────────────────────────────────────────────


def test_oracle_diff_report_after_solve(tmp_path):
    cfg = _write(tmp_path, POP)
    out = tmp_path / "out"
    assert main(["solve", cfg, "--out", str(out)]) == 0
    before = (out / "control.csv").read_bytes()
    assert main(["oracle", cfg, "--out", str(out)]) == 0
    diff = json.loads((out / "diff_report.json").read_text())
    assert diff["control_sup_diff"] <= 1e-3
    assert diff["trajectory_sup_diff"] <= 1e-3
    assert diff["cost_abs_diff"] <= 1e-3
    # the prior solve bundle is preserved; the oracle writes its own subdir
    assert (out / "control.csv").read_bytes() == before
    osum = json.loads((out / "oracle" / "summary.json").read_text())
    assert osum["method"] == "shooting"
    assert osum["terminal_error"] <= 1e-8


def test_oracle_standalone_without_prior_bundle(tmp_path):
    out = tmp_path / "fresh"
    assert main(["oracle", _write(tmp_path, POP), "--out", str(out)]) == 0
    assert not (out / "diff_report.json").exists()
    assert (out / "oracle" / "control.csv").exists()


# ── ensemble bundles ──────────────────────────────────────────────────────────


def test_ensemble_bundle_files(tmp_path):
    out = tmp_path / "out"
    assert main(["ensemble", _write(tmp_path, HARMONIC_ENSEMBLE), "--out", str(out)]) == 0
    assert _first_line(out / "control.csv") == "t,u1"
    assert _first_line(out / "trajectory.csv") == "beta,t,x1,x2"
    assert _first_line(out / "spectrum.csv") == "index,sigma,coef,partial_residual"
    assert _first_line(out / "eval_terminal.csv") == "beta,terminal_error,x1,x2"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["converged"] is True and summary["iterations"] == 1
    assert summary["control_energy"] > 0
    assert summary["config"]["n_beta"] == 3
    # eval grid rows: one per evaluation sample, all on target
    eval_rows = np.loadtxt(out / "eval_terminal.csv", delimiter=",", skiprows=1)
    assert eval_rows.shape == (5, 4)
    assert eval_rows[:, 1].max() <= 1e-4


def test_n_beta_one_degenerates_to_gramian(tmp_path):
    cfg = dict(HARMONIC_ENSEMBLE)
    cfg["system"] = {**cfg["system"], "n_eval": 3}
    cfg["solver"] = {"n_t": 4096, "n_t_ctrl": 2048, "tol_terminal": 1e-7, "eps": 1e-9, "max_iter": 10}
    out = tmp_path / "out"
    assert main(["ensemble", _write(tmp_path, cfg), "--out", str(out), "--n-beta", "1"]) == 0
    rows = np.loadtxt(out / "control.csv", delimiter=",", skiprows=1)
    grid = TimeGrid(2.0, 4096)
    A = np.array([[0.0, -1.0], [1.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    u_g, _, _ = gramian_min_energy(
        np.broadcast_to(A, (4097, 2, 2)).copy(),
        np.broadcast_to(B, (4097, 2, 1)).copy(),
        np.eye(1),
        BoundaryConditions(x0=np.zeros(2), xf=np.array([1.0, 0.0])),
        grid,
    )
    u_mid = 0.5 * (u_g[:-1:2] + u_g[2::2])
    assert json.loads((out / "summary.json").read_text())["config"]["n_beta"] == 1
    assert np.abs(rows[:, 1:] - u_mid).max() <= 1e-6


# ── exit codes ────────────────────────────────────────────────────────────────


def test_not_converged_exits_2_without_outputs(tmp_path):
    cfg = dict(POP)
    cfg["solver"] = {**cfg["solver"], "max_iter": 2, "tol_terminal": 1e-12}
    out = tmp_path / "out"
    assert main(["solve", _write(tmp_path, cfg), "--out", str(out)]) == 2
    assert not out.exists()


def test_ensemble_not_converged_exits_2(tmp_path):
    cfg = {
        "kind": "ensemble",
        "system": {
            "builtin": "bloch_ensemble",
            "omega_range": [-1.0, 1.0], "n_beta": 5, "n_eval": 5, "tf": 10.0,
        },
        "solver": {
            "n_t": 1024, "n_t_ctrl": 128, "tol_terminal": 1e-2, "max_iter": 1,
            "update": "frozen", "init": "great-circle",
        },
    }
    out = tmp_path / "out"
    assert main(["ensemble", _write(tmp_path, cfg), "--out", str(out)]) == 2
    assert not out.exists()


def test_malformed_json_exits_3(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    out = tmp_path / "out"
    assert main(["solve", str(path), "--out", str(out)]) == 3
    assert not out.exists()


def test_missing_config_file_exits_3(tmp_path):
    assert main(["solve", str(tmp_path / "absent.json")]) == 3


@pytest.mark.parametrize(
    "mutate",
    [
        lambda c: c.update(extra=1),
        lambda c: c["system"].update(gamma=2.0),
        lambda c: c["solver"].update(momentum=0.9),
        lambda c: c.update(cost={"Q": [[0.0]], "R": [[1.0]], "tf": 2.0}),
        lambda c: c.update(kind="ensemble"),
    ],
)
def test_config_rejections_exit_3(tmp_path, mutate):
    cfg = json.loads(json.dumps(POP))
    mutate(cfg)
    assert main(["solve", _write(tmp_path, cfg), "--out", str(tmp_path / "out")]) == 3


def test_oracle_dimension_cap_exits_3(tmp_path):
    n = 5
    cfg = {
        "kind": "single",
        "system": {
            "A": np.zeros((n, n)).tolist(),
            "B": np.eye(n).tolist(),
            "N": np.zeros((n, n, n)).tolist(),
        },
        "cost": {"Q": np.zeros((n, n)).tolist(), "R": np.eye(n).tolist(), "tf": 1.0},
        "bc": {"x0": [0.0] * n, "xf": [1.0] * n},
        "solver": {"n_t": 200},
    }
    assert main(["oracle", _write(tmp_path, cfg), "--out", str(tmp_path / "out")]) == 3


def test_uncontrollable_plant_exits_4(tmp_path):
    cfg = json.loads(json.dumps(HARMONIC_SINGLE))
    cfg["system"]["B"] = [[0.0], [0.0]]
    assert main(["solve", _write(tmp_path, cfg), "--out", str(tmp_path / "out")]) == 4


# ── validate subcommand ───────────────────────────────────────────────────────


def test_validate_scope_passes(capsys):
    assert main(["validate", "model", "--seed", "3"]) == 0
    text = capsys.readouterr().out
    assert "[PASS]" in text and "[FAIL]" not in text
