import csv
import json
import os

import numpy as np
import pytest

from bfmixed import cli, solver as solver_mod
from bfmixed.cli import ConfigError, RunConfig, load_config, main, run_convergence_study, run_simulation
from bfmixed.io import VTK_HEADER, read_vtk_cell_scalars, write_vtk
from bfmixed.mesh import generate_structured
from bfmixed.postprocess import cell_fields

from conftest import example1_run


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def write_json(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


# -- configuration ---------------------------------------------------------------

def test_defaults_are_example1():
    cfg = load_config()
    assert cfg.problem == "example1" and cfg.order == 0
    assert (cfg.nu, cfg.alpha, cfg.F, cfg.p) == (1.0, 1.0, 10.0, 3.0)


@pytest.mark.parametrize("data,name", [
    ({"problem": "stokes"}, "problem"),
    ({"order": 2}, "order"),
    ({"levels": []}, "levels"),
    ({"levels": [4, 0]}, "levels"),
    ({"levels": [4.5]}, "levels"),
    ({"dt": -1e-3}, "dt"),
    ({"T": 0}, "T"),
    ({"nu": 0}, "nu"),
    ({"p": 5}, "p"),
    ({"problem": "cavity", "alpha_sweep": []}, "alpha_sweep"),
    ({"problem": "cavity", "F_sweep": [1, -2]}, "F_sweep"),
    ({"F_sweep": [1, 2]}, "F_sweep"),
    ({"emit": ["png"]}, "emit"),
    ({"colour": "red"}, "colour"),
])
def test_config_rejection_names_field(tmp_path, data, name):
    with pytest.raises(ConfigError) as info:
        load_config(write_json(tmp_path, data))
    assert str(info.value).startswith(name + ":")


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{levels: [4")
    with pytest.raises(ConfigError, match="config"):
        load_config(str(path))


def test_overrides_take_precedence(tmp_path):
    cfg = load_config(write_json(tmp_path, {"levels": [4, 8], "order": 1}), levels=[2], order=None)
    assert cfg.levels == [2] and cfg.order == 1


def test_sweep_order():
    cfg = RunConfig(problem="cavity", alpha_sweep=[1, 10], F_sweep=[1, 100]).validate()
    assert cfg.sweep == [(1, 1), (1, 100), (10, 1), (10, 100)]
    assert RunConfig(problem="cavity", alpha=2.0, F=3.0).validate().sweep == [(2.0, 3.0)]


# -- convergence study -----------------------------------------------------------

def test_convergence_two_levels(tmp_path):
    cfg = RunConfig(levels=[4, 8], order=0, out=str(tmp_path)).validate()
    report = run_convergence_study(cfg)
    assert len(report.levels) == 2
    rows = read_csv(tmp_path / "convergence_k0.csv")
    assert rows[0] == cli.TABLE_HEADER
    assert rows[0][:4] == ["DOF", "h", "e_sigma_X", "rate_e_sigma_X"] and rows[0][-1] == "iter"
    assert len(rows) == 3
    assert all(rows[1][3 + 2 * i] == "" for i in range(5))
    assert all(rows[2][3 + 2 * i] != "" for i in range(5))
    mant = rows[1][2].split("E")[0]
    assert len(mant.replace(".", "").lstrip("-")) == 4
    raw = read_csv(tmp_path / "convergence_k0_raw.csv")
    assert float(raw[2][2]) == report.levels[1].e_sigma_X


def test_convergence_requires_manufactured_solution(tmp_path):
    with pytest.raises(ConfigError, match="problem"):
        run_convergence_study(RunConfig(problem="cavity", out=str(tmp_path)).validate())


def test_outputs_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["--levels", "4,8", "--out", str(d)]) == 0
    for name in ("convergence_k0.csv", "convergence_k0_raw.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


# -- simulations -----------------------------------------------------------------

def test_cavity_run_completes(tmp_path):
    cfg = RunConfig(problem="cavity", levels=[32], alpha=1.0, F=1.0, out=str(tmp_path), emit=[]).validate()
    (alpha, F, disc, final, reports), = run_simulation(cfg)
    assert len(reports) == 100 and all(r.converged for r in reports)
    assert final.step == 100 and final.t == pytest.approx(1.0)
    assert os.listdir(tmp_path) == []


def test_emit_none_writes_nothing(tmp_path):
    out = tmp_path / "out"
    assert main(["simulate", "--problem", "cavity", "--levels", "4", "--emit", "none", "--out", str(out)]) == 0
    assert not out.exists()


def test_sweep_profiles_columns(tmp_path):
    data = {"problem": "cavity", "levels": [4], "T": 0.05, "F_sweep": [1, 10, 100, 1000],
            "emit": ["profiles", "csv", "vtk"], "profile_samples": 8, "out": str(tmp_path)}
    assert main(["--config", write_json(tmp_path, data)]) == 0
    rows = read_csv(tmp_path / "cavity_profiles.csv")
    assert rows[0] == ["y", "alpha=1;F=1", "alpha=1;F=10", "alpha=1;F=100", "alpha=1;F=1000"]
    assert len(rows) == 9
    assert len(read_csv(tmp_path / "cavity_summary.csv")) == 5
    assert sorted(p for p in os.listdir(tmp_path) if p.endswith(".vtk"))[0].startswith("cavity_a1_F1")


def test_custom_problem(tmp_path):
    data = {"problem": "custom", "levels": [4], "dt": 0.1, "T": 0.2, "domain": [0, 2, 0, 1],
            "dirichlet": {"left": [0.5, 0.0], "right": [0.5, 0.0], "top": [0, 0], "bottom": [0, 0]},
            "regions": [{"rect": [0.5, 1.5, 0, 1], "alpha": 50.0, "F": 1.0}], "emit": ["csv"],
            "out": str(tmp_path)}
    cfg = load_config(write_json(tmp_path, data))
    (_, _, disc, final, reports), = run_simulation(cfg)
    assert len(reports) == 2 and np.abs(final.u).max() > 0
    assert set(np.unique(disc.alpha)) == {1.0, 50.0}
    header = read_csv(tmp_path / "custom_summary.csv")[0]
    assert header[-2:] == ["mean_speed_background", "mean_speed_region0"]


def test_custom_bad_region(tmp_path):
    data = {"problem": "custom", "levels": [2], "regions": [{"rect": [0, 1, 0, 1]}]}
    assert main(["--config", write_json(tmp_path, data)]) == cli.EXIT_CONFIG


# -- exit codes ------------------------------------------------------------------

def test_exit_config_error(tmp_path, capsys):
    assert main(["convergence", "--problem", "cavity", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "configuration error: problem" in capsys.readouterr().err


def test_exit_solver_failure(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(solver_mod, "NEWTON_TOL", -1.0)
    code = main(["--problem", "cavity", "--levels", "2", "--out", str(tmp_path)])
    assert code == cli.EXIT_SOLVER
    assert "step 1" in capsys.readouterr().err


def test_exit_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["--levels", "2", "--out", str(blocker / "sub")]) == cli.EXIT_IO


# -- writers ---------------------------------------------------------------------

def test_vtk_output(tmp_path):
    pb, disc, _, states, _ = example1_run(4, 1)
    fields = cell_fields(disc, states[-1])
    path = tmp_path / "f.vtk"
    write_vtk(pb.mesh, fields, path)
    lines = path.read_text().splitlines()
    assert lines[0] == VTK_HEADER == "# vtk DataFile Version 3.0"
    assert f"CELLS {pb.mesh.n_cells} {4 * pb.mesh.n_cells}" in lines
    assert f"CELL_DATA {pb.mesh.n_cells}" in lines
    back = read_vtk_cell_scalars(path)
    assert set(back) == set(fields)
    for k, v in fields.items():
        np.testing.assert_array_equal(back[k], v)
    with pytest.raises(ValueError):
        write_vtk(pb.mesh, {"bad": np.zeros(3)}, tmp_path / "g.vtk")
    with pytest.raises(OSError):
        write_vtk(pb.mesh, fields, tmp_path / "missing" / "f.vtk")


def test_vtk_roundtrip_bit_exact(tmp_path, rng):
    mesh = generate_structured(3, 2)
    vals = {"a": rng.standard_normal(mesh.n_cells) * 10.0 ** rng.integers(-300, 300, mesh.n_cells)}
    write_vtk(mesh, vals, tmp_path / "r.vtk")
    np.testing.assert_array_equal(read_vtk_cell_scalars(tmp_path / "r.vtk")["a"], vals["a"])


def test_write_profiles(tmp_path):
    y = np.linspace(0.05, 0.95, 10)
    zero = np.column_stack([y, np.zeros(10)])
    cli.write_profiles([zero], ["alpha=1;F=1"], tmp_path / "z.csv")
    rows = read_csv(tmp_path / "z.csv")
    assert rows[0] == ["y", "alpha=1;F=1"] and all(float(r[1]) == 0.0 for r in rows[1:])
    profs = [np.column_stack([y, y * F]) for F in (1, 10, 100, 1000)]
    labels = [f"alpha=1;F={F}" for F in (1, 10, 100, 1000)]
    cli.write_profiles(profs, labels, tmp_path / "s.csv")
    rows = read_csv(tmp_path / "s.csv")
    assert len(rows[0]) == 5 and rows[0][1:] == labels
    assert [float(v) for v in rows[2][1:]] == [y[1] * F for F in (1, 10, 100, 1000)]
    bad = np.column_stack([y + 0.01, y])
    with pytest.raises(ConfigError):
        cli.write_profiles([zero, bad], ["a", "b"], tmp_path / "m.csv")
