"""Subcommand behavior, exit codes, and byte-stable outputs."""

import json

import pytest

import roughheat.cli as cli
from roughheat.cli import main
from roughheat.scheme import DivergenceError


def write_cfg(tmp_path, name="cfg.json", **over):
    raw = {
        "kind": "solve", "K": 4, "G": 8, "a": 1.0, "c": 0.0,
        "driver": {"H": 0.5, "m": 1, "n_f": 6},
        "f": ["tanh"],
        "psi": {"kind": "mode", "k": 1, "amplitude": 0.5},
        "gamma": 0.45, "gamma_prime": 0.75,
        "n_min": 1, "n_max": 4, "seeds": [0], "q_off": 2,
        "out": str(tmp_path / "out"),
    }
    raw.update(over)
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return path


def test_partition_prints_worked_example(capsys):
    assert main(["partition", "--N", "38"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "M=5"
    assert out[1] == "A=19,29,34,36"


def test_partition_trace_table(tmp_path):
    out = tmp_path / "p"
    assert main(["partition", "--N", "38", "--out", str(out)]) == 0
    lines = (out / "trace.csv").read_text().splitlines()
    assert lines[0] == "N,r,A_r,slack"
    rows = [line.split(",") for line in lines[1:]]
    assert [int(r[1]) for r in rows] == [1, 2, 3, 4, 5]
    assert [int(r[2]) for r in rows] == [19, 29, 34, 36, 37]
    assert all(0.0 <= float(r[3]) <= 1.0 for r in rows)


def test_partition_sweep(tmp_path):
    out = tmp_path / "p"
    assert main(["partition", "--sweep", "64", "--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "N,weighted_sum"
    assert [int(line.split(",")[0]) for line in lines[1:]] == [16, 32, 64]
    # sweep output goes to files, so it refuses to run without a directory
    assert main(["partition", "--sweep", "64"]) == 1


def test_partition_needs_some_request():
    assert main(["partition"]) == 1


def test_validate_driver_passes(capsys):
    assert main(["validate-driver", "--H", "0.5", "--seeds", "2", "--n-f", "7"]) == 0
    out = capsys.readouterr().out
    assert "ito" in out and "geometric" in out and "worst" in out
    assert main(["validate-driver", "--H", "0.5", "--seeds", "0"]) == 1


def test_solve_outputs_are_byte_stable(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["solve", "--config", str(cfg)]) == 0
    base = tmp_path / "out" / "trajectory_seed0"
    csv1 = (base.with_suffix(".csv")).read_bytes()
    meta = json.loads(base.with_suffix(".meta.json").read_text())
    assert meta["n"] == 4 and meta["K"] == 4 and meta["seed"] == 0
    assert meta["driver"] == "fbm(H=0.5,m=1,n_f=6)"

    lines = csv1.decode().splitlines()
    assert lines[0] == "# K=4 G=8 representation=spectral"
    assert lines[1] == "t,c1,c2,c3,c4"
    assert len(lines) == 2 + 17  # header lines plus the level-4 grid

    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "redo")]) == 0
    csv2 = (tmp_path / "redo" / "trajectory_seed0.csv").read_bytes()
    assert csv1 == csv2


def test_flag_overrides(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["solve", "--config", str(cfg), "--seed-list", "5",
                 "--levels", "2..3", "--quad-offset", "1",
                 "--out", str(tmp_path / "o2")]) == 0
    meta = json.loads((tmp_path / "o2" / "trajectory_seed5.meta.json").read_text())
    assert meta["n"] == 3 and meta["seed"] == 5

    assert main(["solve", "--config", str(cfg), "--levels", "three"]) == 1
    assert main(["solve", "--config", str(cfg), "--seed-list", "1;2"]) == 1


def test_convergence_writes_rates_and_report(tmp_path, capsys):
    cfg = write_cfg(tmp_path, kind="convergence")
    assert main(["convergence", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "beta_hat=" in out and "beta_max=0.2000" in out
    lines = (tmp_path / "out" / "rates.csv").read_text().splitlines()
    assert lines[0] == "level,error"
    assert [int(line.split(",")[0]) for line in lines[1:]] == [1, 2, 3, 4]
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["levels"] == [1, 2, 3, 4]
    assert rep["exact"] is False
    assert len(rep["per_seed"]) == 1


def test_convergence_report_nan_becomes_null(tmp_path):
    cfg = write_cfg(tmp_path, kind="convergence", f=["zero"])
    assert main(["convergence", "--config", str(cfg)]) == 0
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["exact"] is True
    assert rep["beta_hat"] is None


def test_continuity_cli(tmp_path, capsys):
    cfg = write_cfg(tmp_path, kind="continuity", K=16, G=32,
                    psi={"kind": "decay", "amplitude": 1.0, "rate": 1.0},
                    f=[{"name": "sin", "beta": 1.0}],
                    driver={"H": 0.5, "m": 1, "n_f": 8}, n_min=2, n_max=5)
    assert main(["continuity", "--config", str(cfg), "--eps", "1e-2,1e-3"]) == 0
    assert "mean ratio" in capsys.readouterr().out
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["eps"] == [0.01, 0.001]
    lines = (tmp_path / "out" / "ratios.csv").read_text().splitlines()
    assert lines[0] == "eps,mean_ratio" and len(lines) == 3

    assert main(["continuity", "--config", str(cfg), "--eps", "small"]) == 1


def test_ito_compare_cli(tmp_path):
    cfg = write_cfg(tmp_path, kind="ito-compare", K=16, G=32, a=0.5,
                    psi={"kind": "decay", "amplitude": 1.0, "rate": 1.0},
                    f=[{"name": "sin", "beta": 1.0}],
                    driver={"H": 0.5, "m": 1, "n_f": 8},
                    n_min=5, n_max=7, q_off=1, seeds=[0, 1])
    assert main(["ito-compare", "--config", str(cfg)]) == 0
    lines = (tmp_path / "out" / "gaps.csv").read_text().splitlines()
    assert lines[0] == "level,ms_gap"
    assert [int(line.split(",")[0]) for line in lines[1:]] == [5, 6, 7]
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["enhancement_times"] == [0.25, 0.5, 0.75, 1.0]


def test_missing_field_exits_one(tmp_path, capsys):
    raw = json.loads(write_cfg(tmp_path).read_text())
    del raw["gamma_prime"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(raw))
    assert main(["solve", "--config", str(bad)]) == 1
    assert "gamma_prime" in capsys.readouterr().err


def test_unreadable_configs_exit_one(tmp_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "nope.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    assert main(["solve", "--config", str(bad)]) == 1
    assert "<json>" in capsys.readouterr().err


def test_usage_errors_exit_one(capsys):
    assert main(["frobnicate"]) == 1
    assert main(["solve"]) == 1  # --config is required
    assert main(["--help"]) == 0
    capsys.readouterr()


def test_divergence_exit_code(tmp_path, monkeypatch, capsys):
    # registry fields are bounded, so a diverging run needs to be injected
    def explode(prob, n):
        raise DivergenceError(3, 1e20)

    monkeypatch.setattr(cli, "solve", explode)
    assert main(["solve", "--config", str(write_cfg(tmp_path))]) == 2
    assert "diverged at step 3" in capsys.readouterr().err
