import json
from pathlib import Path

import numpy as np
import pytest

from sbm_sir.cli import main


def write_config(path, **kw):
    cfg = {
        "model": {"K": 2, "W": [[5, 1], [1, 10]], "sizes": [200, 200],
                  "eta": 0.5, "gamma": 0.5},
        "init": {"infected": [3, 0]},
        "run": {"mode": "exploration", "n_runs": 5, "horizon": 10,
                "grid": {"start": 0, "stop": 10, "points": 21}, "seed": 7},
        "outputs": {"directory": str(path.parent / "out")},
    }
    for key, val in kw.items():
        cfg[key] = val
    path.write_text(json.dumps(cfg))
    return cfg


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "cfg.json"
    write_config(p)
    return p


def test_simulate_writes_runs_and_stats(cfg_path, tmp_path):
    assert main(["simulate", str(cfg_path)]) == 0
    out = tmp_path / "out"
    assert (out / "ensemble_stats.json").exists()
    runs = sorted(out.glob("run_*.csv"))
    assert len(runs) == 5
    lines = runs[0].read_text().strip().split("\n")
    assert lines[0].startswith("t,S_1")
    assert len(lines) == 22


def test_simulate_single_run_horizon_zero(tmp_path):
    p = tmp_path / "cfg.json"
    write_config(p, run={"mode": "exploration", "n_runs": 1, "horizon": 0,
                         "grid": [0.0], "seed": 1})
    assert main(["simulate", str(p)]) == 0
    csv = (tmp_path / "out" / "run_0000.csv").read_text().strip().split("\n")
    assert len(csv) == 2


def test_byte_identical_reruns(cfg_path, tmp_path):
    main(["simulate", str(cfg_path)])
    first = (tmp_path / "out" / "ensemble_stats.json").read_bytes()
    main(["simulate", str(cfg_path)])
    assert (tmp_path / "out" / "ensemble_stats.json").read_bytes() == first


def test_override_changes_output(cfg_path, tmp_path):
    main(["simulate", str(cfg_path)])
    base = (tmp_path / "out" / "ensemble_stats.json").read_bytes()
    main(["simulate", str(cfg_path), "--run.seed=8"])
    assert (tmp_path / "out" / "ensemble_stats.json").read_bytes() != base


def test_ode_and_compare_pipeline(cfg_path, tmp_path, capsys):
    main(["simulate", str(cfg_path)])
    assert main(["ode", str(cfg_path)]) == 0
    stats = str(tmp_path / "out" / "ensemble_stats.json")
    ode_csv = str(tmp_path / "out" / "ode.csv")
    # small n: generous tolerance passes, absurdly tight one fails
    assert main(["compare", stats, ode_csv, "--tol", "0.5"]) == 0
    report = json.loads(capsys.readouterr().out.strip().split("\n")[-1])
    assert set(report) == {"distances", "tol", "pass"}
    assert main(["compare", stats, ode_csv, "--tol", "1e-12"]) == 1


def test_compare_self_is_exact(cfg_path, tmp_path):
    main(["ode", str(cfg_path)])
    ode_csv = str(tmp_path / "out" / "ode.csv")
    assert main(["compare", ode_csv, ode_csv, "--tol", "1e-300"]) == 0


def test_compare_grid_mismatch(cfg_path, tmp_path, capsys):
    main(["ode", str(cfg_path)])
    p2 = tmp_path / "cfg2.json"
    write_config(p2, run={"mode": "exploration", "n_runs": 1, "horizon": 10,
                          "grid": {"start": 0, "stop": 10, "points": 11}, "seed": 7})
    cfg2 = json.loads(p2.read_text())
    cfg2["outputs"]["directory"] = str(tmp_path / "out2")
    p2.write_text(json.dumps(cfg2))
    main(["ode", str(p2)])
    rc = main(["compare", str(tmp_path / "out" / "ode.csv"),
               str(tmp_path / "out2" / "ode.csv")])
    assert rc == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "GridMismatch"


def test_ode_steady_state_row(cfg_path, tmp_path):
    assert main(["ode", str(cfg_path), "--reff", "--steady-state"]) == 0
    lines = (tmp_path / "out" / "ode.csv").read_text().strip().split("\n")
    assert lines[0].endswith(",reff")
    assert lines[-1].startswith("inf,")
    assert (tmp_path / "out" / "final_size.json").exists()


def test_ode_sensitivity_to_init(cfg_path, tmp_path):
    main(["ode", str(cfg_path)])
    a = (tmp_path / "out" / "ode.csv").read_text()
    main(["ode", str(cfg_path), "--init.infected=[6,0]"])
    b = (tmp_path / "out" / "ode.csv").read_text()
    assert a != b


def test_final_size_stdout_schema(cfg_path, capsys):
    assert main(["final-size", str(cfg_path)]) == 0
    d = json.loads(capsys.readouterr().out.strip())
    assert set(d) == {"s_inf", "q", "theta", "pi", "r0", "residual", "iterations"}
    assert len(d["s_inf"]) == 2


def test_outbreak_subcritical(tmp_path, capsys):
    p = tmp_path / "cfg.json"
    write_config(p, model={"K": 1, "W": [[1.0]], "sizes": [300],
                           "eta": 0.5, "gamma": 0.5},
                 init={"infected": [1]},
                 run={"n_runs": 40, "seed": 3})
    assert main(["outbreak", str(p)]) == 0
    rep = json.loads((tmp_path / "out" / "outbreak.json").read_text())
    assert rep["analytic_outbreak_probability"] == 0.0
    assert rep["outbreak_frequency"] < 0.1
    assert len(rep["final_sizes"]) == 40


def test_sample_graph_kinds(cfg_path, tmp_path):
    for kind in ("sbm", "psbm"):
        out = tmp_path / f"g_{kind}.el"
        assert main(["sample-graph", str(cfg_path), "--kind", kind,
                     "--out", str(out)]) == 0
        header = out.read_text().split("\n")[0]
        assert header.startswith("# n=400 K=2")


def test_usage_errors_exit_two(tmp_path, capsys):
    assert main(["simulate", str(tmp_path / "nope.json")]) == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert "error" in err and "message" in err
    bad = tmp_path / "bad.json"
    write_config(bad, model={"K": 2, "W": [[5, 2], [1, 10]], "sizes": [200, 200],
                             "eta": 0.5, "gamma": 0.5})
    assert main(["simulate", str(bad)]) == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "AsymmetricWError"
