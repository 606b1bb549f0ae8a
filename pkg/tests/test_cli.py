import json
import subprocess
import sys

import numpy as np
import pytest
import yaml
from scipy.spatial.distance import pdist

from covshift.cli import load_schema, main
from covshift.experiments import exponential_trend_pattern
from covshift.geom import Window
from covshift.raster import Grid, ScalarField, read_ascii_grid, write_ascii_grid
from covshift.rng import stream


def write_cfg(path, cfg):
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


@pytest.fixture(scope="module")
def p1_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("p1")
    cfg = write_cfg(d / "sim.yaml", {"model": "P1", "seed": 7, "output_dir": "data"})
    assert main(["simulate", cfg]) == 0
    return d


def test_simulate_files(p1_dir):
    data = p1_dir / "data"
    assert (data / "pattern.csv").read_text().startswith("x,y\n")
    for name in ("C1", "C2", "Z1", "Z2", "Z3", "intensity"):
        assert (data / f"{name}.asc").exists()


def test_simulate_deterministic(tmp_path):
    outs = []
    for k in range(2):
        cfg = write_cfg(tmp_path / f"s{k}.yaml", {"model": "P1", "seed": 7, "output_dir": f"out{k}", "write_fields": False})
        assert main(["simulate", cfg]) == 0
        outs.append((tmp_path / f"out{k}" / "pattern.csv").read_bytes())
    assert outs[0] == outs[1]


def test_simulate_h1_hardcore(tmp_path):
    cfg = write_cfg(tmp_path / "h.yaml", {"model": "H1", "seed": 3, "output_dir": "h"})
    assert main(["simulate", cfg]) == 0
    xy = np.loadtxt(tmp_path / "h" / "pattern.csv", delimiter=",", skiprows=1)
    assert pdist(xy).min() >= 0.01


def test_simulate_l1_star_cells(tmp_path):
    cfg = write_cfg(tmp_path / "l.yaml", {"model": "L1*", "params": {"b": 1.0}, "seed": 3, "output_dir": "l"})
    assert main(["simulate", cfg]) == 0
    c1, c2, z3 = (read_ascii_grid(tmp_path / "l" / f"{n}.asc") for n in ("C1", "C2", "Z3"))
    assert np.array_equal(c2.values, c1.values + 1.0 * z3.values)


def test_simulate_unknown_model(tmp_path):
    cfg = write_cfg(tmp_path / "u.yaml", {"model": "Q9", "output_dir": "u"})
    assert main(["simulate", cfg]) == 2


def _test_cfg(d, **extra):
    cfg = {
        "pattern": {"csv": "data/pattern.csv", "window": [0, 0, 1, 1]},
        "covariates": {"C1": "data/C1.asc", "C2": "data/C2.asc"},
        "interest": "C2",
        "nuisance": ["C1"],
        "seed": 4,
        "test": {"n_shifts": 999},
    }
    cfg.update(extra)
    return cfg


def test_cmd_test_report(p1_dir, capsys):
    cfg = write_cfg(p1_dir / "t.yaml", _test_cfg(p1_dir))
    assert main(["test", cfg]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert 0 < rep["p_value"] <= 1
    assert len(rep["statistics"]) == 1000
    assert rep["interest"] == "C2" and rep["nuisance"] == ["C1"]


def test_cmd_test_byte_identical(p1_dir):
    cfg = write_cfg(p1_dir / "t2.yaml", _test_cfg(p1_dir, test={"n_shifts": 199, "correction": "variance"}))
    assert main(["test", cfg, "-o", str(p1_dir / "a.json")]) == 0
    assert main(["test", cfg, "-o", str(p1_dir / "b.json")]) == 0
    assert (p1_dir / "a.json").read_bytes() == (p1_dir / "b.json").read_bytes()


def test_seed_override_changes_result(p1_dir):
    cfg = write_cfg(p1_dir / "t3.yaml", _test_cfg(p1_dir, test={"n_shifts": 99}))
    main(["test", cfg, "-o", str(p1_dir / "s1.json")])
    main(["test", cfg, "--seed", "99", "-o", str(p1_dir / "s2.json")])
    a = json.loads((p1_dir / "s1.json").read_text())
    b = json.loads((p1_dir / "s2.json").read_text())
    assert a["seed"] == 4 and b["seed"] == 99 and a["shifts"] != b["shifts"]


def test_not_covering_grid_exit_2(p1_dir, tmp_path, caplog):
    small = Grid.for_window(Window.rectangle(0, 0, 0.5, 0.5), 16)
    write_ascii_grid(ScalarField.constant(1.0, small), tmp_path / "small.asc")
    cfg = _test_cfg(p1_dir)
    cfg["covariates"] = {"C1": str(p1_dir / "data" / "C1.asc"), "C2": str(tmp_path / "small.asc")}
    cfg["pattern"]["csv"] = str(p1_dir / "data" / "pattern.csv")
    path = write_cfg(tmp_path / "bad.yaml", cfg)
    assert main(["test", path]) == 2
    assert "small.asc" in caplog.text


def test_misaligned_grid_names_file(p1_dir, tmp_path, caplog):
    g = Grid.for_window(Window.unit_square(), 64)
    write_ascii_grid(ScalarField.constant(1.0, g), tmp_path / "coarse.asc")
    cfg = _test_cfg(p1_dir)
    cfg["covariates"] = {"C1": str(p1_dir / "data" / "C1.asc"), "C2": str(tmp_path / "coarse.asc")}
    cfg["pattern"]["csv"] = str(p1_dir / "data" / "pattern.csv")
    assert main(["test", write_cfg(tmp_path / "mis.yaml", cfg)]) == 2
    assert "coarse.asc" in caplog.text and "not aligned" in caplog.text


def test_schema_rejects_unknown_key(p1_dir, tmp_path):
    cfg = _test_cfg(p1_dir, bogus=1)
    assert main(["test", write_cfg(tmp_path / "x.yaml", cfg)]) == 2
    cfg = _test_cfg(p1_dir, test={"n_shifts": 5})
    assert main(["test", write_cfg(tmp_path / "y.yaml", cfg)]) == 2


def test_missing_files_exit_2(tmp_path):
    assert main(["test", str(tmp_path / "nope.yaml")]) == 2
    cfg = {"pattern": {"csv": "missing.csv"}, "covariates": {"C": "missing.asc"}, "interest": "C"}
    assert main(["test", write_cfg(tmp_path / "m.yaml", cfg)]) == 2


def test_unknown_covariate_exit_2(p1_dir, tmp_path):
    cfg = _test_cfg(p1_dir, interest="C7")
    cfg["covariates"] = {k: str(p1_dir / v) for k, v in cfg["covariates"].items()}
    cfg["pattern"]["csv"] = str(p1_dir / "data" / "pattern.csv")
    assert main(["test", write_cfg(tmp_path / "c7.yaml", cfg)]) == 2


@pytest.fixture(scope="module")
def trend_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("trend")
    p = exponential_trend_pattern(4.0, 200, stream(1, "cli-trend"))
    p.to_csv(d / "pattern.csv")
    g = Grid.for_window(Window.unit_square(), 128)
    write_ascii_grid(ScalarField.from_function(lambda x, y: x, g), d / "x.asc")
    write_ascii_grid(ScalarField.constant(2.0, g), d / "flat.asc")
    return d


def test_cmd_corr(trend_dir, capsys):
    cfg = {"pattern": {"csv": "pattern.csv"}, "covariates": {"x": "x.asc", "flat": "flat.asc"}, "seed": 1}
    assert main(["corr", write_cfg(trend_dir / "corr.yaml", cfg)]) == 0
    rep = json.loads(capsys.readouterr().out)
    rows = {r["name"]: r for r in rep["covariates"]}
    assert rows["flat"]["tau"] == 0
    assert rows["x"]["tau"] > 0.8
    assert rows["x"]["tau_bandwidth"] == 0.5
    assert rows["x"]["tau_partial_bandwidth"] > 0


def test_cmd_select(p1_dir, capsys):
    cfg = {
        "pattern": {"csv": "data/pattern.csv"},
        "covariates": {"C1": "data/C1.asc", "C2": "data/C2.asc"},
        "seed": 2,
        "test": {"n_shifts": 199},
    }
    assert main(["select", write_cfg(p1_dir / "sel.yaml", cfg)]) == 0
    out = capsys.readouterr()
    rep = json.loads(out.out)
    assert "C1" in rep["final"]
    assert out.err.splitlines()[0].startswith("covariate")


def test_cmd_replicate(tmp_path, capsys):
    cfg = {"model": "P1", "tests": ["cwr/n/tor", "wald"], "reps": 4, "n_shifts": 19, "seed": 5, "csv": "rates.csv"}
    assert main(["replicate", write_cfg(tmp_path / "r.yaml", cfg)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert [r["test"] for r in rep["rows"]] == ["cwr/n/tor", "wald"]
    assert (tmp_path / "rates.csv").read_text().startswith("model,test")


def test_replicate_bad_label_exit_2(tmp_path):
    cfg = {"model": "P1", "tests": ["cwr/z/tor"], "reps": 2}
    assert main(["replicate", write_cfg(tmp_path / "r.yaml", cfg)]) == 2


def test_reports_follow_published_schemas():
    for cmd in ("test", "corr", "select", "simulate", "replicate"):
        assert load_schema(f"report_{cmd}")["type"] == "object"
        assert load_schema(f"config_{cmd}")["additionalProperties"] is False


def test_console_entry_point(p1_dir):
    out = subprocess.run([sys.executable, "-m", "covshift", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "simulate" in out.stdout
