import json

import jsonschema
import numpy as np
import pytest

from parsearch import io
from parsearch.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, EXIT_SOLVER, main, parse_config
from parsearch.grid import GridSpec

COARSE = ["--h", "0.05"]


def run(argv):
    return main([str(a) for a in argv])


def load(path):
    return json.loads(path.read_text())


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    out = tmp_path_factory.mktemp("solve")
    assert run(["solve", "--mode", "parallel", "--d", 2, "--c", 1, *COARSE, "--out", out,
                "--probe", "0,0", "--probe", "5,0"]) == EXIT_OK
    return out


def test_solve_artifacts(solved):
    for name in ("field.csv", "boundary.json", "diagnostics.json", "boundary_nodes.csv",
                 "diagonal_profile.csv"):
        assert (solved / name).exists(), name
    assert not (solved / "policy.csv").exists()
    header = (solved / "field.csv").read_text().splitlines()[0]
    assert header == "x1,x2,u,g,contact"
    diag = load(solved / "diagnostics.json")
    assert diag["probes"][1]["u"] == 5.0
    assert diag["solver"]["converged"]


@pytest.mark.parametrize("name, schema", [
    ("boundary.json", "boundary"),
    ("diagnostics.json", "diagnostics"),
])
def test_reports_validate(solved, name, schema):
    jsonschema.validate(load(solved / name), io.load_schema(schema))


def test_field_csv_round_trip(solved):
    grid = io.grid_from_json(load(solved / "diagnostics.json")["grid"])
    u, contact = io.read_field_csv(solved / "field.csv", grid)
    assert u[grid.nearest_index((5.0, 0.0))] == 5.0
    assert contact[grid.nearest_index((-3.0, -3.0))]
    assert not contact[grid.nearest_index((0.0, 0.0))]


def test_reports_are_reproducible(solved, tmp_path):
    assert run(["solve", "--mode", "parallel", "--d", 2, "--c", 1, *COARSE, "--out", tmp_path,
                "--probe", "0,0", "--probe", "5,0"]) == EXIT_OK
    for name in ("boundary.json", "diagnostics.json"):
        a, b = load(solved / name), load(tmp_path / name)
        assert json.dumps(io.strip_meta(a), sort_keys=True) == json.dumps(io.strip_meta(b), sort_keys=True)
    assert (solved / "field.csv").read_bytes() == (tmp_path / "field.csv").read_bytes()


def test_hybrid_regime_is_a_config_error(tmp_path, capsys):
    rc = run(["solve", "--mode", "hybrid", "--d", 2, "--c", 1, "--cprime", 0.4, "--out", tmp_path])
    assert rc == EXIT_CONFIG
    assert "c/2 < cprime < c" in capsys.readouterr().err


def test_refinement_pair(tmp_path):
    vals = []
    for h in (0.05, 0.025):
        out = tmp_path / str(h)
        assert run(["solve", "--c", 1, "--h", h, "--out", out, "--probe", "0,0"]) == EXIT_OK
        vals.append(load(out / "diagnostics.json")["probes"][0]["u"])
    assert 0 < abs(vals[1] - vals[0]) < 1e-3


def test_nonconvergence_exit_code(tmp_path):
    assert run(["solve", *COARSE, "--max-iters", 3, "--out", tmp_path]) == EXIT_SOLVER


def test_sequential_solve_writes_policy(tmp_path):
    assert run(["solve", "--mode", "sequential", "--cprime", 0.5, *COARSE, "--out", tmp_path]) == EXIT_OK
    lines = (tmp_path / "policy.csv").read_text().splitlines()
    assert lines[0] == "x1,x2,code,action"
    actions = {ln.rsplit(",", 1)[1] for ln in lines[1:]}
    assert actions <= {"STOP", "SEARCH_1", "SEARCH_2"}


def test_simulate_from_artifacts(solved, capsys):
    argv = ["simulate", "--out", solved, "--probe", "0,0", "--probe", "5,0", "--paths", 3000,
            "--seed", 42, "--dt", 1e-3]
    assert run(argv) == EXIT_OK
    first = load(solved / "simulate.json")
    jsonschema.validate(first, io.load_schema("simulate"))
    assert run(argv) == EXIT_OK
    second = load(solved / "simulate.json")
    assert io.strip_meta(first) == io.strip_meta(second)
    contact = first["probes"][1]["estimate"]
    assert contact["mean"] == 5.0 and contact["mean_tau"] == 0.0
    origin = first["probes"][0]
    assert abs(origin["difference"]) <= 3 * origin["estimate"]["stderr"] + 0.02


def test_simulate_without_artifacts(tmp_path):
    assert run(["simulate", "--out", tmp_path / "missing"]) == EXIT_CONFIG


def test_simulate_solve_first_policy(tmp_path):
    rc = run(["simulate", "--solve-first", "--mode", "hybrid", "--cprime", 0.7, *COARSE, "--out", tmp_path,
              "--paths", 2000, "--dt", 1e-3])
    assert rc == EXIT_OK
    doc = load(tmp_path / "simulate.json")
    assert doc["mode"] == "hybrid"


def test_verify_single_check(tmp_path):
    rc = run(["verify", "--only", "star_shaped", "--h", 0.025, "--out", tmp_path])
    assert rc == EXIT_OK
    doc = load(tmp_path / "verify.json")
    jsonschema.validate(doc, io.load_schema("verify"))
    assert [c["name"] for c in doc["checks"]] == ["star_shaped"]


def test_verify_fault_injection(tmp_path):
    rc = run(["verify", "--only", "diagonal_lower_bound", "--only", "sandwich", "--only", "axis_distance",
              "--allowance-scale", 0, "--h", 0.025, "--out", tmp_path])
    assert rc == EXIT_FAIL
    doc = load(tmp_path / "verify.json")
    assert "diagonal_lower_bound" in doc["failed"]
    assert doc["passed"] is False


def test_verify_rejects_unknown_check(tmp_path):
    assert run(["verify", "--only", "nonsense", "--out", tmp_path]) == EXIT_CONFIG


def test_highdim_report(tmp_path):
    assert run(["highdim", "--d", 3, "--out", tmp_path]) == EXIT_OK
    doc = load(tmp_path / "highdim.json")
    jsonschema.validate(doc, io.load_schema("highdim"))
    assert doc["monotonicity"] == "pass"
    assert [e["d"] for e in doc["estimates"]] == [1, 2, 3]


def test_config_file_and_flag_precedence(tmp_path, monkeypatch):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("# comment\nc = 2\nh = 0.01\nprobe = 0,0; 1,1\nsolve_first = yes\n")
    cfg, _ = parse_config(["solve", "--config", str(cfg_file), "--h", "0.02"])
    assert cfg.c == 2.0 and cfg.h == 0.02
    assert cfg.probe == [[0.0, 0.0], [1.0, 1.0]]
    assert cfg.solve_first is True
    monkeypatch.setenv("PARSEARCH_OUT", str(tmp_path / "envout"))
    cfg, _ = parse_config(["solve"])
    assert cfg.out == str(tmp_path / "envout")
    cfg, _ = parse_config(["solve", "--out", "explicit"])
    assert cfg.out == "explicit"


@pytest.mark.parametrize("text", ["c = abc\n", "bogus = 1\n", "no equals sign\n"])
def test_bad_config_file(tmp_path, text):
    f = tmp_path / "bad.cfg"
    f.write_text(text)
    assert run(["solve", "--config", f, "--out", tmp_path]) == EXIT_CONFIG


@pytest.mark.parametrize("argv", [
    ["solve", "--c", "-1"],
    ["solve", "--mode", "sequential"],
    ["solve", "--omega", "2.5"],
    ["solve", "--probe", "1,2,3"],
    ["solve", "--h", "0.7"],
    ["simulate", "--paths", "0"],
])
def test_config_errors(argv, tmp_path):
    assert run(argv + ["--out", tmp_path]) == EXIT_CONFIG


def test_io_error_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run(["solve", *COARSE, "--out", blocker / "sub"]) == 4


def test_write_json_isolates_meta(tmp_path):
    doc = io.write_json(tmp_path / "a.json", {"x": np.float64(1.5), "flag": np.bool_(True), "bad": float("nan")})
    assert doc["x"] == 1.5 and doc["flag"] is True and doc["bad"] is None
    assert "created" in load(tmp_path / "a.json")["meta"]


def test_csv_floats_keep_17_digits(tmp_path):
    io.write_points_csv(tmp_path / "p.csv", [[0.1, 1 / 3]], ["x1", "x2"])
    row = (tmp_path / "p.csv").read_text().splitlines()[1]
    assert [float(v) for v in row.split(",")] == [0.1, 1 / 3]


def test_read_field_csv_checks_size(solved):
    with pytest.raises(ValueError):
        io.read_field_csv(solved / "field.csv", GridSpec.cube(2, 0.0, 1.0, 0.5))


def test_highdim_h_sets_top_chart_mesh(tmp_path):
    assert run(["highdim", "--d", 2, "--h", 0.01, "--out", tmp_path]) == EXIT_OK
    est = load(tmp_path / "highdim.json")["estimates"]
    assert est[1]["h"] == 0.01 and est[0]["h"] == 1 / 400
