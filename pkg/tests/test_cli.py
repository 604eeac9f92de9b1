import csv
import json

import numpy as np
import pytest

from hypfill.cli import main
from hypfill.verify import ConfigError, RunConfig

from conftest import cloud


@pytest.fixture
def points_file(tmp_path):
    X = cloud(12, seed=5)
    p = tmp_path / "pts.json"
    p.write_text(json.dumps([{"id": f"p{i}", "coords": list(map(float, x))} for i, x in enumerate(X)]))
    return p


@pytest.fixture
def matrix_file(tmp_path):
    X = cloud(8, seed=2)
    D = np.linalg.norm(X[:, None] - X[None], axis=-1)
    p = tmp_path / "d.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"q{i}" for i in range(len(D))])
        w.writerows(D.tolist())
    return p


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_validate_ok(matrix_file, capsys):
    code, out, _ = run(["validate", matrix_file], capsys)
    assert code == 0
    assert json.loads(out)["points"] == 8


def test_validate_rejects_bad_matrix(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("a,b,c\n0,1,5\n1,0,1\n5,1,0\n")
    code, _, err = run(["validate", p], capsys)
    assert code == 2 and "error" in err


def test_missing_input_is_input_error(tmp_path, capsys):
    assert run(["validate", tmp_path / "nope.csv"], capsys)[0] == 2
    assert run(["validate"], capsys)[0] == 2


def test_bad_tau_is_input_error(points_file, tmp_path, capsys):
    code, _, err = run(["build", points_file, "--tau", "2.5", "-o", tmp_path / "o"], capsys)
    assert code == 2 and "tau" in err


def test_build_writes_graph(points_file, tmp_path, capsys):
    out = tmp_path / "o"
    code, text, _ = run(["build", points_file, "-o", out], capsys)
    assert code == 0
    s = json.loads(text)
    assert (out / "graph.json").exists() and (out / "graph.dot").exists()
    assert len(s["sha256"]) == 64
    # same input, same bytes
    run(["build", points_file, "-o", tmp_path / "o2", "--no-dot"], capsys)
    assert (out / "graph.json").read_bytes() == (tmp_path / "o2" / "graph.json").read_bytes()
    assert not (tmp_path / "o2" / "graph.dot").exists()


def test_verify_full(points_file, tmp_path, capsys):
    out = tmp_path / "v"
    code, text, _ = run(["verify", points_file, "-o", out, "--epsilon", "0.6931471805599453", "--epsilon", "0.35"], capsys)
    assert code == 0 and json.loads(text)["ok"]
    rep = json.loads((out / "report.json").read_text())
    assert set(rep["suites"]) == set(RunConfig().suites)
    assert rep["config"]["epsilons"] == [0.6931471805599453, 0.35]
    with open(out / "pairs.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:2] == ["u", "v"] and len(rows) > 1


def test_verify_deterministic_and_echo(points_file, tmp_path, capsys):
    cfg = {"input": str(points_file), "seed": 11, "delta_mode": "sampled", "delta_samples": 500,
           "suites": ["hyperbolicity", "tripod", "branch_estimate"], "triangle_samples": 50, "pair_samples": 80}
    cf = tmp_path / "cfg.json"
    cf.write_text(json.dumps(cfg))
    bodies = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert run(["verify", "--config", cf, "-o", out], capsys)[0] == 0
        rep = json.loads((out / "report.json").read_text())
        rep.pop("timings")
        rep["config"].pop("out_dir")  # the only field that differs between the two runs
        bodies.append(rep)
    assert bodies[0] == bodies[1]
    echo = bodies[0]["config"]
    for k, v in cfg.items():
        assert echo[k] == v


def test_flags_override_config(points_file, tmp_path, capsys):
    cf = tmp_path / "cfg.json"
    cf.write_text(json.dumps({"input": str(points_file), "seed": 1, "suites": ["height_busemann"]}))
    out = tmp_path / "o"
    assert run(["verify", "--config", cf, "--seed", "9", "-o", out], capsys)[0] == 0
    assert json.loads((out / "report.json").read_text())["config"]["seed"] == 9


def test_config_rejects_unknown_key(tmp_path, capsys):
    cf = tmp_path / "cfg.json"
    cf.write_text(json.dumps({"colour": 1}))
    code, _, err = run(["verify", "--config", cf], capsys)
    assert code == 2 and "colour" in err
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"epsilons": [-1.0]})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"suites": ["exact_invariants", "exact_invariants"]})


def test_verify_reuses_graph(points_file, tmp_path, capsys):
    run(["build", points_file, "-o", tmp_path / "b"], capsys)
    out = tmp_path / "v"
    code, _, _ = run(["verify", "--graph", tmp_path / "b" / "graph.json", "--suite", "exact_invariants", "-o", out], capsys)
    assert code == 0
    assert (out / "graph.json").read_bytes() == (tmp_path / "b" / "graph.json").read_bytes()


def test_epsilon_above_range_warns(points_file, tmp_path, capsys):
    out = tmp_path / "o"
    code, _, _ = run(["verify", points_file, "--epsilon", "1.2", "--suite", "admissibility", "-o", out], capsys)
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["config"]["warnings"]


def test_snowflake_points(points_file, tmp_path, capsys):
    out = tmp_path / "o"
    code, _, _ = run(["verify", points_file, "--theta", "0.5", "-o", out, "--suite", "exact_invariants",
                      "--suite", "starlike"], capsys)
    assert code == 0


def test_oracle_halfplane(tmp_path, capsys):
    code, text, _ = run(["oracle-halfplane", "-o", tmp_path], capsys)
    assert code == 0 and json.loads(text)["passed"]
    assert (tmp_path / "oracle_halfplane.json").exists()
    code, _, _ = run(["oracle-halfplane", "--t", "5"], capsys)
    assert code == 3
