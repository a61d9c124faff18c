import json
import math
import os

import pytest

from hall_edge_lab import __version__
from hall_edge_lab.cli import TASKS, dumps, main, parse_config
from hall_edge_lab.errors import ValidationError

SMALL = {"L": 6, "spinful": False}


def write_config(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def read_json(path):
    with open(path) as f:
        return json.load(f)


def test_chern_output_is_deterministic(tmp_path):
    cfg = {"task": "chern", "model": SMALL, "params": {"grid_n": 12}}
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        assert main(["--config", write_config(tmp_path, cfg), "--out", str(out)]) == 0
        outs.append((out / "chern.json").read_bytes())
    assert outs[0] == outs[1]
    doc = json.loads(outs[0])
    assert doc["result"]["C_per_spin"] == [-1]
    assert doc["meta"]["version"] == __version__
    assert doc["meta"]["grids"] == {"k": 12, "refinement": 24}


def test_unknown_key_exits_2(tmp_path, capsys):
    cfg = {"task": "chern", "model": dict(SMALL, colour="red")}
    assert main(["--config", write_config(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2
    assert "colour" in capsys.readouterr().err


def test_unknown_param_exits_2(tmp_path, capsys):
    cfg = {"task": "rgtrees", "params": {"depth": 3}}
    assert main(["--config", write_config(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2
    assert "depth" in capsys.readouterr().err


def test_unreadable_config_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["--config", str(bad)]) == 2


def test_missing_task_exits_2():
    assert main([]) == 2


def test_numerical_failure_exits_3(tmp_path, capsys):
    crit = 3 * math.sqrt(3) * 0.5
    cfg = {"task": "chern", "model": dict(SMALL, W=crit), "params": {"grid_n": 30}}
    assert main(["--config", write_config(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 3
    assert "GapClosed" in capsys.readouterr().err


def test_config_hash():
    a = parse_config({"task": "chern", "model": SMALL})
    b = parse_config({"task": "chern", "model": SMALL, "output": "elsewhere"})
    c = parse_config({"task": "chern", "model": dict(SMALL, t2=0.4)})
    assert a.hash() == b.hash() != c.hash()
    assert len(a.hash()) == 64


def test_config_round_trip(tmp_path):
    cfg = {"task": "refmodel", "params": {"lambda_ref": 0.3, "v_ref": 1.5}}
    out = tmp_path / "o"
    assert main(["--config", write_config(tmp_path, cfg), "--out", str(out)]) == 0
    doc = read_json(out / "refmodel.json")
    again = parse_config(dict(doc["config"], output=str(out)))
    assert again.hash() == doc["meta"]["config_hash"]
    assert doc["result"]["v_c"] == pytest.approx(1.5 * (1 + 0.1 / math.pi) / (1 - 0.1 / math.pi))


def test_flag_overrides(tmp_path):
    cfg = parse_config({"task": "transport", "params": {"beta": 10.0}})
    assert cfg.params["beta"] == 10.0
    out = tmp_path / "o"
    rc = main(["rgtrees", "--out", str(out), "--seed", "5"])
    assert rc == 0
    assert read_json(out / "rgtrees.json")["config"]["seed"] == 5


def test_bad_eps_sequence_exits_2(tmp_path):
    assert main(["transport", "--eps-seq", "0.1,abc", "--out", str(tmp_path)]) == 2


def test_workers_env(tmp_path, monkeypatch):
    monkeypatch.setenv("HALL_EDGE_LAB_WORKERS", "3")
    out = tmp_path / "o"
    assert main(["refmodel", "--out", str(out)]) == 0
    assert read_json(out / "refmodel.json")["config"]["workers"] == 3
    monkeypatch.setenv("HALL_EDGE_LAB_WORKERS", "x")
    assert main(["refmodel", "--out", str(out)]) == 2


def test_bands_csv_header(tmp_path):
    cfg = {"task": "bands", "model": SMALL, "params": {"grid": 8}}
    out = tmp_path / "o"
    assert main(["--config", write_config(tmp_path, cfg), "--out", str(out)]) == 0
    lines = (out / "bands.csv").read_text().splitlines()
    assert lines[0].startswith(f"# version={__version__} config_hash=")
    assert lines[1] == "k1,branch,spin,energy"
    assert len(lines) == 2 + 8 * 2 * 5


def test_rgflow_and_rgtrees(tmp_path):
    out = tmp_path / "o"
    assert main(["rgflow", "--out", str(out)]) == 0
    flow = read_json(out / "rgflow.json")["result"]
    assert all(flow["envelope"]["within"].values())
    assert flow["nu_fixed_point"]["within_envelope"]
    assert main(["rgtrees", "--out", str(out)]) == 0
    census = read_json(out / "rgtrees.json")["result"]["census"]
    assert census["unlabeled"] == 11


def test_ward_task(tmp_path):
    cfg = {"task": "ward", "model": {"L": 6}, "params": {"samples": 3, "L1": 8}}
    out = tmp_path / "o"
    assert main(["--config", write_config(tmp_path, cfg), "--out", str(out)]) == 0
    assert read_json(out / "ward.json")["result"]["max_relative"] < 1e-10


def test_edge_task(tmp_path):
    cfg = {"task": "edge", "model": {"L": 20}, "params": {"grid": 20}}
    out = tmp_path / "o"
    assert main(["--config", write_config(tmp_path, cfg), "--out", str(out)]) == 0
    doc = read_json(out / "edge.json")
    assert len(doc["result"]["states"]) == 4
    assert os.path.exists(out / "edges.csv")


def test_correlators_task(tmp_path):
    cfg = {"task": "correlators", "model": SMALL, "params": {"L1": 8, "beta": 5.0}}
    out = tmp_path / "o"
    assert main(["--config", write_config(tmp_path, cfg), "--out", str(out)]) == 0
    doc = read_json(out / "correlators.json")
    assert doc["meta"]["grids"] == {"L1": 8}


def test_bad_geometry_exits_2(tmp_path):
    assert main(["ed-check", "--geometry", "two-by-three", "--out", str(tmp_path)]) == 2


def test_dumps_formatting():
    assert dumps({"b": 1.0, "a": [0.1, 2], "c": complex(1, -2)}) == \
        '{"a": [0.10000000000000001, 2], "b": 1.0, "c": {"im": -2.0, "re": 1.0}}'
    assert dumps(float("inf")) == '"inf"'


def test_task_list():
    assert len(TASKS) == 10
    with pytest.raises(ValidationError):
        parse_config({"task": "nope"})
