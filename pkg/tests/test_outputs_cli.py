import json
import math
import os
import subprocess
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from ipmix import __version__, cli
from ipmix.outputs import (atomic_write_text, canonical_json, config_hash, provenance, read_csv,
                           write_csv, write_json)


def run(args, tmp_path, name="out"):
    out = tmp_path / name
    code = cli.main(list(args) + ["--output", str(out)])
    return code, out


def test_plain_conversion_and_hash():
    doc = canonical_json({"b": np.int64(3), "a": Fraction(1, 3), "c": Fraction(4), "d": float("inf"),
                          "e": np.array([1.5, 2.0]), "f": (np.bool_(True),)})
    assert doc == '{"a":"1/3","b":3,"c":4,"d":"inf","e":[1.5,2.0],"f":[true]}'
    assert config_hash({"n": 1, "output": "x", "workers": 4}) == config_hash({"n": 1, "output": "y"})
    assert config_hash({"n": 1}) != config_hash({"n": 2})
    p = provenance("graph", {"n": 1}, 5)
    assert p["version"] == __version__ and p["seed"] == 5 and len(p["config_hash"]) == 16


def test_csv_roundtrip(tmp_path):
    prov = provenance("x", {}, 1)
    path = write_csv(tmp_path / "a.csv", "demo/1", ["t", "v"], [(1, 0.1), (2, 1 / 3)], prov)
    tags, cols, rows = read_csv(path)
    assert tags["schema"] == "demo/1" and tags["seed"] == "1" and tags["config_hash"] == prov["config_hash"]
    assert cols == ["t", "v"] and float(rows[1][1]) == 1 / 3
    j = json.loads(write_json(tmp_path / "a.json", {"x": Fraction(1, 2)}, prov).read_text())
    assert j["result"]["x"] == "1/2" and j["provenance"] == prov


def test_atomic_write_leaves_no_temp(tmp_path):
    p = tmp_path / "sub" / "f.txt"
    atomic_write_text(p, "one")
    atomic_write_text(p, "two")
    assert p.read_text() == "two"
    assert [x.name for x in p.parent.iterdir()] == ["f.txt"]


@pytest.mark.parametrize("args", [
    ["graph", "--kind", "symmetrized", "--n", "6", "--m", "3"],
    ["simulate", "--n", "40", "--m", "5", "--t", "0,1000,100000", "--replicas", "500",
     "--trajectory", "2000", "--stride", "100"],
    ["lumped", "--chain", "bl", "--n", "2000", "--m", "50", "--eps", "0.1,0.25"],
    ["lumped", "--chain", "pair", "--n", "50", "--m", "10"],
    ["moments", "--n", "8", "--m", "4", "--t", "10,1000", "--replicas", "2000"],
    ["bounds", "--n", "1000", "--m", "100", "--exact"],
    ["couple", "--n", "40", "--m", "5", "--replicas", "200"],
    ["profile", "--n", "1000", "--m", "30", "--cutoff", "0.1:0.9"],
    ["exclusion", "--n", "60", "--k", "6", "--replicas", "1000", "--negcorr-replicas", "1000"],
    ["bbb", "--n", "50", "--m", "3", "--K", "3"],
    ["compare", "--n", "40", "--m", "4", "--replicas", "500"],
])
def test_every_command_writes_outputs(args, tmp_path, capsys):
    code, out = run(args + ["--format", "csv,json,svg,png"], tmp_path)
    assert code == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith(args[0] + ":") and "\n" not in line
    doc = json.loads((out / f"{args[0]}.json").read_text())
    assert doc["provenance"]["command"] == args[0]
    assert (out / f"{args[0]}.svg").stat().st_size > 0
    assert (out / f"{args[0]}.png").read_bytes()[:4] == b"\x89PNG"
    tags, cols, rows = read_csv(out / f"{args[0]}.csv")
    assert tags["config_hash"] == doc["provenance"]["config_hash"] and rows


def test_bbb_report(tmp_path):
    code, out = run(["bbb", "--n", "50", "--m", "3", "--K", "3"], tmp_path)
    r = json.loads((out / "bbb.json").read_text())["result"]
    assert code == 0 and r["W"] == [51, 52, 53] and r["boundary"] == 1


def test_lumped_report(tmp_path):
    code, out = run(["lumped", "--n", "100000", "--m", "400"], tmp_path)
    r = json.loads((out / "lumped.json").read_text())["result"]
    assert code == 0 and r["regime"] == "large_m" and 0.9 <= r["ratio"]["0.25"] <= 1.1


def test_byte_identical_reruns(tmp_path):
    args = ["moments", "--n", "30", "--m", "12", "--t", "5000", "--replicas", "20000", "--seed", "7"]
    _, a = run(args + ["--workers", "1"], tmp_path, "a")
    _, b = run(args, tmp_path, "b")
    for f in ("moments.csv", "moments.json", "moments.svg"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    _, c = run(args[:-1] + ["8"], tmp_path, "c")
    assert (a / "moments.csv").read_bytes() != (c / "moments.csv").read_bytes()
    cli._set_workers(0)


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "bbb", "seed": 3, "params": {"n": 50, "m": 3, "K": 3}}))
    code, out = run(["--config", str(cfg)], tmp_path, "a")
    assert code == 0
    doc = json.loads((out / "bbb.json").read_text())
    assert doc["result"]["W"] == [51, 52, 53] and doc["provenance"]["seed"] == 3
    # command line wins over the file
    code, out = run(["bbb", "--config", str(cfg), "--K", "1"], tmp_path, "b")
    assert json.loads((out / "bbb.json").read_text())["result"]["K"] == 1
    cfg.write_text(json.dumps({"command": "bbb", "params": {"n": 50, "m": 3, "bogus": 1}}))
    assert run(["--config", str(cfg)], tmp_path)[0] == 2
    assert run(["--config", str(tmp_path / "missing.json")], tmp_path)[0] == 2


@pytest.mark.parametrize("args", [
    ["lumped", "--n", "10", "--m", "20"],
    ["lumped", "--n", "10", "--m", "2", "--eps", "1.5"],
    ["simulate", "--n", "10", "--m", "2", "--replicas", "1"],
    ["couple", "--n", "20", "--m", "10"],
    ["bbb", "--n", "10", "--m", "3", "--K", "9"],
    ["exclusion", "--n", "10", "--k", "1"],
    ["graph", "--n", "5", "--format", "pdf"],
    ["nosuch"],
    [],
])
def test_validation_exit_code(args, tmp_path, capsys):
    assert run(args, tmp_path)[0] == 2
    assert not (tmp_path / "out").exists() or not any((tmp_path / "out").iterdir())


def test_invariant_exit_code(tmp_path, monkeypatch):
    from ipmix.lumped import InvariantViolation

    def boom(args, rep):
        raise InvariantViolation("broken")
    monkeypatch.setitem(cli.HANDLERS, "graph", boom)
    assert run(["graph", "--n", "5"], tmp_path)[0] == 3

    def other(args, rep):
        raise RuntimeError("x")
    monkeypatch.setitem(cli.HANDLERS, "graph", other)
    assert run(["graph", "--n", "5"], tmp_path)[0] == 1


def test_module_entry_point_and_env(tmp_path):
    env = dict(os.environ, IPMIX_OUTPUT=str(tmp_path / "env"))
    p = subprocess.run([sys.executable, "-m", "ipmix", "graph", "--n", "4", "--m", "2"],
                       capture_output=True, text=True, env=env, cwd=tmp_path)
    assert p.returncode == 0, p.stderr
    assert (tmp_path / "env" / "graph.json").exists()
    assert "TBB" not in p.stderr
    p = subprocess.run([sys.executable, "-m", "ipmix"], capture_output=True, text=True, cwd=tmp_path)
    assert p.returncode == 2 and "usage" in p.stderr
