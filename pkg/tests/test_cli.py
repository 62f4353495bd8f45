"""Configuration schema and the command line."""

import json
import subprocess
import sys

import pytest

from kappaflow.cli import main
from kappaflow.config import ConfigError, RunConfig, config_from_dict, load_config
from kappaflow.fields import Field


def write(tmp_path, data, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def small_translation(tmp_path, **extra):
    cfg = {
        "domain": {"kind": "disk"},
        "grid": {"n1": 16, "n2": 16},
        "physics": {"sigma": 0.0, "mode": "kappa_sigma0_transport", "taylor_override": True},
        "time": {"t_end": 0.05},
        "initial": {"kind": "translation", "velocity": [0.3, 0.0]},
        "output": {"dir": str(tmp_path / "out")},
    }
    cfg.update(extra)
    return cfg


def test_defaults_validate():
    cfg = RunConfig().validate()
    assert cfg.domain.charts == 8
    assert config_from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


@pytest.mark.parametrize("data", [
    {"grid": {"n1": 16, "n3": 4}},
    {"physics": {"sigma": "one"}},
    {"grid": {"n1": 16.5}},
    {"physics": {"kappa": 0.2}},
    {"physics": {"mode": "penalized"}},
    {"domain": {"kind": "torus"}},
    {"initial": {"kind": "file"}},
    {"physics": {"taylor_override": 1}},
    [],
])
def test_bad_configs(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_strip_alias():
    assert config_from_dict({"domain": {"kind": "periodic_strip"}, "grid": {"n1": 16, "n2": 9}}).domain.kind == "strip"


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_simulate_writes_metadata_and_records(tmp_path, capsys):
    cfg = small_translation(tmp_path, output={"dir": str(tmp_path / "out"), "snapshot_every": 2})
    assert main(["simulate", write(tmp_path, cfg)]) == 0
    meta = json.loads((tmp_path / "out" / "metadata.json").read_text())
    assert meta["status"] == "completed"
    assert meta["config"]["initial"]["kind"] == "translation"
    assert meta["report"]["translation_max_deviation"] <= 1e-8
    lines = (tmp_path / "out" / "diagnostics.jsonl").read_text().splitlines()
    assert len(lines) == meta["steps"] + 1
    assert "div_residual" in json.loads(lines[0])
    snaps = sorted((tmp_path / "out" / "snapshots").glob("*_v.txt"))
    assert snaps and Field.load(snaps[-1]).ncomp == 2
    assert "status=completed" in capsys.readouterr().out


def test_simulate_from_a_snapshot(tmp_path):
    cfg = small_translation(tmp_path, output={"dir": str(tmp_path / "a"), "snapshot_every": 1})
    main(["simulate", write(tmp_path, cfg)])
    snap = sorted((tmp_path / "a" / "snapshots").glob("*_v.txt"))[-1]
    cfg2 = small_translation(tmp_path, initial={"kind": "file", "path": str(snap)},
                             output={"dir": str(tmp_path / "b")})
    assert main(["simulate", write(tmp_path, cfg2, "b.json")]) == 0
    cfg3 = dict(cfg2, grid={"n1": 32, "n2": 16})
    assert main(["simulate", write(tmp_path, cfg3, "c.json")]) == 2


def test_taylor_violation_exits_one(tmp_path):
    cfg = small_translation(tmp_path, initial={"kind": "rotation"},
                            physics={"sigma": 0.0, "mode": "kappa_sigma0_transport"})
    assert main(["simulate", write(tmp_path, cfg)]) == 1
    meta = json.loads((tmp_path / "out" / "metadata.json").read_text())
    assert meta["status"] == "taylor_violation"


def test_usage_errors(tmp_path):
    assert main(["frobnicate"]) == 2
    assert main(["simulate", str(tmp_path / "nope.json")]) == 2
    assert main(["simulate", write(tmp_path, {"grid": {"n1": 3}})]) == 2


def test_verify_identities(capsys):
    assert main(["verify", "--suite", "identities"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("TAP version 13")
    assert "not ok" not in out


def test_smoothing_audit_csv(tmp_path, capsys):
    path = tmp_path / "audit.csv"
    assert main(["smoothing-audit", "--n", "64", "--kappas", "0.08", "0.04", "--csv", str(path)]) == 0
    rows = path.read_text().splitlines()
    assert rows[0].startswith("kappa,commutator_l2") and len(rows) == 3
    assert main(["smoothing-audit", "--kappas", "0.3"]) == 2


def test_resolution_sweep(tmp_path, capsys):
    cfg = {"output": {"dir": str(tmp_path / "sw")}, "sweep": {"parameter": "resolution", "values": [16, 32]}}
    assert main(["sweep", write(tmp_path, cfg)]) == 0
    meta = json.loads((tmp_path / "sw" / "metadata.json").read_text())
    assert meta["summary"]["order"] > 1.7
    assert (tmp_path / "sw" / "sweep_resolution.csv").exists()


def test_dispersion_needs_the_strip(tmp_path):
    assert main(["dispersion", write(tmp_path, {"output": {"dir": str(tmp_path)}})]) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "kappaflow", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "kappaflow" in out.stdout
