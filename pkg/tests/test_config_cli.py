from __future__ import annotations

import copy
import json
import subprocess
import sys
from pathlib import Path

import pytest

from levyhedge.cli import main
from levyhedge.config import ConfigError, load_config, parse_config

ROOT = Path(__file__).resolve().parents[1]

BASE = {
    "model": {"u": 0.01, "mu": 0.1, "lambda": 10.0, "jump_law": {"kind": "exponential", "delta": 100.0}},
    "horizon": 2.0,
    "grids": {"t_nodes": 9, "x_nodes": 9},
    "mc": {"n_paths": 2000, "base_seed": 5, "surface_paths": 2000, "compensator_times": [1.0]},
    "hedge": {"n_trading_dates": 20, "n_paths": 50, "dump_paths": 1},
    "identity": {"times": [0.5], "n_paths": 500},
    "riskfree": {"t_nodes": 2, "x_nodes": 3},
}


def cfg(**patch):
    d = copy.deepcopy(BASE)
    for path, val in patch.items():
        node = d
        keys = path.split("__")
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = val
    return d


def write(tmp_path, data, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def test_shipped_configs_parse():
    for name in ("example.json", "identity.json"):
        c = load_config(ROOT / "configs" / name, env={})
        c.build_model()


@pytest.mark.parametrize("patch,where", [
    ({"mc__bogus": 1}, "mc.bogus"),
    ({"model__jump_law__rate": 3}, "rate"),
    ({"extra": True}, "extra"),
    ({"model__u": -1.0}, "model.u"),
    ({"horizon": 0.0}, "horizon"),
    ({"model__jump_law": {"kind": "gamma", "shape": 2}}, "jump_law"),
    ({"payoff": {"kind": "linear", "params": [1.0]}}, "payoff"),
])
def test_invalid_configs_rejected_with_location(patch, where):
    with pytest.raises(ConfigError) as info:
        parse_config(cfg(**patch), env={})
    assert where in str(info.value)


def test_empirical_law_needs_opt_in():
    data = cfg(model__jump_law={"kind": "empirical", "samples": [-0.1, -0.2]})
    with pytest.raises(ConfigError):
        parse_config(data, env={})
    data["model"]["allow_nonconforming"] = True
    with pytest.warns(UserWarning):
        assert parse_config(data, env={}).build_model().non_conforming


def test_seed_environment_override():
    assert parse_config(cfg(), env={"LEVYHEDGE_SEED": "99"}).mc.base_seed == 99
    assert parse_config(cfg(), env={"LEVYHEDGE_SEED": ""}).mc.base_seed == 5
    for bad in ("abc", "-1"):
        with pytest.raises(ConfigError):
            parse_config(cfg(), env={"LEVYHEDGE_SEED": bad})


def test_config_hash_is_canonical():
    a = parse_config(cfg(), env={})
    shuffled = json.loads(json.dumps(cfg(), sort_keys=True))
    shuffled = dict(reversed(list(shuffled.items())))
    assert parse_config(shuffled, env={}).config_hash() == a.config_hash()
    assert parse_config(json.loads(a.canonical_json()), env={}).config_hash() == a.config_hash()
    assert parse_config(cfg(), env={"LEVYHEDGE_SEED": "6"}).config_hash() != a.config_hash()


def test_cli_report_and_outputs(tmp_path, capsys):
    path = write(tmp_path, cfg())
    out = tmp_path / "o"
    assert main(["simulate", "--config", path, "--out", str(out), "--threads", "2"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["command"] == "simulate" and rep["seed"] == 5
    assert set(rep) == {"command", "config_hash", "seed", "wall_time_s", "headline", "files"}
    assert rep["headline"]["creep_violations"] == 0
    assert (out / "simulate.json").exists()


def test_cli_missing_surface_exit_code(tmp_path, capsys):
    path = write(tmp_path, cfg())
    assert main(["hedge", "--config", path, "--out", str(tmp_path / "empty")]) == 2
    assert "surface" in capsys.readouterr().err


def test_cli_bad_config_exit_code(tmp_path, capsys):
    assert main(["simulate", "--config", write(tmp_path, cfg(mc__nope=1))]) == 2
    assert main(["simulate", "--config", str(tmp_path / "absent.json")]) == 2
    (tmp_path / "broken.json").write_text("{not json")
    assert main(["simulate", "--config", str(tmp_path / "broken.json")]) == 2


def test_cli_quadrature_failure_exit_code(tmp_path, capsys):
    out = str(tmp_path / "o")
    assert main(["surface", "--config", write(tmp_path, cfg()), "--out", out]) == 0
    strict = write(tmp_path, cfg(quad={"abs_tol": 1e-300, "rel_tol": 1e-300, "panels": 1}), "strict.json")
    assert main(["riskfree", "--config", strict, "--out", out]) == 3


def test_cli_hedge_can_build_its_own_surface(tmp_path, capsys):
    path = write(tmp_path, cfg(hedge__build_surface=True))
    assert main(["hedge", "--config", path, "--out", str(tmp_path / "o")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["headline"]["max_accounting_residual"] == 0.0


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "levyhedge", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "simulate" in r.stdout
