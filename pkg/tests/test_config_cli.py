import json
from pathlib import Path

import numpy as np
import pytest

from mfbm import ConfigError, GridPath, load_config
from mfbm.cli import kernel_selftest, run_command
from mfbm.config import parse_config

ROOT = Path(__file__).resolve().parents[1]

BASE = """
seed = 3
[space]
eigenvalues = [1.0]
[noise]
H = 0.7
[family]
name = "linear_dissipative"
params = {{ b_x = 1.0, b_y = {b_y}, a = 1.0, c = 1.0, sigma_f = 1.0, g_scale = {g} }}
[scales]
epsilon = [0.1, 0.1]
delta = [1e-2, 1e-3]
[grid]
T = 1.0
M = 20
[run]
replicas = 3
x0 = [1.0]
{extra}
"""


def write_cfg(tmp_path, b_y=1.0, g=0.1, extra="", name="c.toml"):
    p = tmp_path / name
    p.write_text(BASE.format(b_y=b_y, g=g, extra=extra))
    return p


def raw(**changes):
    r = {"space": {"eigenvalues": [1.0]}, "noise": {"H": 0.7}, "family": {"name": "zero"},
         "scales": {"epsilon": 0.1, "delta": 0.001}, "grid": {"T": 1.0, "M": 10}}
    for k, v in changes.items():
        sec, key = k.split("__")
        r[sec][key] = v
    return r


def test_defaults_are_recorded():
    cfg = parse_config(raw())
    assert cfg.replicas == 1 and cfg.seed == 0 and np.all(cfg.x0 == 1)
    assert any("alpha" in d for d in cfg.defaults_applied)
    assert cfg.hurst.alpha == pytest.approx(0.4)
    json.dumps(cfg.echo())


@pytest.mark.parametrize("change,match", [
    ({"noise__H": 0.5}, "open interval"),
    ({"noise__H": 1.0}, "open interval"),
    ({"noise__alpha": 0.2}, r"\(1-H, 1/2\)"),
    ({"grid__M": 5000}, "cap"),
    ({"grid__M": 1.5}, "positive integer"),
    ({"scales__block": 0.01}, "grid step"),
    ({"scales__delta": [0.1, 0.2, 0.3], "scales__epsilon": [0.1, 0.2]}, "incompatible"),
    ({"family__name": "nope"}, "registered"),
    ({"noise__q1": [1.0, 2.0]}, "dim"),
    ({"space__bogus": 1}, "unknown key"),
])
def test_rejections(change, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(raw(**change))


def test_overrides_and_env_seed(monkeypatch):
    cfg = parse_config(raw(), overrides={"epsilon": 0.05, "M": 40, "seed": 9, "H": 0.8})
    assert cfg.schedule[0].epsilon == 0.05 and cfg.M == 40 and cfg.H == 0.8
    assert cfg.seed == 9 and cfg.seed_source == "flag"
    monkeypatch.setenv("MFBM_SEED", "123")
    cfg = parse_config(raw())
    assert cfg.seed == 123 and cfg.seed_source == "env"
    cfg = parse_config(raw(), overrides={"seed": 9})
    assert cfg.seed == 9 and cfg.seed_source == "flag"


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[space\n")
    with pytest.raises(ConfigError, match="cannot parse"):
        load_config(bad)


def test_shipped_configs_parse():
    for p in sorted((ROOT / "configs").glob("*.toml")):
        cfg = load_config(p)
        assert cfg.source_hash and cfg.schedule


# --- CLI ----------------------------------------------------------------

def test_simulate_and_manifest(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert run_command(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    d = tmp_path / "o" / "simulate"
    man = json.loads((d / "manifest.json").read_text())
    assert man["status"] == "ok" and man["seed"] == 3 and len(man["config_hash"]) == 64
    assert sorted(man["outputs"]) == sorted(["paths_0.csv", "diagnostics_0.json", "paths_1.csv",
                                             "diagnostics_1.json"])
    assert {"numpy", "scipy", "mfbm"} <= set(man["versions"])
    head = (d / "paths_0.csv").read_text().splitlines()[0]
    assert head == "replica,t,x_0,y_0"
    assert "substeps" in capsys.readouterr().out


def test_simulate_is_reproducible(tmp_path):
    cfg = write_cfg(tmp_path)
    for o in ("a", "b"):
        assert run_command(["simulate", "--config", str(cfg), "--out", str(tmp_path / o)]) == 0
    a = (tmp_path / "a" / "simulate" / "paths_1.csv").read_bytes()
    assert a == (tmp_path / "b" / "simulate" / "paths_1.csv").read_bytes()
    assert run_command(["simulate", "--config", str(cfg), "--out", str(tmp_path / "c"), "--seed", "4"]) == 0
    assert a != (tmp_path / "c" / "simulate" / "paths_1.csv").read_bytes()


def test_simulate_with_blocks_writes_auxiliary(tmp_path):
    cfg = write_cfg(tmp_path)
    assert run_command(["simulate", "--config", str(cfg), "--out", str(tmp_path), "--block", "0.25"]) == 0
    assert (tmp_path / "simulate" / "auxiliary_0.csv").is_file()


def test_average_rate_and_mdp_rate(tmp_path):
    cfg = write_cfg(tmp_path, extra="[average]\nsweep = true\n")
    out = str(tmp_path / "o")
    assert run_command(["average", "--config", str(cfg), "--out", out]) == 0
    sweep = json.loads((tmp_path / "o" / "average" / "sweep.json").read_text())
    assert len(sweep["means"]) == 2
    assert run_command(["rate", "--config", str(cfg), "--out", out, "--M", "64"]) == 0
    rate = json.loads((tmp_path / "o" / "rate" / "rate.json").read_text())
    assert rate["rate"] < 1e-6
    t = np.linspace(0, 1, 65)
    phi = tmp_path / "phi.csv"
    GridPath(t, 0.3 * np.sin(np.pi * t)).to_csv(phi)
    assert run_command(["mdp-rate", "--config", str(cfg), "--out", out, "--M", "64", "--phi", str(phi)]) == 0
    mdp = json.loads((tmp_path / "o" / "mdp-rate" / "rate.json").read_text())
    assert mdp["rate"] > 0 and mdp["recomputed"] == pytest.approx(mdp["rate"], rel=1e-10)
    assert (tmp_path / "o" / "mdp-rate" / "minimal_control_dot.csv").is_file()


def test_tabulated_average(tmp_path):
    cfg = write_cfg(tmp_path, extra="[average]\nx_grid = [0.0, 0.5, 1.0]\nreplicas = 2\nhorizon = 20.0\n")
    assert run_command(["average", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    d = json.loads((tmp_path / "average" / "averaged_drift.json").read_text())
    assert d["mode"] == "tabulated" and len(d["table"]) == 3


def test_mc_ldp_and_assumptions(tmp_path):
    ev = "[event]\nkind = \"mode\"\na = 0.6\nrate_reference = \"gaussian\"\nreplicas = 1000\n"
    cfg = write_cfg(tmp_path, b_y=0.0, g=1.0, extra=ev)
    cfg_text = cfg.read_text().replace("delta = [1e-2, 1e-3]", "delta = [1e-4, 1e-5]").replace(
        "epsilon = [0.1, 0.1]", "epsilon = [0.2, 0.1]")
    cfg.write_text(cfg_text)
    assert run_command(["mc-ldp", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "mc-ldp" / "mc_ldp.json").read_text())
    assert res["verdict"]["status"] in ("PASS", "INCONCLUSIVE")
    assert (tmp_path / "mc-ldp" / "mc_ldp.csv").read_text().startswith("epsilon,p_hat")
    assert run_command(["check-assumptions", "--config", str(cfg), "--out", str(tmp_path),
                        "--samples", "200"]) == 0
    rep = json.loads((tmp_path / "check-assumptions" / "assumptions.json").read_text())
    assert rep["a5_pass"]


def test_kernel_selftest(tmp_path):
    res = kernel_selftest(0.7, 20, 0)
    assert res["pass"] and res["max_abs_diff"] < 1e-8 and res["degeneracy_max_dev"] < 1e-6
    assert run_command(["kernel-selftest", "--out", str(tmp_path), "--samples", "10"]) == 0
    assert (tmp_path / "kernel-selftest" / "manifest.json").is_file()


def test_exit_codes(tmp_path, capsys):
    assert run_command(["simulate", "--config", str(tmp_path / "none.toml")]) == 2
    cfg = write_cfg(tmp_path)
    assert run_command(["simulate", "--config", str(cfg), "--bogus"]) == 2
    assert run_command(["simulate", "--config", str(cfg), "--out", str(tmp_path), "--H", "0.5"]) == 2
    assert run_command([]) == 2
    man = json.loads((tmp_path / "simulate" / "manifest.json").read_text()) \
        if (tmp_path / "simulate" / "manifest.json").exists() else None
    assert man is None
    # g = 0 cannot generate any path: the minimal control is singular
    cfg0 = write_cfg(tmp_path, g=0.0, name="g0.toml")
    assert run_command(["rate", "--config", str(cfg0), "--out", str(tmp_path)]) == 3
    man = json.loads((tmp_path / "rate" / "manifest.json").read_text())
    assert man["status"] == "numerical_error"
    err = capsys.readouterr().err
    assert "H = 0.5" in err and "ill-conditioned" in err


def test_seed_precedence_in_manifest(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path)
    monkeypatch.setenv("MFBM_SEED", "11")
    assert run_command(["simulate", "--config", str(cfg), "--out", str(tmp_path / "e")]) == 0
    man = json.loads((tmp_path / "e" / "simulate" / "manifest.json").read_text())
    assert (man["seed"], man["seed_source"]) == (11, "env")
    assert run_command(["simulate", "--config", str(cfg), "--out", str(tmp_path / "f"), "--seed", "5"]) == 0
    man = json.loads((tmp_path / "f" / "simulate" / "manifest.json").read_text())
    assert (man["seed"], man["seed_source"]) == (5, "flag")
    monkeypatch.delenv("MFBM_SEED")
    assert run_command(["simulate", "--config", str(cfg), "--out", str(tmp_path / "g"), "--seed", "5"]) == 0
    assert (tmp_path / "f" / "simulate" / "paths_0.csv").read_bytes() == \
        (tmp_path / "g" / "simulate" / "paths_0.csv").read_bytes()
