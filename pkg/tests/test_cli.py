import json

import pytest

from diqkd_amp.cli import main
from diqkd_amp.config import ConfigError, load_config, parse_config
from diqkd_amp.keyrate import PRESETS
from diqkd_amp.sweep import session_time

SWEEP_TOML = """
[scenario]
name = "esr_demo"
architecture = "esr"

[setup]
eta_cd = 1.0
p_d = 1e-7

[grid]
loss_db = [0.0, 20.0]
n_sh = [1e9]

[security]
sets = ["S1"]

[optimization]
key_grid_points = 3
sweeps = 2

[output]
plot = true
formats = ["png", "svg"]

[run]
workers = 1
"""


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "demo.toml"
    path.write_text(SWEEP_TOML)
    return path


def test_sweep_writes_stable_outputs(cfg_file, tmp_path, capsys):
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["sweep", "--config", str(cfg_file), "--out", str(out1)]) == 0
    assert main(["sweep", "--config", str(cfg_file), "--out", str(out2)]) == 0
    csv1 = (out1 / "esr_demo_sweep.csv").read_bytes()
    assert csv1 == (out2 / "esr_demo_sweep.csv").read_bytes()
    lines = csv1.decode().splitlines()
    assert lines[0].startswith("# diqkd_amp ")
    assert len(lines) == 2 + 2
    assert (out1 / "esr_demo_sweep_plot.csv").exists()
    assert (out1 / "S1_eta1_n1e+09.png").exists()
    assert (out1 / "S1_eta1_n1e+09.svg").exists()


def test_observables_to_stdout(cfg_file, capsys):
    assert main(["observables", "--config", str(cfg_file)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[1].startswith("architecture,eta_cd")
    assert len(out) == 4


def test_preset_flag_overrides(cfg_file, capsys):
    assert main(["rate", "--config", str(cfg_file), "--preset", "S2"]) == 0
    assert ",S2," in capsys.readouterr().out


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[grid]\nloss_db = []\n")
    assert main(["sweep", "--config", str(bad)]) == 2
    assert "grid.loss_db" in capsys.readouterr().err
    bad.write_text("[setup]\nwhatever = 1\n")
    assert main(["sweep", "--config", str(bad)]) == 2
    bad.write_text("[setup\n")
    assert main(["sweep", "--config", str(bad)]) == 2
    assert main(["sweep", "--config", str(tmp_path / "missing.toml")]) == 2


def test_parse_rejects_unsorted_and_unknown_roles():
    with pytest.raises(ConfigError):
        parse_config({"grid": {"loss_db": [10.0, 0.0]}})
    with pytest.raises(ConfigError):
        parse_config({"scenario": {"architecture": "esr"}, "sources": {"h": {"mu": 0.1}}})
    with pytest.raises(ConfigError):
        parse_config({"security": {"sets": ["S9"]}})


def test_parse_sources_and_ranges():
    cfg = parse_config({"scenario": {"architecture": "pqa"},
                        "sources": {"ab": {"family": "pdc", "lam": 0.1}, "h": {"mu": 0.2}},
                        "grid": {"loss_db": {"start": 0, "stop": 10, "step": 5}}})
    assert cfg.loss_grid == [0.0, 5.0, 10.0]
    assert dict(cfg.setup.sources)["h"].mu == 0.2
    assert "lam:ab" in cfg.spec.free and "mu:h" in cfg.spec.free and "t" in cfg.spec.free


def test_presets_resolve_exactly():
    cfg = parse_config({"security": {"sets": ["S1", "S2"]}})
    assert cfg.security == [PRESETS["S1"], PRESETS["S2"]]


def test_load_config_roundtrip(cfg_file):
    cfg = load_config(str(cfg_file))
    assert cfg.name == "esr_demo" and cfg.n_sh_grid == [1e9]
    assert len(cfg.digest) == 16


def test_verify_closed_form(capsys):
    assert main(["verify", "--scope", "closed-form"]) == 0
    assert capsys.readouterr().out.startswith("PASS")


def test_session_time_command(capsys):
    assert main(["session-time", "--signals", "1.8e15", "--rate", "1e10"]) == 0
    days = json.loads(capsys.readouterr().out)["days"]
    assert days == pytest.approx(2.08, abs=0.01)


def test_session_time_values():
    assert session_time(1.2e12, 1e10) == pytest.approx(120.0)
    assert session_time(1e12, float("inf")) == 0.0
    with pytest.raises(ValueError):
        session_time(-1, 1e10)


def test_unassisted_rejects_detector_efficiency(tmp_path):
    bad = tmp_path / "u.toml"
    bad.write_text('[scenario]\narchitecture = "unassisted"\n[setup]\neta_cd = 0.9\n')
    assert main(["rate", "--config", str(bad)]) == 2
