import os

import pytest

from bundletr.config import RunConfig, SolverConfig, load_config, parse_config
from bundletr.errors import ConfigError


def _write(tmp_path, text):
    path = tmp_path / "run.yaml"
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_empty_file_gives_defaults(tmp_path):
    cfg = parse_config(_write(tmp_path, ""))
    assert cfg == SolverConfig()
    assert cfg.gamma == 0.1 and cfg.gamma_tilde == 0.5 and cfg.Gamma == 0.6
    assert cfg.theta == 0.1 and cfg.Theta == 2.0
    assert cfg.q_bound == 1e3 and cfg.eps_stop == 1e-8
    assert cfg.max_inner == 500 and cfg.max_outer == 10000


def test_sections_are_loaded(tmp_path):
    cfg = load_config(_write(tmp_path, "problem: zigzag\nsolver:\n  gamma: 0.2\noutput:\n  trace: t.csv\n"
                                       "logging:\n  level: DEBUG\nseed: 7\n"))
    assert isinstance(cfg, RunConfig)
    assert cfg.problem == "zigzag"
    assert cfg.solver.gamma == 0.2
    assert cfg.output.trace == "t.csv"
    assert cfg.logging.level == "DEBUG"
    assert cfg.seed == 7


@pytest.mark.parametrize("body, rule", [
    ("gamma: 0.5\n  gamma_tilde: 0.4", "gamma < gamma_tilde"),
    ("Theta: 0.5", "Theta ≥ 1"),
    ("Gamma: 0.05", "gamma < Gamma"),
    ("theta: 0.0", "theta > 0"),
    ("Gamma: 1.5", "Gamma ≤ 1"),
    ("c_downshift: 0", "c_downshift > 0"),
    ("max_planes: 2", "max_planes ≥ 3"),
    ("nu_decay: 1.0", "0 < nu_decay < 1"),
])
def test_ordering_violations_name_the_rule(tmp_path, body, rule):
    with pytest.raises(ConfigError, match=rule):
        parse_config(_write(tmp_path, f"solver:\n  {body}\n"))


def test_unknown_keys_are_rejected(tmp_path):
    with pytest.raises(ConfigError, match="gama"):
        parse_config(_write(tmp_path, "solver:\n  gama: 0.2\n"))
    with pytest.raises(ConfigError, match="camera"):
        parse_config(_write(tmp_path, "camera:\n  rtsp_url: x\n"))


def test_enum_values_are_checked(tmp_path):
    with pytest.raises(ConfigError, match="trial_mode"):
        parse_config(_write(tmp_path, "solver:\n  trial_mode: sideways\n"))
    with pytest.raises(ConfigError, match="oracle_kind"):
        parse_config(_write(tmp_path, "solver:\n  oracle_kind: magic\n"))
    with pytest.raises(ConfigError, match="Q_matrix"):
        parse_config(_write(tmp_path, "solver:\n  Q_policy: fixed\n"))


def test_missing_or_malformed_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.yaml"))
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "solver: [1, 2\n"))
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "- just\n- a list\n"))


@pytest.mark.parametrize("name", ["q0_osc.yaml", "repaired.yaml", "prox.yaml"])
def test_shipped_configs_are_valid(repo_root, name):
    cfg = load_config(os.path.join(repo_root, "configs", name))
    assert cfg.problem


def test_default_config_file_is_valid(repo_root):
    assert load_config(os.path.join(repo_root, "config.yaml")).solver == SolverConfig()
