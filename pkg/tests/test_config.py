from __future__ import annotations

import os

import numpy as np
import pytest

from rdpdmp.config import Profile, config_hash, dump_config, parse_config, parse_config_text
from rdpdmp.errors import ParseError, ValidationError

HERE = os.path.dirname(__file__)
GOLDEN = os.path.join(HERE, "..", "configs", "toggle_field.yaml")

MINIMAL = """\
grid: {N: 16, k: 4}
scale: {mu: 50}
horizon: {T: 1.0}
network: {preset: toggle_field}
initial:
  f0: 1.0
  d0: [0, 1, 0, 1]
"""


def errors_of(text):
    with pytest.raises(ValidationError) as info:
        parse_config_text(text)
    return {key: (reason, line) for key, reason, line in info.value.errors}


def test_golden_config_parses():
    cfg = parse_config(GOLDEN)
    assert (cfg.grid.N, cfg.grid.k, cfg.scale.mu) == (16, 4, 50.0)
    assert cfg.initial.d0 == (0, 1, 0, 1)
    assert cfg.analysis.ladder == ((16, 50.0), (32, 100.0), (64, 200.0))
    net = cfg.build_network()
    assert len(net.reactions) == 5


def test_minimal_config_defaults():
    cfg = parse_config_text(MINIMAL)
    assert cfg.horizon.dt_out == cfg.horizon.T
    assert cfg.engine == "ssa" and cfg.ensemble.R == 1 and cfg.guards.positivity
    assert cfg.pdmp_solver.M == 256 and cfg.pdmp_solver.h == 1e-3
    assert np.allclose(cfg.initial.f0(np.linspace(0, 1, 5)), 1.0)


def test_round_trip():
    for cfg in (parse_config(GOLDEN), parse_config_text(MINIMAL)):
        again = parse_config_text(dump_config(cfg))
        assert again == cfg
        assert config_hash(again) == config_hash(cfg)


def test_n_not_multiple_of_k():
    errs = errors_of(MINIMAL.replace("N: 16", "N: 15"))
    assert errs["grid.N"][0] == "not a multiple of k"
    assert errs["grid.N"][1] == 1


def test_missing_horizon_t():
    errs = errors_of(MINIMAL.replace("horizon: {T: 1.0}", "horizon: {dt_out: 0.1}"))
    assert "horizon.T" in errs and "missing" in errs["horizon.T"][0]


def test_all_errors_reported_with_lines():
    text = MINIMAL.replace("mu: 50", "mu: -1").replace("d0: [0, 1, 0, 1]", "d0: [0, 1]") + "colour: blue\n"
    errs = errors_of(text)
    assert {"scale.mu", "initial.d0", "colour"} <= set(errs)
    assert errs["initial.d0"][1] == 7
    assert errs["colour"][1] == 8


def test_network_errors_become_validation_errors():
    with pytest.raises(ValidationError) as info:
        parse_config(os.path.join(HERE, "fixtures", "mixed_fast_djump.yaml"))
    keys = [e[0] for e in info.value.errors]
    assert keys[0] == "network" and "gamma_d" in info.value.errors[0][1]


def test_explicit_reaction_list():
    text = MINIMAL.replace(
        "network: {preset: toggle_field}",
        "network:\n  d_max: 1\n  reactions:\n    - {class: RC, gamma_c: 1, gamma_d: 0, rate: [[0, 0, 2.0]]}\n"
        "    - {class: RC, gamma_c: -1, gamma_d: 0, rate: [[1, 0, 1.0]]}",
    )
    cfg = parse_config_text(text)
    assert len(cfg.build_network().reactions) == 2
    assert parse_config_text(dump_config(cfg)) == cfg


def test_parse_errors(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_bytes(b"grid: {N: 4\n")
    with pytest.raises(ParseError):
        parse_config(bad)
    bad.write_bytes(b"\xff\xfe")
    with pytest.raises(ParseError):
        parse_config(bad)


def test_profiles():
    x = np.linspace(0, 1, 9)
    assert np.allclose(Profile("sine", mean=1, amplitude=0.5)(x), 1 + 0.5 * np.sin(2 * np.pi * x))
    assert np.allclose(Profile("cosine", mean=0, amplitude=1, wavenumber=2)(x), np.cos(4 * np.pi * x))
    assert np.allclose(Profile("polynomial", coefficients=(1.0, 0.0, 2.0))(x), 1 + 2 * x**2)
