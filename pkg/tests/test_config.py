import json

import pytest

from rade.config import (
    ConfigError,
    episode_to_dict,
    load_episode_config,
    parse_episode,
    read_json,
    resolve_seed,
)
from rade.runtime import MethodKind

MINIMAL = {"traffic": {"total_steps": 10, "arrival_scale": 0.5}}


def test_nested_and_dotted_keys_agree():
    a = parse_episode({"traffic": {"total_steps": 10, "arrival_scale": 0.5}, "ogd": {"step_size": 0.02}})
    b = parse_episode({"traffic.total_steps": 10, "traffic.arrival_scale": 0.5, "ogd.step_size": 0.02})
    assert a.episode == b.episode
    assert a.episode.ogd.step_size == 0.02


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown key ogd.stepsize"):
        parse_episode({**MINIMAL, "ogd.stepsize": 0.1})
    with pytest.raises(ConfigError, match="unknown key colour"):
        parse_episode({**MINIMAL, "colour": "red"})
    with pytest.raises(ConfigError, match=r"domains\[1\]\.beta"):
        parse_episode({**MINIMAL, "domains": [{"alpha": 1.0}, {"beta": 2.0}]})


def test_missing_required_key_is_named():
    with pytest.raises(ConfigError, match="traffic.total_steps"):
        parse_episode({"traffic": {"arrival_scale": 0.5}})


def test_type_errors():
    with pytest.raises(ConfigError, match="traffic.total_steps"):
        parse_episode({"traffic": {"total_steps": 1.5, "arrival_scale": 0.5}})
    with pytest.raises(ConfigError, match="prefill_buffer"):
        parse_episode({**MINIMAL, "static_warmup": {"prefill_buffer": 1}})
    with pytest.raises(ConfigError):
        parse_episode({**MINIMAL, "method": "greedy"})
    with pytest.raises(ConfigError, match="version"):
        parse_episode({**MINIMAL, "version": 2})


def test_json_errors_report_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "seed": 1,\n  "traffic": {\n}\n,,}')
    with pytest.raises(ConfigError, match=r"line \d+ column \d+"):
        read_json(p)
    with pytest.raises(ConfigError, match="cannot read"):
        read_json(tmp_path / "missing.json")


def test_seed_precedence(tmp_path, monkeypatch):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({**MINIMAL, "seed": 3}))
    monkeypatch.delenv("RADE_SEED", raising=False)
    assert load_episode_config(p).episode.seed == 3
    monkeypatch.setenv("RADE_SEED", "8")
    assert load_episode_config(p).episode.seed == 8
    assert load_episode_config(p, seed_override=5).episode.seed == 5
    monkeypatch.setenv("RADE_SEED", "x")
    with pytest.raises(ConfigError, match="RADE_SEED"):
        resolve_seed()


def test_static_models_path_is_relative_to_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({**MINIMAL, "static_models": "models.json"}))
    assert load_episode_config(p).static_models == tmp_path / "models.json"


def test_round_trip():
    cfg = parse_episode({**MINIMAL, "method": "rade_star", "seed": 4, "corruption.p_c": 0.2,
                         "static_warmup.prefill_buffer": False}).episode
    again = parse_episode(json.loads(json.dumps(episode_to_dict(cfg)))).episode
    assert again == cfg
    assert again.method is MethodKind.RADE_STAR
