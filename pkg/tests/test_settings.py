"""Experiment configuration: profiles, files, overrides and validation."""
import pytest

from core.config import DEFAULT_ETA_G, DEFAULT_G_MAX, DEFAULT_HIDDEN_DIM
from core.errors import ConfigError
from core.models import Hyper, Mode, SimConfig, SimilarityKind, Strategy
from harness.settings import (
    ExperimentConfig, coerce, dump_config, load_config, parse_config, profile_defaults, to_sim_config,
)


def test_full_profile_defaults():
    cfg = load_config()
    assert cfg.profile == "full"
    assert (cfg.num_clients, cfg.k_trigger, cfg.rounds, cfg.local_epochs) == (100, 10, 400, 2)
    assert cfg.speed_ratio == 50.0
    assert (cfg.eta0, cfg.a, cfg.m0, cfg.k, cfg.theta_cap, cfg.grad_clip) == (0.1, 0.002, 0.1, 0.2, 0.9, 20.0)
    assert cfg.strategy == Strategy.FEDQS_SGD and cfg.mode == Mode.SAFL


def test_desk_profile():
    cfg = load_config(profile="desk")
    assert (cfg.num_clients, cfg.k_trigger, cfg.rounds) == (20, 4, 150)
    assert cfg.eta0 == 0.1
    assert cfg.g_max == 0.25
    assert to_sim_config(cfg, 0).hyper.g_max == 0.25


def test_unknown_profile():
    with pytest.raises(ConfigError):
        profile_defaults("huge")


def test_override_wins_over_file(tmp_path):
    path = tmp_path / "exp.txt"
    path.write_text("[protocol]\nstrategy = fedavg\nrounds = 5\n# comment\n", encoding="utf-8")
    cfg = load_config(path, {"rounds": "7"})
    assert cfg.strategy == Strategy.FEDAVG
    assert cfg.rounds == 7


def test_strategy_flag_override():
    cfg = load_config(overrides={"strategy": "fedqs-avg"})
    assert cfg.strategy == Strategy.FEDQS_AVG


def test_profile_from_file(tmp_path):
    path = tmp_path / "exp.txt"
    path.write_text("profile = desk\nseed = 3\n", encoding="utf-8")
    cfg = load_config(path)
    assert cfg.num_clients == 20 and cfg.seed == 3


def test_misspelled_key_suggests_name():
    with pytest.raises(ConfigError) as err:
        parse_config("strtegy = fedavg\n")
    assert err.value.key == "strtegy"
    assert "did you mean 'strategy'" in str(err.value)


def test_duplicate_and_malformed_lines():
    with pytest.raises(ConfigError):
        parse_config("seed = 1\nseed = 2\n")
    with pytest.raises(ConfigError):
        parse_config("just words\n")


@pytest.mark.parametrize("key,text", [
    ("rounds", "many"), ("eta0", "fast"), ("use_feedback", "maybe"), ("strategy", "fedprox"),
])
def test_bad_values(key, text):
    with pytest.raises(ConfigError) as err:
        coerce(key, text)
    assert err.value.key == key


def test_coerce_types():
    assert coerce("use_feedback", "Off") is False
    assert coerce("sim_kind", "euclidean") == SimilarityKind.EUCLIDEAN
    assert coerce("speed_ratio", "10") == 10.0


def test_dump_parses_back_to_same_config():
    cfg = load_config(profile="desk", overrides={"strategy": "fedavg", "eta_min": "0.0005", "categorical": "c:a|b"})
    assert parse_config(dump_config(cfg)) == cfg


def test_sync_mode_rejects_fedqs():
    with pytest.raises(ConfigError) as err:
        load_config(overrides={"mode": "sync"})
    assert err.value.key == "strategy"
    assert load_config(overrides={"mode": "sync", "strategy": "fedsgd"}).mode == Mode.SYNC


@pytest.mark.parametrize("overrides", [
    {"k_trigger": "200"},
    {"run_id": "../escape"},
    {"repeats": "0"},
    {"target_fraction": "1.5"},
    {"dataset": "images"},
    {"partition": "shards"},
    {"dataset": "csv"},
    {"categorical": "color"},
    {"eta_min": "0.5"},
])
def test_invalid_combinations(overrides):
    with pytest.raises(ConfigError):
        load_config(overrides=overrides)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.txt")


def test_sim_config_per_repeat_seed():
    cfg = ExperimentConfig(activation_count=0, dump_replay=True)
    sim = to_sim_config(cfg, 12)
    assert sim.seed == 12
    assert sim.activations == sim.k_trigger
    assert sim.keep_updates
    assert sim.hyper.eta0 == cfg.eta0


def test_engine_and_harness_share_defaults():
    sim = to_sim_config(load_config(), 0)
    assert sim.hidden_dim == SimConfig().hidden_dim == DEFAULT_HIDDEN_DIM
    assert sim.hyper.g_max == Hyper().g_max == DEFAULT_G_MAX
    assert sim.hyper.eta_g == Hyper().eta_g == DEFAULT_ETA_G
