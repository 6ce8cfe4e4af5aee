import pytest

from gridpatrol import (
    ConfigError,
    MonitorEnv,
    apply_overrides,
    config_from_dict,
    load_config,
    resolve_map,
)
from gridpatrol.configs import parse_override

from pathlib import Path

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def minimal(**extra):
    data = {"schema": 1, "map": {"file": "synthetic10"}}
    data.update(extra)
    return data


def test_load_desk_config():
    cfg = load_config(str(CONFIG_DIR / "desk10.toml"))
    assert cfg.grid.size == 10
    assert cfg.map_name == "synthetic10"
    assert cfg.env.scenario == "staleness"
    assert cfg.env.n_agents == 2
    assert cfg.env.alpha == 0.01
    assert cfg.env.sync_period == 4
    assert cfg.reward.r_collision == -20.0
    assert cfg.arch.in_size == 10
    assert cfg.arch.conv == ((16, 4, 2), (32, 4, 2))
    assert cfg.train.batch_size == 128
    assert cfg.train.lr == 0.001
    assert cfg.eval.n_seeds == 20
    assert cfg.eval_seeds() == [10_000 + i for i in range(20)]
    env = cfg.make_env(seed=0)
    assert isinstance(env, MonitorEnv)
    assert env.sync_period == 4
    env2 = cfg.make_env(seed=0, n_agents=4)
    assert env2.n_agents == 4


def test_all_shipped_configs_load():
    for name in ("desk10.toml", "desk10_event.toml", "toronto30.toml"):
        cfg = load_config(str(CONFIG_DIR / name))
        assert cfg.grid.n_roads > 0


def test_schema_is_required_and_checked():
    with pytest.raises(ConfigError):
        config_from_dict({"map": {"file": "synthetic10"}})
    with pytest.raises(ConfigError):
        config_from_dict({"schema": 2, "map": {"file": "synthetic10"}})


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError) as e:
        config_from_dict(minimal(bogus={}))
    assert "bogus" in str(e.value)
    with pytest.raises(ConfigError) as e:
        config_from_dict(minimal(env={"n_agent": 3}))
    assert "n_agent" in str(e.value)


def test_validation_messages():
    with pytest.raises(ConfigError):
        config_from_dict(minimal(env={"scenario": "nope"}))
    with pytest.raises(ConfigError):
        config_from_dict(minimal(env={"n_agents": 0}))
    with pytest.raises(ConfigError):
        config_from_dict(minimal(train={"batch_size": 0}))
    with pytest.raises(ConfigError):
        config_from_dict(minimal(net={"conv": [[64, 12, 1]]}))  # kernel > map
    with pytest.raises(ConfigError):
        config_from_dict({"schema": 1})  # no map


def test_parse_override_types():
    assert parse_override("train.lr=0.01") == (["train", "lr"], 0.01)
    assert parse_override("env.n_agents=4") == (["env", "n_agents"], 4)
    assert parse_override("env.scenario='event'") == (["env", "scenario"], "event")
    assert parse_override("net.conv=[[8,3,1]]") == (["net", "conv"], [[8, 3, 1]])
    assert parse_override("map.file=synthetic10") == (["map", "file"], "synthetic10")
    with pytest.raises(ConfigError):
        parse_override("no_equals")
    with pytest.raises(ConfigError):
        parse_override(".=3")


def test_apply_overrides_nested():
    data = minimal()
    apply_overrides(data, ["env.n_agents=4", "train.lr=0.05"])
    cfg = config_from_dict(data)
    assert cfg.env.n_agents == 4
    assert cfg.train.lr == 0.05


def test_resolve_map_bundled_and_filesystem(tmp_path):
    name, text = resolve_map("synthetic10")
    assert name == "synthetic10"
    assert text.startswith("d=60")
    with pytest.raises(ConfigError):
        resolve_map("not_a_real_map")

    p = tmp_path / "mini.map"
    p.write_text("d=30\nRR\nRR\n")
    name, text = resolve_map("mini.map", base_dir=str(tmp_path))
    assert name == "mini.map"
    assert "RR" in text
    with pytest.raises(ConfigError):
        resolve_map("missing.map", base_dir=str(tmp_path))


def test_filesystem_map_via_config(tmp_path):
    p = tmp_path / "mini.map"
    p.write_text("d=30\n" + "\n".join("RRRRR" for _ in range(5)) + "\n")
    cfg_file = tmp_path / "exp.toml"
    cfg_file.write_text(
        'schema = 1\n[map]\nfile = "mini.map"\n[net]\nconv = [[4, 3, 1]]\n'
    )
    cfg = load_config(str(cfg_file))
    assert cfg.grid.size == 5
    assert cfg.grid.cell_width == 30.0
    assert cfg.arch.feature_size() == 4 * 3 * 3


def test_bad_toml_and_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/nope.toml")


def test_init_mode_parses_round_trips_and_validates():
    cfg = config_from_dict(minimal())
    assert cfg.env.init_mode == "random"
    cfg = config_from_dict(minimal(env={"init_mode": "blank"}))
    assert cfg.env.init_mode == "blank"
    assert cfg.make_env(seed=0).init_mode == "blank"
    with pytest.raises(ConfigError):
        config_from_dict(minimal(env={"init_mode": "fresh"}))
