"""
Тесты менеджера конфигурации.
"""

import pytest
import yaml

from crowd_prompt.core.config import ConfigManager, RunConfig
from crowd_prompt.modules.errors import ConfigError, VariantError


def write_config(tmp_path, payload):
    path = tmp_path / "config.yaml"
    path.write_text(payload if isinstance(payload, str) else yaml.safe_dump(payload), encoding="utf-8")
    return str(path)


def test_defaults_without_file(tmp_path):
    manager = ConfigManager(str(tmp_path / "absent.yaml"))
    cfg = manager.run_config()
    assert cfg == RunConfig()
    assert manager.get("train.epochs") == 120
    assert manager.get("train.missing", "fallback") == "fallback"


def test_partial_file_fills_defaults(tmp_path):
    manager = ConfigManager(write_config(tmp_path, {"seed": 3, "train": {"epochs": 30}}))
    cfg = manager.run_config()
    assert cfg.seed == 3 and cfg.train.epochs == 30
    assert cfg.prompt.K == 3

    train_cfg = cfg.to_train_config()
    assert train_cfg.seed == 3 and train_cfg.epochs == 30
    assert cfg.scene_spec().seed == 3


def test_partial_prompt_section_keeps_desk_kappa(tmp_path):
    manager = ConfigManager(write_config(tmp_path, {"train": {"epochs": 40}, "prompt": {"K": 3}}))
    cfg = manager.run_config()
    assert cfg.prompt.kappa == RunConfig().prompt.kappa == 20
    assert cfg.to_train_config().prompt.kappa == 20


def test_empty_file(tmp_path):
    assert ConfigManager(write_config(tmp_path, "")).run_config() == RunConfig()


def test_parse_error(tmp_path):
    with pytest.raises(ConfigError) as exc:
        ConfigManager(write_config(tmp_path, "train: [unclosed"))
    assert exc.value.exit_code == 2


def test_top_level_must_be_mapping(tmp_path):
    with pytest.raises(ConfigError):
        ConfigManager(write_config(tmp_path, "- 1\n- 2\n"))


@pytest.mark.parametrize("payload", [
    {"unknown_key": 1},
    {"train": {"momentum": 0.9}},
    {"train": {"epochs": 0}},
    {"prompt": {"K": 0}},
    {"kernel": {"size": 4}},
    {"experiments": {"alphas": [0.6]}},
    {"train": {"epochs": 10}, "prompt": {"kappa": 11}}
])
def test_invalid_values(tmp_path, payload):
    with pytest.raises(ConfigError) as exc:
        ConfigManager(write_config(tmp_path, payload)).run_config()
    assert exc.value.exit_code == 2


def test_unknown_variant(tmp_path):
    with pytest.raises(VariantError) as exc:
        ConfigManager(write_config(tmp_path, {"variant": "mystery"})).run_config()
    assert exc.value.exit_code == 6


def test_config_hash_ignores_key_order(tmp_path):
    first = tmp_path / "a"
    second = tmp_path / "b"
    first.mkdir()
    second.mkdir()
    a = ConfigManager(write_config(first, "seed: 1\nvariant: rsg\n")).run_config()
    b = ConfigManager(write_config(second, "variant: rsg\nseed: 1\n")).run_config()
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != RunConfig().config_hash()


def test_update_config(tmp_path):
    manager = ConfigManager(write_config(tmp_path, {"train": {"epochs": 30}}))
    manager.update_config("train.batch_size", 4)
    manager.update_config("experiments.alphas", [0.0, 0.1])
    cfg = manager.run_config()
    assert cfg.train.batch_size == 4 and cfg.train.epochs == 30
    assert cfg.experiments.alphas == [0.0, 0.1]


def test_save_and_reload(tmp_path):
    manager = ConfigManager(write_config(tmp_path, {"seed": 5}))
    manager.update_config("variant", "dag")
    saved = tmp_path / "saved.yaml"
    manager.save_config(str(saved))
    assert ConfigManager(str(saved)).run_config().variant == "dag"


def test_ensure_directories(tmp_path):
    manager = ConfigManager(write_config(tmp_path, {
        "output_dir": str(tmp_path / "out"),
        "logging": {"file": str(tmp_path / "logs" / "run.log")},
        "cache": {"cache_file": str(tmp_path / "cache" / "masks.npz")}
    }))
    manager.ensure_directories()
    assert (tmp_path / "out").is_dir()
    assert (tmp_path / "logs").is_dir()
    assert (tmp_path / "cache").is_dir()
