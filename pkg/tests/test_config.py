"""
Tests for configuration resolution and logging setup.
"""
import json
import logging

import pytest

from kernkit.config import ConfigManager, RunConfig, build_run_config
from kernkit.errors import ConfigError


@pytest.fixture
def manager():
    return ConfigManager()


@pytest.fixture
def user_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"batch_size": 8, "model": "pairwise", "n_categories": 4}))
    return path


class TestConfigManager:
    def test_defaults(self, manager):
        cfg = manager.load()
        assert cfg.feature_dim == 128
        assert cfg.float_mode == "float32"
        assert cfg.model.value == "setwise"

    def test_user_file_overrides_defaults(self, manager, user_file):
        cfg = manager.load(user_file)
        assert cfg.batch_size == 8
        assert cfg.model.value == "pairwise"
        assert cfg.n_categories == 4

    def test_unknown_key(self, manager, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"batch_size": 8, "learning_rate": 0.1}))
        with pytest.raises(ConfigError, match="learning_rate"):
            manager.load(path)

    def test_file_must_hold_object(self, manager, tmp_path):
        path = tmp_path / "list.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            manager.load(path)

    def test_environment_over_file(self, manager, user_file, monkeypatch):
        monkeypatch.setenv("KERNKIT_BATCH_SIZE", "16")
        assert manager.load(user_file).batch_size == 16

    def test_flags_over_environment(self, manager, user_file, monkeypatch):
        monkeypatch.setenv("KERNKIT_BATCH_SIZE", "16")
        cfg = manager.load(user_file, overrides={"batch_size": 32, "lr": None})
        assert cfg.batch_size == 32
        assert cfg.lr is None

    def test_invalid_value(self, manager):
        with pytest.raises(ConfigError):
            manager.load(overrides={"float_mode": "float16"})
        with pytest.raises(ConfigError):
            manager.load(overrides={"threads": 0})

    def test_effective_config_resolves_learning_rate(self, manager, user_file, tmp_path):
        path = manager.save_effective(manager.load(user_file), tmp_path / "out")
        effective = json.loads(path.read_text())
        assert path.name == "effective_config.json"
        assert effective["lr"] == 1e-4
        assert effective["batch_size"] == 8
        assert effective["pairwise_hidden"] == [512, 256]

    def test_missing_defaults_directory(self, tmp_path):
        cfg = ConfigManager(tmp_path / "nowhere").load()
        assert cfg.model_dump() == RunConfig().model_dump()


class TestDerivedConfigs:
    def test_sections(self):
        cfg = build_run_config({}, {"n_categories": 6, "image_size": 32, "seed": 9, "feature_dim": 16})
        synth = cfg.synth_config()
        assert (synth.n_categories, synth.image_size, synth.seed) == (6, 32, 9)
        assert cfg.encoder_config().feature_dim == 16
        assert cfg.train_config().learning_rate == 1e-3


class TestLogging:
    def test_json_log_file(self, manager, tmp_path):
        log_file = tmp_path / "run.log"
        manager.setup_logging(level="debug", log_file=log_file)
        try:
            logging.getLogger("kernkit.test").info("corpus ready")
            for handler in logging.getLogger().handlers:
                handler.flush()
            record = json.loads(log_file.read_text().splitlines()[-1])
            assert record["message"] == "corpus ready"
            assert record["levelname"] == "INFO"
            assert logging.getLogger().level == logging.DEBUG
        finally:
            manager.setup_logging()

    def test_json_formatter_module(self, manager, tmp_path):
        manager.setup_logging(log_file=tmp_path / "run.log")
        try:
            formatters = [type(h.formatter) for h in logging.getLogger().handlers if h.formatter is not None]
            assert any(f.__module__ == "pythonjsonlogger.json" for f in formatters)
        finally:
            manager.setup_logging()
        shipped = json.loads(manager.logging_file.read_text())
        assert "jsonlogger" not in json.dumps(shipped)
