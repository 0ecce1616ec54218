from pathlib import Path

import pytest

from ragforge.config import DATA_DIR_ENV, ServiceConfig, load_config
from ragforge.errors import ConfigError


def test_defaults(monkeypatch):
    monkeypatch.delenv(DATA_DIR_ENV, raising=False)
    cfg = load_config()
    assert cfg.data_dir == Path("./ragforge-data")
    assert cfg.host == "127.0.0.1"
    assert cfg.port == 8080
    assert cfg.models_path is None


def test_file_paths_resolve_relative_to_file(tmp_path, monkeypatch):
    monkeypatch.delenv(DATA_DIR_ENV, raising=False)
    conf = tmp_path / "service.toml"
    conf.write_text(
        '[service]\ndata_dir = "state"\nhost = "0.0.0.0"\nport = 9000\n'
        'models = "models.toml"\n', encoding="utf-8")
    cfg = load_config(conf)
    assert cfg.data_dir == tmp_path / "state"
    assert cfg.host == "0.0.0.0"
    assert cfg.port == 9000
    assert cfg.models_path == tmp_path / "models.toml"


def test_env_var_wins_over_file(tmp_path, monkeypatch):
    conf = tmp_path / "service.toml"
    conf.write_text('[service]\ndata_dir = "state"\n', encoding="utf-8")
    monkeypatch.setenv(DATA_DIR_ENV, str(tmp_path / "env-state"))
    cfg = load_config(conf, data_dir=tmp_path / "arg-state")
    assert cfg.data_dir == tmp_path / "env-state"


def test_argument_wins_over_file(tmp_path, monkeypatch):
    monkeypatch.delenv(DATA_DIR_ENV, raising=False)
    conf = tmp_path / "service.toml"
    conf.write_text('[service]\ndata_dir = "state"\n', encoding="utf-8")
    cfg = load_config(conf, data_dir=tmp_path / "arg-state")
    assert cfg.data_dir == tmp_path / "arg-state"


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")


def test_unknown_key(tmp_path):
    conf = tmp_path / "service.toml"
    conf.write_text('[service]\nworkers = 4\n', encoding="utf-8")
    with pytest.raises(ConfigError) as info:
        load_config(conf)
    assert "workers" in str(info.value)


def test_layout_dirs(tmp_path):
    cfg = ServiceConfig(data_dir=tmp_path / "root")
    assert cfg.kb_dir == tmp_path / "root" / "kb"
    assert cfg.runs_dir == tmp_path / "root" / "runs"
    assert cfg.reports_dir == tmp_path / "root" / "reports"
    cfg.ensure_layout()
    for d in (cfg.data_dir, cfg.kb_dir, cfg.runs_dir, cfg.reports_dir):
        assert d.is_dir()
    cfg.ensure_layout()  # idempotent
