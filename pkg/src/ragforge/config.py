"""Service configuration.

One TOML file drives the whole service:

    [service]
    data_dir = "./ragforge-data"
    host = "127.0.0.1"
    port = 8080
    models = "models.toml"        # path relative to this file

The RAGFORGE_DATA_DIR environment variable overrides data_dir.  All
persistent state (KB snapshots, run traces, reports) lives under data_dir.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigError

DATA_DIR_ENV = "RAGFORGE_DATA_DIR"


@dataclass(frozen=True)
class ServiceConfig:
    data_dir: Path
    host: str = "127.0.0.1"
    port: int = 8080
    models_path: Path | None = None

    @property
    def kb_dir(self) -> Path:
        return self.data_dir / "kb"

    @property
    def runs_dir(self) -> Path:
        return self.data_dir / "runs"

    @property
    def reports_dir(self) -> Path:
        return self.data_dir / "reports"

    def ensure_layout(self) -> None:
        for d in (self.data_dir, self.kb_dir, self.runs_dir, self.reports_dir):
            d.mkdir(parents=True, exist_ok=True)


def load_config(path: str | Path | None = None,
                data_dir: str | Path | None = None) -> ServiceConfig:
    """Builds the config from an optional TOML file plus overrides; the
    data-dir environment variable wins over the file."""
    values: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"no such config file: {path}")
        with path.open("rb") as f:
            data = tomllib.load(f)
        section = data.get("service", {})
        unknown = set(section) - {"data_dir", "host", "port", "models"}
        if unknown:
            raise ConfigError(f"unknown [service] keys: {sorted(unknown)}")
        base = path.parent
        if "data_dir" in section:
            values["data_dir"] = base / section["data_dir"]
        if "host" in section:
            values["host"] = section["host"]
        if "port" in section:
            values["port"] = int(section["port"])
        if "models" in section:
            values["models_path"] = base / section["models"]
    if data_dir is not None:
        values["data_dir"] = Path(data_dir)
    env_dir = os.environ.get(DATA_DIR_ENV)
    if env_dir:
        values["data_dir"] = Path(env_dir)
    values.setdefault("data_dir", Path("./ragforge-data"))
    return ServiceConfig(**values)
