"""Service configuration: TOML file with environment-variable overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigError

ENV_PREFIX = "RETAUG_"


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8787
    store: str = "./curator-store"
    workers: int = 2
    static_dir: Optional[str] = None

    @property
    def addr(self) -> str:
        return f"{self.host}:{self.port}"


def parse_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"addr must look like HOST:PORT, got {addr!r}")
    return host, int(port)


def load_config(path=None, env=None) -> ServiceConfig:
    """Defaults <- TOML file <- RETAUG_* environment variables."""
    env = os.environ if env is None else env
    cfg = ServiceConfig()

    if path is not None:
        with open(Path(path), "rb") as fh:
            data = tomllib.load(fh)
        service = data.get("service", data)
        if "addr" in service:
            cfg.host, cfg.port = parse_addr(service["addr"])
        cfg.host = service.get("host", cfg.host)
        cfg.port = int(service.get("port", cfg.port))
        cfg.store = service.get("store", cfg.store)
        cfg.workers = int(service.get("workers", cfg.workers))
        cfg.static_dir = service.get("static_dir", cfg.static_dir)

    if ENV_PREFIX + "ADDR" in env:
        cfg.host, cfg.port = parse_addr(env[ENV_PREFIX + "ADDR"])
    cfg.host = env.get(ENV_PREFIX + "HOST", cfg.host)
    cfg.port = int(env.get(ENV_PREFIX + "PORT", cfg.port))
    cfg.store = env.get(ENV_PREFIX + "STORE", cfg.store)
    cfg.workers = int(env.get(ENV_PREFIX + "WORKERS", cfg.workers))
    cfg.static_dir = env.get(ENV_PREFIX + "STATIC_DIR", cfg.static_dir)

    if cfg.workers < 1:
        raise ConfigError(f"workers must be >= 1, got {cfg.workers}")
    return cfg
