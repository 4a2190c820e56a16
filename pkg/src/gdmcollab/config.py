"""Service configuration: one TOML file, pointed at by GDM_CONFIG.

Covers the listen address, the bearer-token map, optional numeric overrides
for the named thresholds, the default round cap for iterative policies, and
the data directory holding the event log.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .aggregation import ThresholdMap
from .canonical import as_fraction

ENV_VAR = "GDM_CONFIG"


@dataclass
class Config:
    host: str = "127.0.0.1"
    port: int = 8080
    data_dir: str = "./data"
    max_rounds_default: int = 5
    fsync: bool = True
    tokens: dict = field(default_factory=dict)  # bearer token -> userId
    thresholds: ThresholdMap = field(default_factory=ThresholdMap)

    @property
    def log_path(self) -> str:
        return os.path.join(self.data_dir, "gdm.log")

    @property
    def snapshot_path(self) -> str:
        return os.path.join(self.data_dir, "snapshot.json")


def load_config(path: Optional[str] = None) -> Config:
    path = path or os.environ.get(ENV_VAR)
    if path is None:
        return Config()
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    thresholds = ThresholdMap(
        low=as_fraction(data.get("thresholds", {}).get("low", "1/2")),
        medium=as_fraction(data.get("thresholds", {}).get("medium", "2/3")),
        high=as_fraction(data.get("thresholds", {}).get("high", "4/5")),
    )
    return Config(
        host=data.get("host", "127.0.0.1"),
        port=int(data.get("port", 8080)),
        data_dir=data.get("data_dir", "./data"),
        max_rounds_default=int(data.get("max_rounds_default", 5)),
        fsync=bool(data.get("fsync", True)),
        tokens=dict(data.get("tokens", {})),
        thresholds=thresholds,
    )
