"""
Endpoint configuration for the vision-language reasoner.

    url: https://api.openai.com/v1
    model: gpt-4o
    api_key_env: OPENAI_API_KEY
    timeout: 60
    retries: 2
    history_window: 5
    include_scene_graph: true
    include_history: true
    fixture: fixtures/fig2a.yml    # replay recorded replies instead of calling the endpoint
"""

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

import yaml


class ConfigException(Exception):
    pass


@dataclass(frozen=True)
class EndpointConfig:
    url: str = "https://api.openai.com/v1"
    model: str = "gpt-4o"
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    retries: int = 2
    history_window: int = 5
    include_scene_graph: bool = True
    include_history: bool = True
    include_images: bool = True
    temperature: float = 0.0
    fixture: Path | None = None

    def __post_init__(self):
        if self.retries < 0:
            raise ConfigException("retries must be >= 0, got %r" % self.retries)
        if self.timeout <= 0:
            raise ConfigException("timeout must be positive, got %r" % self.timeout)
        if self.history_window < 0:
            raise ConfigException("history_window must be >= 0, got %r" % self.history_window)

    @property
    def api_key(self) -> str:
        """The key read from `api_key_env`; the endpoint decides whether an empty key is fine."""
        return os.environ.get(self.api_key_env, "")

    def override(self, **values: Any) -> "EndpointConfig":
        """Copy with every non-None value replaced, as CLI flags do."""
        return replace(self, **{k: v for k, v in values.items() if v is not None})

    @classmethod
    def fromdict(cls, d: dict, base: Path | None = None) -> "EndpointConfig":
        known = {f.name for f in fields(cls)}
        if unknown := sorted(set(d) - known):
            raise ConfigException("Unknown endpoint config keys: %r" % unknown)
        values = dict(d)
        if values.get("fixture") is not None:
            fixture = Path(values["fixture"])
            values["fixture"] = base / fixture if base and not fixture.is_absolute() else fixture
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigException("Bad endpoint config: %s" % e)


def load_endpoint_config(path: Path | str) -> EndpointConfig:
    """Read an endpoint config file; relative fixture paths resolve against the file's folder.

    Raises:
        ConfigException: When the file is missing, not a mapping or holds unknown keys.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigException("Could not find endpoint config: %s" % path)
    try:
        d = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as e:
        raise ConfigException("%s: invalid YAML: %s" % (path, e))
    if not isinstance(d, dict):
        raise ConfigException("%s: endpoint config must be a mapping" % path)
    return EndpointConfig.fromdict(d, path.parent)
