"""
Configuration: one TOML file plus command-line flags, flags winning.

    log_level = "INFO"

    [build]
    seed = 0
    train_fraction = 0.8
    out_dir = "data"

    [infer]
    runs_dir = "runs"
    template = "T4_MULTI"

    [[endpoint]]
    name = "Chat_Lora_32_1"
    base_url = "http://127.0.0.1:8000"
    adaptation = "QKVO"
    rank = 32
    template = "T4_MULTI"
"""

import dataclasses
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from typing import Optional

from ..common.errors import ConfigError
from ..instruct_dataset.templates import TemplateId
from ..llm_inference.client import EndpointConfig

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

# TOML endpoint keys that differ from EndpointConfig field names.
_ENDPOINT_KEY_ALIASES = {"template": "trained_template"}


@dataclass(frozen=True)
class BuildSettings:
    seed: int = 0
    train_fraction: float = 0.8
    out_dir: str = "data"


@dataclass(frozen=True)
class InferenceSettings:
    runs_dir: str = "runs"
    template: str = TemplateId.T4_MULTI.name
    max_concurrency: Optional[int] = None
    temperature: Optional[float] = None
    request_timeout: Optional[float] = None

    def template_id(self):
        return TemplateId.parse(self.template)


def load_config(path):
    """Parsed TOML as a dict; an empty dict when path is None."""
    if path is None:
        return {}
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError("{}: {}".format(path, e)) from e
    except OSError as e:
        raise OSError("cannot read config {}: {}".format(path, e.strerror)) from e


def _merge(cls, table, overrides):
    """Instance of settings dataclass `cls` from file values, then non-None flags."""
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(table) - known)
    if unknown:
        raise ConfigError("unknown {} keys: {}".format(cls.__name__, ", ".join(unknown)))
    values = dict(table)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return cls(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def build_settings(config, **overrides):
    return _merge(BuildSettings, config.get("build", {}), overrides)


def inference_settings(config, **overrides):
    settings = _merge(InferenceSettings, config.get("infer", {}), overrides)
    try:
        settings.template_id()
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return settings


def log_level(config, flag=None):
    level = (flag or config.get("log_level", "INFO")).upper()
    if level not in LOG_LEVELS:
        raise ConfigError("log level must be one of {}, got {}".format(LOG_LEVELS, level))
    return level


def endpoint_from_table(table, settings=None):
    """
    Args:
    - table: one [[endpoint]] table.
    - settings: InferenceSettings whose non-None request fields override
      the table's.

    Raises:
    - ConfigError: missing name/base_url, unknown keys or invalid values.
    """
    known = {f.name for f in dataclasses.fields(EndpointConfig)}
    values = {}
    for key, value in table.items():
        key = _ENDPOINT_KEY_ALIASES.get(key, key)
        if key not in known:
            raise ConfigError("endpoint {!r}: unknown key {!r}".format(table.get("name"), key))
        values[key] = value
    for key in ("name", "base_url"):
        if key not in values:
            raise ConfigError("endpoint table missing {!r}: {}".format(key, table))
    if values.get("trained_template") is not None:
        try:
            values["trained_template"] = TemplateId.parse(values["trained_template"]).name
        except ValueError as e:
            raise ConfigError(str(e)) from e
    if settings is not None:
        for key in ("max_concurrency", "temperature", "request_timeout"):
            if getattr(settings, key) is not None:
                values[key] = getattr(settings, key)
    try:
        return EndpointConfig(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError("endpoint {!r}: {}".format(values.get("name"), e)) from e


def load_endpoints(config, settings=None):
    tables = config.get("endpoint", [])
    if not tables:
        raise ConfigError("no [[endpoint]] tables configured")
    endpoints = [endpoint_from_table(t, settings) for t in tables]
    names = [e.name for e in endpoints]
    if len(set(names)) != len(names):
        raise ConfigError("endpoint names must be unique: {}".format(names))
    return endpoints
