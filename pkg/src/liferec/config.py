"""Flat ``key = value`` run configuration and the named model presets.

A config file is UTF-8 text, one assignment per line; ``#`` starts a comment.
An optional ``preset = NAME`` line seeds the values, later lines override
them. Unknown keys are rejected by name.

    preset = small-lstm-gem-net2net
    distribution = copy
    m = 3000
    c = 80
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, Optional

from .errors import ConfigError
from .harness import BenchmarkConfig

PRESETS: Dict[str, dict] = {
    "small-lstm": dict(hidden=128),
    "small-lstm-gem": dict(hidden=128, use_gem=True),
    "small-lstm-net2net": dict(hidden=128, hidden_expanded=256, use_expansion=True),
    "small-lstm-gem-net2net": dict(hidden=128, hidden_expanded=256, use_gem=True, use_expansion=True),
    "large-lstm": dict(hidden=256),
    "large-lstm-gem": dict(hidden=256, use_gem=True),
}

_OPTIONAL = {"c", "stroke_path"}
_TYPES = {f.name: f.type for f in fields(BenchmarkConfig)}


def _parse_bool(key, text):
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigError(key, f"expected a boolean, got {text!r}")


def parse_value(key: str, text: str):
    """Convert the text of one assignment to the type of ``key``."""
    if key not in _TYPES:
        raise ConfigError(key, "unknown key")
    text = text.strip()
    if key in _OPTIONAL and text.lower() in ("", "none"):
        return None
    kind = _TYPES[key]
    try:
        if "bool" in kind:
            return _parse_bool(key, text)
        if "int" in kind:
            return int(text)
        if "float" in kind:
            return float(text)
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r}") from None
    return text


def preset_values(name: str) -> dict:
    try:
        return dict(PRESETS[name.lower()])
    except KeyError:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def parse_config_text(text: str) -> dict:
    """Parse config text to a dict of typed values (preset expanded first)."""
    values: dict = {}
    preset = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in values or (key == "preset" and preset is not None):
            raise ConfigError(key, f"assigned twice (line {lineno})")
        if key == "preset":
            preset = val
        else:
            values[key] = parse_value(key, val)
    base = preset_values(preset) if preset else {}
    return {**base, **values}


def build_config(values: dict) -> BenchmarkConfig:
    unknown = sorted(set(values) - set(_TYPES))
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    try:
        return BenchmarkConfig(**values)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None


def load_config(source: str, overrides: Optional[dict] = None) -> BenchmarkConfig:
    """``source`` is a preset name or a path to a config file."""
    if source.lower() in PRESETS:
        values = preset_values(source)
    else:
        path = Path(source)
        if not path.is_file():
            raise ConfigError("config", f"{source}: neither a preset nor a readable file")
        values = parse_config_text(path.read_text(encoding="utf-8"))
    values.update(overrides or {})
    return build_config(values)


def config_to_text(config: BenchmarkConfig) -> str:
    """Serialize every key; feeding the text back yields an equal config."""
    lines = []
    for k, v in config.to_dict().items():
        if v is None:
            v = "none"
        elif isinstance(v, bool):
            v = str(v).lower()
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


@dataclass
class CliConfig:
    benchmark: BenchmarkConfig
    out_dir: Path
    run_id: str
    verbosity: int = 0
