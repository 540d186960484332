"""Layered experiment configuration: packaged preset, user file, CLI overrides.

The packaged preset (presets/default.cfg) is the single source of truth for
defaults; a user configuration file and repeated ``--set section.key=value``
overrides are merged on top. Every key must already exist in the preset, so
typos fail loudly with the offending key named.
"""

from __future__ import annotations

import configparser
from importlib import resources


class ConfigError(Exception):
    """Base class for configuration problems."""


class ConfigParseError(ConfigError):
    """The configuration file could not be parsed."""


class UnknownKeyError(ConfigError):
    """A section or key is not part of the configuration schema."""


def _coerce(text):
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def _parse_ini(text, origin):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigParseError(f"cannot parse {origin}: {exc}") from exc
    return {section: {key: _coerce(value) for key, value in parser[section].items()}
            for section in parser.sections()}


def load_defaults():
    """Parse the packaged preset into a nested {section: {key: value}} dict."""
    text = resources.files("ringpair").joinpath("presets/default.cfg").read_text()
    return _parse_ini(text, "presets/default.cfg")


def _convert_like(default, raw, where):
    if isinstance(raw, str):
        raw = _coerce(raw)
    if isinstance(default, bool):
        if isinstance(raw, bool):
            return raw
        raise ConfigParseError(f"{where} expects true/false, got {raw!r}")
    if isinstance(default, float) and isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return float(raw)
    if isinstance(default, int) and isinstance(raw, int) and not isinstance(raw, bool):
        return raw
    if isinstance(default, str):
        return str(raw)
    if type(default) is type(raw):
        return raw
    raise ConfigParseError(f"{where} expects {type(default).__name__}, got {raw!r}")


def _merge(base, extra, origin):
    for section, keys in extra.items():
        if section not in base:
            raise UnknownKeyError(f"unknown config section [{section}] in {origin}")
        for key, value in keys.items():
            if key not in base[section]:
                raise UnknownKeyError(f"unknown config key {section}.{key} in {origin}")
            base[section][key] = _convert_like(base[section][key], value, f"{section}.{key}")
    return base


def load_config(path=None, overrides=()):
    """Resolved configuration: preset, then ``path`` (if any), then overrides.

    Overrides are "section.key=value" strings. Unknown sections or keys raise
    UnknownKeyError naming the offender; malformed files raise
    ConfigParseError.
    """
    cfg = load_defaults()
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigParseError(f"cannot read config file {path}: {exc}") from exc
        _merge(cfg, _parse_ini(text, str(path)), str(path))
    for item in overrides:
        if "=" not in item:
            raise ConfigParseError(f"override {item!r} is not of the form section.key=value")
        dotted, value = item.split("=", 1)
        if dotted.count(".") < 1:
            raise ConfigParseError(f"override key {dotted!r} must be section.key")
        section, key = dotted.rsplit(".", 1)
        _merge(cfg, {section: {key: value}}, "--set")
    return cfg
