"""
Config file loading
Flat `key = value` files whose keys are the SimConfig field names, layered
as defaults < file < command-line overrides.
"""

import logging
from dataclasses import fields, replace
from typing import Any, Callable, Dict, Mapping, Optional, Tuple

from model.domain import (
    MAPPER_PRESETS,
    ConfigInvalid,
    KeywordDist,
    MapperConfig,
    Policy,
    PowerModel,
    ServiceModel,
    SimConfig,
    Topology,
    validate_config,
)

logger = logging.getLogger(__name__)

# leaf key -> (SimConfig section holding it, or None for top level; value parser)
_SECTIONS = {
    "topology": Topology,
    "service_model": ServiceModel,
    "power_model": PowerModel,
    "mapper": MapperConfig,
}
_TOP_LEVEL_PARSERS: Dict[str, Callable[[str], Any]] = {
    "thread_pool_size": int,
    "qps": float,
    "duration_s": float,
    "keyword_dist": KeywordDist.parse,
    "migration_overhead_ms": float,
    "rng_seed": int,
    "policy": Policy.parse,
}
_INT_FIELDS = {"big_cores", "little_cores"}


def _build_key_table() -> Dict[str, Tuple[Optional[str], Callable[[str], Any]]]:
    table: Dict[str, Tuple[Optional[str], Callable[[str], Any]]] = {}
    for section, cls in _SECTIONS.items():
        for f in fields(cls):
            table[f.name] = (section, int if f.name in _INT_FIELDS else float)
    for key, parser in _TOP_LEVEL_PARSERS.items():
        table[key] = (None, parser)
    return table


CONFIG_KEYS = _build_key_table()


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """Split a config file into raw key/value strings; `#` starts a comment."""
    settings: Dict[str, str] = {}
    problems = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            problems.append(f"{source}:{lineno}: expected 'key = value'")
        elif key not in CONFIG_KEYS:
            problems.append(f"{source}:{lineno}: unknown key '{key}'")
        else:
            settings[key] = value
    if problems:
        raise ConfigInvalid(problems)
    return settings


def apply_settings(cfg: SimConfig, settings: Mapping[str, Any]) -> SimConfig:
    """
    Overlay settings onto a config

    Values may be raw strings (parsed per key) or already-typed values.

    Raises:
        ConfigInvalid: unknown key or unparsable value
    """
    problems = []
    top_level: Dict[str, Any] = {}
    sections: Dict[str, Dict[str, Any]] = {}
    for key, raw in settings.items():
        if key not in CONFIG_KEYS:
            problems.append(f"unknown key '{key}'")
            continue
        section, parser = CONFIG_KEYS[key]
        try:
            value = parser(raw) if isinstance(raw, str) else raw
        except (ValueError, OverflowError) as e:
            problems.append(f"{key}: cannot parse '{raw}' ({e})")
            continue
        if section is None:
            top_level[key] = value
        else:
            sections.setdefault(section, {})[key] = value
    if problems:
        raise ConfigInvalid(problems)

    for section, changes in sections.items():
        top_level[section] = replace(getattr(cfg, section), **changes)
    return replace(cfg, **top_level)


def load_config(path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None,
                preset: Optional[str] = None, validate: bool = True) -> SimConfig:
    """
    Build a SimConfig from defaults, an optional preset, an optional file and overrides

    Raises:
        ConfigInvalid: unreadable keys/values, or (when validate) invariant violations
    """
    cfg = SimConfig()
    if preset is not None:
        if preset not in MAPPER_PRESETS:
            raise ConfigInvalid([f"unknown preset '{preset}' (choose from {', '.join(MAPPER_PRESETS)})"])
        cfg = replace(cfg, mapper=MAPPER_PRESETS[preset])
    if path is not None:
        with open(path, "r") as f:
            cfg = apply_settings(cfg, parse_config_text(f.read(), source=path))
        logger.info(f"Loaded config from {path}")
    if overrides:
        cfg = apply_settings(cfg, overrides)
    if validate:
        violations = validate_config(cfg)
        if violations:
            raise ConfigInvalid(violations)
    return cfg


def config_to_text(cfg: SimConfig) -> str:
    """Render a config in the file format; load_config reads it back unchanged."""
    lines = []
    for section in _SECTIONS:
        lines.append(f"# {section}")
        values = getattr(cfg, section)
        for f in fields(values):
            lines.append(f"{f.name} = {getattr(values, f.name)!r}")
    lines.append("# run")
    for key in _TOP_LEVEL_PARSERS:
        value = getattr(cfg, key)
        if isinstance(value, Policy):
            value = value.value
        elif isinstance(value, KeywordDist):
            value = str(value)
        else:
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
