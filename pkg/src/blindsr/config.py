"""INI config files with sections [model], [train], [degradation], [paths].

Values omitted from the file keep their defaults. Command-line overrides use
dot paths (``train.total_iters=2000``) and win over file values; every
non-dry run writes the effective config back out as a snapshot.
"""

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import get_type_hints

from .model import ModelConfig
from .training import DegradationConfig, TrainConfig

_BOOLEANS = {"1": True, "true": True, "yes": True, "on": True,
             "0": False, "false": False, "no": False, "off": False}


@dataclass
class PathsConfig:
    data_dir: str = ""
    val_dir: str = ""
    out_dir: str = ""
    pca: str = ""
    checkpoint: str = ""


@dataclass
class Config:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    degradation: DegradationConfig = field(default_factory=DegradationConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)


SECTION_TYPES = {
    "model": ModelConfig,
    "train": TrainConfig,
    "degradation": DegradationConfig,
    "paths": PathsConfig,
}


def _coerce(raw: str, target: type):
    if target is bool:
        lowered = raw.strip().lower()
        if lowered not in _BOOLEANS:
            raise ValueError(f"cannot parse {raw!r} as bool")
        return _BOOLEANS[lowered]
    if target is int:
        return int(raw)
    if target is float:
        return float(raw)
    return raw


def _collect(path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    raw: dict[str, dict[str, str]] = {}
    for section in parser.sections():
        if section not in SECTION_TYPES:
            raise ValueError(f"unknown config section [{section}]")
        raw[section] = dict(parser.items(section))
    return raw


def parse_override(text: str) -> tuple[str, str, str]:
    """Split 'section.key=value' into its parts."""
    if "=" not in text:
        raise ValueError(f"override {text!r} is not of the form section.key=value")
    dotted, value = text.split("=", 1)
    if "." not in dotted:
        raise ValueError(f"override key {dotted!r} is not of the form section.key")
    section, key = dotted.split(".", 1)
    if section not in SECTION_TYPES:
        raise ValueError(f"unknown config section {section!r} in override {text!r}")
    return section, key, value


def load_config(path=None, overrides: tuple[str, ...] = ()) -> Config:
    """Defaults, then file values, then overrides; types come from the dataclasses."""
    raw: dict[str, dict[str, str]] = {s: {} for s in SECTION_TYPES}
    if path is not None:
        for section, items in _collect(path).items():
            raw[section].update(items)
    for text in overrides:
        section, key, value = parse_override(text)
        raw[section][key] = value

    built = {}
    for section, cls in SECTION_TYPES.items():
        hints = get_type_hints(cls)
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in raw[section].items():
            if key not in known:
                raise ValueError(f"unknown key {key!r} in section [{section}]")
            kwargs[key] = _coerce(value, hints[key])
        built[section] = cls(**kwargs)
    return Config(**built)


def save_config(config: Config, path) -> None:
    parser = configparser.ConfigParser()
    for section, cls in SECTION_TYPES.items():
        obj = getattr(config, section)
        parser[section] = {f.name: str(getattr(obj, f.name)) for f in fields(cls)}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        parser.write(f)


def format_config(config: Config) -> str:
    lines = []
    for section, cls in SECTION_TYPES.items():
        lines.append(f"[{section}]")
        obj = getattr(config, section)
        lines += [f"{f.name} = {getattr(obj, f.name)}" for f in fields(cls)]
        lines.append("")
    return "\n".join(lines)
