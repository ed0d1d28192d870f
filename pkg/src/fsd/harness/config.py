"""Flat ``key = value`` configuration files.

Every knob of the pipeline (:class:`GeoConfig`) and the scenario generator
(:class:`GeneratorConfig`) can be set; missing keys keep their defaults.
``region`` selects a named generator bounding box, ``seed`` the default
random seed.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from ..geomatch.pipeline import GeoConfig
from .scenario import REGIONS, GeneratorConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class HarnessConfig:
    geo: GeoConfig = field(default_factory=GeoConfig)
    gen: GeneratorConfig = field(default_factory=GeneratorConfig)
    seed: int = 0
    # True when the file set any generator key (or a region)
    custom_generator: bool = False


_OPTIONAL = {"max_retries": int, "edge_band_m": float}


def _coerce(cls, name: str, raw: str, lineno: int):
    default = {f.name: f.default for f in dataclasses.fields(cls)}[name]
    try:
        if name in _OPTIONAL:
            return None if raw.lower() in ("none", "") else _OPTIONAL[name](raw)
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value for {name}: {raw!r}") from None


def parse_config(text: str) -> HarnessConfig:
    geo_keys = set(GeoConfig.keys())
    gen_keys = {f.name for f in dataclasses.fields(GeneratorConfig)}
    geo, gen, seed = {}, {}, 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in geo_keys:
            geo[key] = _coerce(GeoConfig, key, value, lineno)
        elif key in gen_keys:
            gen[key] = _coerce(GeneratorConfig, key, value, lineno)
        elif key == "seed":
            try:
                seed = int(value)
            except ValueError:
                raise ConfigError(f"line {lineno}: seed must be an integer") from None
        elif key == "region":
            if value not in REGIONS:
                raise ConfigError(f"line {lineno}: unknown region {value!r}")
            box = REGIONS[value]
            gen.update(lat_min=box[0], lat_max=box[1], lon_min=box[2], lon_max=box[3])
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    try:
        return HarnessConfig(GeoConfig(**geo), GeneratorConfig(**gen), seed, bool(gen))
    except ValueError as err:
        raise ConfigError(str(err)) from None


def load_config(path: str | Path | None) -> HarnessConfig:
    if path is None:
        return HarnessConfig()
    return parse_config(Path(path).read_text(encoding="utf-8"))


def format_config(cfg: HarnessConfig) -> str:
    lines = [f"seed = {cfg.seed}"]
    for part in (cfg.geo, cfg.gen):
        for f in dataclasses.fields(part):
            value = getattr(part, f.name)
            lines.append(f"{f.name} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"
