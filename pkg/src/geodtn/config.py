"""Scenario configuration: a flat TOML table validated into :class:`ScenarioConfig`."""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .routing import Scheme


class ConfigError(ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class ValidationError(ConfigError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "custom"
    scheme: str = "s-tbgr"
    seed: int = 1

    # "rwp" moves nodes on an open rectangle; "poi" walks a map graph
    mobility: str = "rwp"
    node_count: int = 50
    area_width: float = 1000.0
    area_height: float = 1000.0
    # rwp destinations as [x, y]; empty means one at the area centre
    destinations: tuple = ()

    # "grid" builds the synthetic four-area map, anything else is a map file path
    map: str = "grid"
    grid_cols: int = 12
    grid_rows: int = 9
    grid_spacing: float = 250.0
    pois_per_area: int = 10
    interest: float = 0.8
    destination_count: int = 3
    destination_variation: float = 0.0

    speed_min: float = 5.0
    speed_max: float = 5.0
    wait_min: float = 0.0
    wait_max: float = 0.0

    range: float = 10.0
    bandwidth: float = 2e6  # bit/s
    slot_duration: float = 1.0

    copies: int = 8  # L
    ttl: float = 1200.0
    message_size: int = 1000  # bytes
    generation_interval: float = 30.0
    # False: one message network-wide per interval; True: one per node per interval
    generation_per_node: bool = False
    warmup: float = 0.0
    generation_end: float = 4800.0
    drain: float = 1200.0
    buffer_capacity: float = math.inf  # bytes
    window: float = 5.0  # W, seconds
    # None: on for tbhgr only
    ack_dissemination: bool | None = None

    def __post_init__(self):
        validate(self)

    @property
    def horizon(self) -> float:
        return self.generation_end + self.drain

    @property
    def scheme_id(self) -> Scheme:
        return Scheme.parse(self.scheme)

    @property
    def acks_enabled(self) -> bool:
        if self.ack_dissemination is None:
            return self.scheme_id is Scheme.TBHGR
        return self.ack_dissemination

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = [list(p) for p in v]
            if v is None or (isinstance(v, float) and math.isinf(v)):
                continue
            out[f.name] = v
        return out


FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}


def validate(cfg: ScenarioConfig) -> None:
    def need(cond, name, msg):
        if not cond:
            raise ValidationError(name, msg)

    try:
        Scheme.parse(cfg.scheme)
    except ValueError as exc:
        raise ValidationError("scheme", str(exc)) from None
    need(cfg.mobility in ("rwp", "poi"), "mobility", "must be 'rwp' or 'poi'")
    need(cfg.node_count >= 0, "node_count", "must be >= 0")
    need(cfg.area_width > 0 and cfg.area_height > 0, "area", "dimensions must be > 0")
    for p in cfg.destinations:
        need(len(p) == 2, "destinations", "each destination is [x, y]")
    need(cfg.grid_cols >= 2 and cfg.grid_rows >= 2, "grid", "needs at least 2x2 coordinates")
    need(cfg.grid_spacing > 0, "grid_spacing", "must be > 0")
    need(cfg.pois_per_area >= 1, "pois_per_area", "must be >= 1")
    need(0.0 <= cfg.interest <= 1.0, "interest", "must lie in [0, 1]")
    need(cfg.destination_count >= 1, "destination_count", "must be >= 1")
    need(cfg.destination_variation >= 0, "destination_variation", "must be >= 0")
    need(0 < cfg.speed_min <= cfg.speed_max, "speed", "need 0 < speed_min <= speed_max")
    need(0 <= cfg.wait_min <= cfg.wait_max, "wait", "need 0 <= wait_min <= wait_max")
    need(cfg.range > 0, "range", "must be > 0")
    need(cfg.bandwidth > 0, "bandwidth", "must be > 0")
    need(cfg.slot_duration > 0, "slot_duration", "must be > 0")
    need(cfg.copies >= 1, "copies", "L must be >= 1")
    need(cfg.ttl > 0, "ttl", "must be > 0")
    need(cfg.message_size > 0, "message_size", "must be > 0")
    need(cfg.generation_interval > 0, "generation_interval", "must be > 0")
    need(cfg.warmup >= 0, "warmup", "must be >= 0")
    need(cfg.generation_end > cfg.warmup, "generation_end", "must be later than warmup")
    need(cfg.drain > 0, "drain", "must be > 0")
    need(cfg.buffer_capacity >= cfg.message_size, "buffer_capacity", "must hold at least one message")
    need(cfg.window > 0, "window", "must be > 0")


def _coerce(name: str, value, line=None):
    kind = FIELD_TYPES[name]
    try:
        if kind == "bool" or kind == "bool | None":
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
            return value
        if kind == "float":
            if isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
                return math.inf
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError
            return float(value)
        if kind == "str":
            if not isinstance(value, str):
                raise TypeError
            return value
        if kind == "tuple":
            return tuple(tuple(float(c) for c in p) for p in value)
    except (TypeError, ValueError):
        raise ParseError(f"expected {kind}, got {value!r}", line, name) from None
    raise ParseError(f"unsupported field type {kind}", line, name)  # pragma: no cover


def _key_lines(text: str) -> dict[str, int]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        head = raw.split("#", 1)[0]
        if "=" in head:
            out.setdefault(head.split("=", 1)[0].strip().strip('"'), lineno)
    return out


def config_from_dict(data: dict, base: ScenarioConfig | None = None, lines: dict | None = None) -> ScenarioConfig:
    lines = lines or {}
    values = {}
    for key, value in data.items():
        if key not in FIELD_TYPES:
            raise ParseError("unknown key", lines.get(key), key)
        values[key] = _coerce(key, value, lines.get(key))
    if base is None:
        return ScenarioConfig(**values)
    return base.replace(**values)


def parse_config(text: str) -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(str(exc), getattr(exc, "lineno", None)) from None
    lines = _key_lines(text)
    for key, value in data.items():
        if isinstance(value, dict):
            raise ParseError("tables are not allowed in a scenario config", lines.get(key), key)
    return config_from_dict(data, lines=lines)


PRESETS = ("rwp-small", "rwp-analytic", "poi-small")


def preset_text(name: str) -> str:
    return resources.files("geodtn.presets").joinpath(f"{name}.toml").read_text()


def load_config(path) -> ScenarioConfig:
    """Load a scenario from a TOML file, or a shipped preset by name."""
    p = Path(path)
    if not p.exists() and str(path) in PRESETS:
        return parse_config(preset_text(str(path)))
    if not p.exists():
        raise ConfigError(f"no such config file or preset: {path}")
    return parse_config(p.read_text())
