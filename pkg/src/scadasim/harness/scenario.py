"""Scenario configuration and its flat ``key = value`` file format.

Example::

    # replay attacker against a stationary watermark
    name = replay-stationary
    rounds = 75
    watermark.mode = stationary
    watermark.sigma = 0.5
    attack.strategy = replay
    plant.A = 1, -0.1; 0, 0.6

Keys are ``section.field`` (or a bare top-level field).  Matrices are written
row by row, rows separated by ``;`` and entries by ``,``.  Lines starting
with ``#`` are comments.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..attacker.mitm import AttackConfig, Strategy
from ..control import StateSpaceModel, default_model
from ..errors import ContractViolation
from ..nodes import SignalCodecs
from ..watermark import WatermarkConfig, WatermarkMode

_DEFAULT = default_model()


def _m(a) -> list:
    return np.asarray(a).tolist()


@dataclass
class PlantConfig:
    A: list = field(default_factory=lambda: _m(_DEFAULT.A))
    B: list = field(default_factory=lambda: _m(_DEFAULT.B))
    C: list = field(default_factory=lambda: _m(_DEFAULT.C))
    Q: list = field(default_factory=lambda: _m(_DEFAULT.Q))
    R: list = field(default_factory=lambda: _m(_DEFAULT.R))
    W: list = field(default_factory=lambda: _m(_DEFAULT.W))
    U: list = field(default_factory=lambda: _m(_DEFAULT.U))
    tick_seconds: float = 0.1
    x0: list = field(default_factory=lambda: [2.0, 0.0])
    reference: list = field(default_factory=lambda: [2.0, 0.0])

    def model(self) -> StateSpaceModel:
        return StateSpaceModel(self.A, self.B, self.C, self.Q, self.R, self.W, self.U, self.tick_seconds)


@dataclass
class WatermarkSection:
    mode: str = "stationary"
    sigma: float = 0.5
    power_fraction: float = 0.0
    scale_low: float = 0.5
    scale_high: float = 2.0
    switch_probability: float = 0.02

    def build(self, seed: int, m: int, base_covariance=None) -> WatermarkConfig:
        cov = base_covariance if base_covariance is not None else (self.sigma ** 2) * np.eye(m)
        return WatermarkConfig(WatermarkMode(self.mode), cov, (self.scale_low, self.scale_high),
                               self.switch_probability, seed)


@dataclass
class DetectorSection:
    threshold: float = 0.0
    window: int = 5
    gwindow: int = 5
    target_fp: float = 0.01
    calibration_ticks: int = 20000


@dataclass
class TopologySection:
    controller_period: int = 1
    sensor_period: int = 1
    latency_ticks: int = 0
    timeout_ticks: int = 10
    registers: int = 16
    real_socket: bool = False
    distance_scale: float = 100.0
    distance_offset: float = 0.0
    command_scale: float = 1000.0
    command_offset: float = -32.768

    def codecs(self) -> SignalCodecs:
        return SignalCodecs(self.distance_scale, self.distance_offset, self.command_scale, self.command_offset)


@dataclass
class ScenarioConfig:
    name: str = "default"
    plant: PlantConfig = field(default_factory=PlantConfig)
    watermark: WatermarkSection = field(default_factory=WatermarkSection)
    detector: DetectorSection = field(default_factory=DetectorSection)
    attack: AttackConfig = field(default_factory=AttackConfig)
    topology: TopologySection = field(default_factory=TopologySection)
    round_ticks: int = 1150
    rounds: int = 75
    root_seed: int = 20240501
    sample_flag: str = "exceedance"

    def validate(self) -> "ScenarioConfig":
        if self.rounds < 1:
            raise ContractViolation("rounds must be >= 1")
        if self.attack.strategy is not Strategy.NONE and not self.attack.attack_start_tick < self.round_ticks:
            raise ContractViolation("attack_start_tick must be below round_ticks")
        if self.sample_flag not in ("exceedance", "alert"):
            raise ContractViolation("sample_flag must be 'exceedance' or 'alert'")
        WatermarkMode(self.watermark.mode)
        self.plant.model()
        return self


_SECTIONS = ("plant", "watermark", "detector", "attack", "topology")


def _parse_value(text: str, current: Any) -> Any:
    text = text.strip()
    if isinstance(current, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ContractViolation(f"not a boolean: {text!r}")
    if isinstance(current, enum_types()):
        return type(current)(text)
    if isinstance(current, int):
        return int(text, 0)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, list):
        rows = [[float(v) for v in row.split(",") if v.strip()] for row in text.split(";")]
        if isinstance(current[0] if current else None, list) or len(rows) > 1:
            return rows
        return rows[0]
    return text


def enum_types():
    return (Strategy, WatermarkMode)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, enum_types()):
        return value.value
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        if value and isinstance(value[0], list):
            return "; ".join(", ".join(repr(float(v)) for v in row) for row in value)
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def set_option(config: ScenarioConfig, key: str, text: str) -> None:
    parts = key.strip().split(".")
    target: Any = config
    if len(parts) == 2 and parts[0] in _SECTIONS:
        target = getattr(config, parts[0])
    elif len(parts) != 1:
        raise ContractViolation(f"unknown key {key!r}")
    name = parts[-1]
    if not dataclasses.is_dataclass(target) or name not in {f.name for f in dataclasses.fields(target)} \
            or name in _SECTIONS:
        raise ContractViolation(f"unknown key {key!r}")
    setattr(target, name, _parse_value(text, getattr(target, name)))


def parse_scenario(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    config = base if base is not None else ScenarioConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractViolation(f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        try:
            set_option(config, key, value)
        except (ValueError, ContractViolation) as exc:
            raise ContractViolation(f"line {lineno}: {exc}") from exc
    config.attack.__post_init__()
    return config.validate()


def load_scenario(path) -> ScenarioConfig:
    with open(path) as fh:
        return parse_scenario(fh.read())


def dump_scenario(config: ScenarioConfig) -> str:
    lines = []
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if f.name in _SECTIONS:
            for sub in dataclasses.fields(value):
                lines.append(f"{f.name}.{sub.name} = {_format_value(getattr(value, sub.name))}")
        else:
            lines.append(f"{f.name} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


# the six attack/watermark combinations
MATRIX = (
    ("replay-disabled", "replay", "disabled"),
    ("replay-stationary", "replay", "stationary"),
    ("fir-stationary", "fir", "stationary"),
    ("fir-non-stationary", "fir", "non_stationary"),
    ("arx-stationary", "arx", "stationary"),
    ("armax-stationary", "armax", "stationary"),
)


def matrix_scenarios(base: ScenarioConfig | None = None) -> list[ScenarioConfig]:
    base = base or ScenarioConfig()
    out = []
    for name, strategy, mode in MATRIX:
        cfg = parse_scenario(f"name = {name}\nattack.strategy = {strategy}\nwatermark.mode = {mode}\n",
                             parse_scenario(dump_scenario(base)))
        out.append(cfg)
    return out
