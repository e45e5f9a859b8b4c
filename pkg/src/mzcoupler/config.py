"""Experiment configuration: JSON documents mapped onto dataclasses.

Unknown keys are rejected with their dotted path; every default is written
back into the resolved echo so a run can be reproduced from it alone.
"""
from __future__ import annotations

import dataclasses
import json
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .counting import SpadModel
from .errors import ConfigInvalid
from .lock import DESK_SCENARIO, PhaseNoiseConfig, PidGains, ReferenceReadout, StretcherModel
from .multiplexer import LoopConfig
from .optics import CouplerModel
from .switching import ResponseChain

SCHEMA_VERSION = 1
OUTPUT_ENV = "MZCOUPLER_OUT"

# Four-bin qudit targets; the first is the balanced PNR setting
QUDIT_TARGETS = (
    (0.25, 0.25, 0.25, 0.25),
    (0.4, 0.3, 0.2, 0.1),
    (0.5, 0.25, 0.125, 0.125),
    (0.1, 0.4, 0.4, 0.1),
    (0.3, 0.2, 0.2, 0.3),
    (0.7, 0.1, 0.1, 0.1),
)


@dataclass
class LockSection:
    plant: PhaseNoiseConfig = DESK_SCENARIO
    readout: ReferenceReadout = ReferenceReadout()
    stretcher: StretcherModel = StretcherModel()
    # None: tune the integral gain to the target bandwidth before the run
    gains: Optional[PidGains] = None
    bandwidth_hz: float = 30.0
    setpoint_transmit: float = 0.5
    duration_s: float = 600.0
    dt_s: float = 1e-4
    segment_len: int = 2 ** 20
    csv_decimation: int = 100


@dataclass
class SwitchSection:
    chain: ResponseChain = ResponseChain()
    start: str = "100:0"
    end: str = "0:100"
    events: int = 1_000_000
    window_ns: float = 10.0
    dt_ns: float = 0.005
    quantize: bool = False
    measured_rise_ns: float = 0.7


@dataclass
class ScheduleSection:
    loop: LoopConfig = LoopConfig()
    bins: int = 4
    target: Optional[list] = None
    cap: int = 1000


@dataclass
class PnrSection:
    bins: int = 4
    bin_probs: Optional[list] = None
    efficiency: float = 1.0
    n_max: int = 8
    trials: int = 100_000


@dataclass
class QuditSection:
    loop: LoopConfig = LoopConfig()
    spad: SpadModel = SpadModel()
    targets: list = field(default_factory=lambda: [list(t) for t in QUDIT_TARGETS])
    input_photons: int = 100_000
    mean_photons: float = 0.5
    afterpulse_correction: bool = True


@dataclass
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    scenario: str = "default"
    master_seed: int = 1
    output_dir: Optional[str] = None
    output_formats: list = field(default_factory=lambda: ["json", "csv"])
    coupler: CouplerModel = CouplerModel()
    lock: LockSection = field(default_factory=LockSection)
    switch: SwitchSection = field(default_factory=SwitchSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    pnr: PnrSection = field(default_factory=PnrSection)
    qudit: QuditSection = field(default_factory=QuditSection)

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir or os.environ.get(OUTPUT_ENV, "runs"))


def _hints(cls):
    return typing.get_type_hints(cls)


def _unwrap_optional(tp):
    if typing.get_origin(tp) is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) == 1:
            return args[0]
    return tp


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{path or '<root>'}: expected an object, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigInvalid(f"unknown key {'.'.join(filter(None, [path, unknown[0]]))!r}")
    hints = _hints(cls)
    kwargs = {}
    for name, value in data.items():
        key = f"{path}.{name}" if path else name
        tp = _unwrap_optional(hints[name])
        if value is None:
            kwargs[name] = None
        elif dataclasses.is_dataclass(tp):
            kwargs[name] = _build(tp, value, key)
        else:
            kwargs[name] = _coerce(tp, value, key)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"{path or '<root>'}: {exc}") from None


def _coerce(tp, value, key):
    if tp is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if tp is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if tp is bool and isinstance(value, bool):
        return value
    if tp is str and isinstance(value, str):
        return value
    if tp in (list, tuple) or typing.get_origin(tp) in (list, tuple):
        if isinstance(value, (list, tuple)):
            return tuple(_freeze(v) for v in value) if tp is tuple else list(value)
    if tp is typing.Any:
        return value
    raise ConfigInvalid(f"{key}: expected {getattr(tp, '__name__', tp)}, got {value!r}")


def _freeze(v):
    return tuple(_freeze(x) for x in v) if isinstance(v, list) else v


def from_dict(data: dict) -> ExperimentConfig:
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigInvalid(f"schema_version: unsupported value {version!r}")
    return _build(ExperimentConfig, data, "")


def load(path: Optional[str | Path]) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: not valid JSON ({exc})") from None
    return from_dict(data)


def to_dict(cfg) -> dict:
    def conv(obj):
        if dataclasses.is_dataclass(obj):
            return {f.name: conv(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.init}
        if isinstance(obj, (list, tuple)):
            return [conv(x) for x in obj]
        return obj

    return conv(cfg)


def apply_override(data: dict, dotted: str, value: Any) -> None:
    """Set ``a.b.c = value`` inside a nested dict, creating levels as needed."""
    keys = dotted.split(".")
    cur = data
    for k in keys[:-1]:
        nxt = cur.get(k)
        if nxt is None:
            nxt = cur[k] = {}
        if not isinstance(nxt, dict):
            raise ConfigInvalid(f"{dotted}: {k!r} is not an object")
        cur = nxt
    cur[keys[-1]] = value
