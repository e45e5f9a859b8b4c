"""Static model of the fiber MZI as a 2x2 variable coupler.

Convention: ``transmit = (1 - V cos(phase)) / 2`` so zero phase is the bar
state (0:100) and ``phase = pi`` the cross state (100:0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import DriveRangeExceeded, UnreachableRatio

SPEED_OF_LIGHT = 299_792_458.0
# rounded value used for fiber latency bookkeeping (9 m at n=1.5 -> 45 ns)
LATENCY_C = 3.0e8
# rounding slack for band-edge and drive-window comparisons
_EDGE_TOL = 1e-12


@dataclass(frozen=True)
class CouplerModel:
    visibility: float = 0.9955
    insertion_loss_db: float = 0.0
    v_pi: float = 2.2
    bias_phase: float = 0.0
    drive_min_v: float = 0.0
    drive_max_v: float = 2.2
    measured_extinction_db: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError(f"visibility must lie in [0, 1], got {self.visibility}")
        if not self.v_pi > 0:
            raise ValueError(f"v_pi must be positive, got {self.v_pi}")
        if not self.insertion_loss_db >= 0:
            raise ValueError("insertion_loss_db must be >= 0")
        if not self.drive_max_v > self.drive_min_v:
            raise ValueError("empty drive window")

    @property
    def min_transmit(self) -> float:
        return (1.0 - self.visibility) / 2.0

    @property
    def max_transmit(self) -> float:
        return (1.0 + self.visibility) / 2.0

    @property
    def loss_factor(self) -> float:
        return 10.0 ** (-self.insertion_loss_db / 10.0)


@dataclass(frozen=True)
class SplitRatio:
    """Power fraction sent to output 1; output 2 gets the remainder."""

    transmit: float

    def __post_init__(self):
        if not 0.0 <= self.transmit <= 1.0:
            raise ValueError(f"transmit must lie in [0, 1], got {self.transmit}")

    @property
    def reflect(self) -> float:
        return 1.0 - self.transmit

    @classmethod
    def parse(cls, text: str) -> "SplitRatio":
        """Parse ``"T:R"`` percentage notation, e.g. ``"55:45"``."""
        try:
            t, r = (float(x) for x in text.split(":"))
        except ValueError:
            raise ValueError(f"ratio must look like 'T:R', got {text!r}") from None
        if t < 0 or r < 0 or t + r <= 0:
            raise ValueError(f"invalid ratio {text!r}")
        return cls(t / (t + r))

    def __str__(self):
        return f"{100 * self.transmit:g}:{100 * self.reflect:g}"


def transmittance(phase: float, model: CouplerModel) -> SplitRatio:
    return SplitRatio((1.0 - model.visibility * math.cos(phase)) / 2.0)


def transmit_fraction(phase, visibility):
    """Vectorised form of :func:`transmittance` returning raw fractions."""
    import numpy as np

    return (1.0 - visibility * np.cos(phase)) / 2.0


def output_powers(phase: float, model: CouplerModel) -> tuple[float, float]:
    """Power at (output 1, output 2) for unit input, insertion loss applied."""
    t = transmittance(phase, model).transmit
    k = model.loss_factor
    return t * k, (1.0 - t) * k


def phase_for_ratio(target: SplitRatio | float, model: CouplerModel) -> float:
    """Phase in [0, pi] producing the requested transmit fraction."""
    t = target.transmit if isinstance(target, SplitRatio) else float(target)
    lo, hi = model.min_transmit, model.max_transmit
    if t < lo - _EDGE_TOL or t > hi + _EDGE_TOL:
        raise UnreachableRatio(
            f"transmit {t} outside reachable band [{lo}, {hi}] for V={model.visibility}"
        )
    if model.visibility == 0.0:
        # every phase gives 50:50
        return math.pi / 2
    c = (1.0 - 2.0 * t) / model.visibility
    return math.acos(min(1.0, max(-1.0, c)))


def voltage_for_phase(phase: float, model: CouplerModel) -> float:
    volts = (phase - model.bias_phase) * model.v_pi / math.pi
    if volts < model.drive_min_v - _EDGE_TOL or volts > model.drive_max_v + _EDGE_TOL:
        raise DriveRangeExceeded(
            f"{volts:.6g} V outside drive window "
            f"[{model.drive_min_v}, {model.drive_max_v}] V"
        )
    return volts


def phase_for_voltage(volts, model: CouplerModel):
    """Inverse of :func:`voltage_for_phase`, no window check."""
    return model.bias_phase + volts * math.pi / model.v_pi


def extinction_ratio_db(model: CouplerModel | float) -> float:
    """Visibility-limited extinction ratio in dB.

    Returns ``math.inf`` for unit visibility; that is a flag, not an error.
    """
    v = model.visibility if isinstance(model, CouplerModel) else float(model)
    if v >= 1.0:
        return math.inf
    return 10.0 * math.log10((1.0 + v) / (1.0 - v))


def effective_extinction_db(model: CouplerModel) -> float:
    """Measured override when configured, otherwise the visibility formula."""
    if model.measured_extinction_db is not None:
        return model.measured_extinction_db
    return extinction_ratio_db(model)


def fiber_delay_ns(length_m: float, group_index: float = 1.5, c: float = LATENCY_C) -> float:
    """Propagation delay through ``length_m`` of fiber.

    ``c`` defaults to the rounded 3e8 m/s; pass ``SPEED_OF_LIGHT`` for the
    exact value (0.07 % longer delays).
    """
    if length_m < 0:
        raise ValueError("length_m must be >= 0")
    if group_index < 1:
        raise ValueError("group_index must be >= 1")
    return length_m * group_index * 1e9 / c


def crosstalk_probability(rate_per_s: float, bin_ns: float) -> float:
    """Linearized probability of a crosstalk photon inside one time bin."""
    if rate_per_s < 0 or not bin_ns > 0:
        raise ValueError("rate must be >= 0 and bin > 0")
    return rate_per_s * bin_ns / 1e9
