"""Simulation of a switchable fiber MZI coupler and its loop multiplexer."""

__version__ = "0.1.0"

from .optics import (  # noqa: F401
    CouplerModel, SplitRatio, crosstalk_probability, extinction_ratio_db, fiber_delay_ns,
    phase_for_ratio, transmittance, voltage_for_phase,
)
