"""Temporal response of a switching event and rise-time bookkeeping."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import InconsistentBudget, NoEdgeFound
from .optics import CouplerModel, phase_for_ratio, phase_for_voltage, voltage_for_phase
from .series import Histogram, TimeSeries

# 10-90 % width of a Gaussian CDF in units of sigma: 2 * Phi^-1(0.9)
ERF_RISE_PER_SIGMA = 2.5631031310892007
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class ResponseChain:
    eom_bandwidth_ghz: float = 10.0
    spad_jitter_ns: float = 0.3  # FWHM
    tagger_resolution_ns: float = 0.16
    control_rise_ns: float = 0.4

    def __post_init__(self):
        for name in ("eom_bandwidth_ghz", "spad_jitter_ns", "tagger_resolution_ns",
                     "control_rise_ns"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def eom_rise_ns(self) -> float:
        """10-90 % rise of a single-pole low-pass at the EOM bandwidth."""
        return math.log(9.0) / (2 * math.pi * self.eom_bandwidth_ghz)


@dataclass(frozen=True)
class ControlPulse:
    """Electrical drive edge from ``v_start`` to ``v_end``.

    ``duration_ns=None`` keeps the end level (a step); otherwise the drive
    returns to ``v_start`` after ``duration_ns`` with the same edge shape.
    ``edge_rise_ns=0`` gives an ideal edge.
    """

    v_start: float
    v_end: float
    edge_rise_ns: float = 0.4
    start_time_ns: float = 2.0
    duration_ns: Optional[float] = None
    quantize: bool = False
    quantization_step_db: float = 0.5
    quantization_levels: int = 64

    def __post_init__(self):
        if self.edge_rise_ns < 0:
            raise ValueError("edge_rise_ns must be >= 0")
        if self.duration_ns is not None and not self.duration_ns > 0:
            raise ValueError("duration_ns must be positive")

    def amplitude(self, full_scale_v: float) -> float:
        """Edge amplitude, snapped to the attenuator grid when quantizing."""
        amp = self.v_end - self.v_start
        if not self.quantize or amp == 0.0:
            return amp
        levels = full_scale_v * 10.0 ** (
            -self.quantization_step_db * np.arange(self.quantization_levels) / 20.0
        )
        snapped = levels[np.argmin(np.abs(levels - abs(amp)))]
        return math.copysign(float(snapped), amp)

    def voltage(self, t_ns: np.ndarray, full_scale_v: float = 2.2) -> np.ndarray:
        amp = self.amplitude(full_scale_v)
        shape = _edge(t_ns - self.start_time_ns, self.edge_rise_ns)
        if self.duration_ns is not None:
            shape = shape - _edge(t_ns - self.start_time_ns - self.duration_ns, self.edge_rise_ns)
        return self.v_start + amp * shape


def _edge(t, rise):
    if rise == 0:
        return (t >= 0).astype(float)
    return ndtr(t / (rise / ERF_RISE_PER_SIGMA))


def pulse_between(start: float, end: float, coupler: CouplerModel,
                  chain: ResponseChain = ResponseChain(), **kw) -> ControlPulse:
    """Control pulse switching the coupler between two transmit fractions."""
    v0 = voltage_for_phase(phase_for_ratio(start, coupler), coupler)
    v1 = voltage_for_phase(phase_for_ratio(end, coupler), coupler)
    kw.setdefault("edge_rise_ns", chain.control_rise_ns)
    return ControlPulse(v0, v1, **kw)


def first_order_lowpass(x: np.ndarray, dt: float, bandwidth: float) -> np.ndarray:
    """Single-pole low-pass, zero-order-hold exact, starting in steady state.

    ``bandwidth`` is in the reciprocal unit of ``dt``; ``inf`` is a pass-through.
    """
    if math.isinf(bandwidth):
        return np.array(x, dtype=float)
    from scipy.signal import lfilter

    a = math.exp(-2 * math.pi * bandwidth * dt)
    y, _ = lfilter([1 - a], [1, -a], x, zi=[a * x[0]])
    return y


def phase_trajectory(pulse: ControlPulse, chain: ResponseChain, coupler: CouplerModel,
                     dt_ns: float = 0.005, window_ns: float = 10.0) -> TimeSeries:
    """EOM phase in radians versus time (ns) for a control pulse."""
    if dt_ns > 0.01:
        raise ValueError("dt_ns must be <= 0.01 to resolve 10 GHz dynamics")
    t = dt_ns * np.arange(int(round(window_ns / dt_ns)) + 1)
    volts = pulse.voltage(t, coupler.drive_max_v)
    # window check on the extremes, converted through the phase map
    for v in (volts.min(), volts.max()):
        voltage_for_phase(phase_for_voltage(v, coupler), coupler)
    phase = phase_for_voltage(volts, coupler)
    return TimeSeries(dt_ns, first_order_lowpass(phase, dt_ns, chain.eom_bandwidth_ghz))


def transmittance_trajectory(phase: TimeSeries, coupler: CouplerModel) -> TimeSeries:
    v = coupler.visibility
    return TimeSeries(phase.dt, (1.0 - v * np.cos(phase.values)) / 2.0, phase.t0)


def detection_histogram(traj: TimeSeries, chain: ResponseChain, n_events: int,
                        rng: np.random.Generator) -> Histogram:
    """Monte Carlo photon-counting histograms of both output ports.

    Arrivals are uniform over the trajectory window, routed to port 1 with
    the instantaneous transmittance, blurred by Gaussian SPAD jitter and
    binned at the tagger resolution. Events blurred past the window edges
    land in the outermost bins so the total is conserved.
    """
    if n_events < 0:
        raise ValueError("n_events must be >= 0")
    t = traj.times
    t_lo, t_hi = float(t[0]), float(t[-1])
    width = chain.tagger_resolution_ns
    n_bins = max(1, int(math.floor((t_hi - t_lo) / width)))
    edges = t_lo + width * np.arange(n_bins + 1)
    if n_events == 0:
        return Histogram(edges, np.zeros((2, n_bins), dtype=np.int64))
    arrivals = rng.uniform(t_lo, t_hi, n_events)
    p1 = np.interp(arrivals, t, traj.values)
    to_port1 = rng.random(n_events) < p1
    sigma = chain.spad_jitter_ns / FWHM_PER_SIGMA
    detected = arrivals + rng.normal(0.0, sigma, n_events)
    idx = np.clip(np.floor((detected - t_lo) / width).astype(np.int64), 0, n_bins - 1)
    counts = np.vstack([
        np.bincount(idx[to_port1], minlength=n_bins),
        np.bincount(idx[~to_port1], minlength=n_bins),
    ])
    return Histogram(edges, counts)


def rise_time_10_90(data, port=None, plateau_fraction: float = 0.2,
                    min_span_rel: float = 1e-6) -> float:
    """10-90 % transition time of a rising or falling edge.

    Accepts a :class:`TimeSeries` or a :class:`Histogram` (pick ``port``;
    defaults to the port with the larger swing). Plateau levels are medians
    of the first and last ``plateau_fraction`` of the record; crossings are
    linearly interpolated.
    """
    if isinstance(data, Histogram):
        if port is None:
            swings = [abs(np.median(c[-max(1, len(c) // 5):]) - np.median(c[:max(1, len(c) // 5)]))
                      for c in data.counts]
            port = int(np.argmax(swings))
        y = data.port(port).astype(float)
        t = data.centers
    else:
        y = np.asarray(data.values, dtype=float)
        t = data.times
    n = len(y)
    k = max(1, int(round(plateau_fraction * n)))
    if 2 * k >= n:
        raise NoEdgeFound("record too short for plateau estimation")
    lo, hi = float(np.median(y[:k])), float(np.median(y[-k:]))
    span = hi - lo
    scale = max(abs(lo), abs(hi), 1e-300)
    if abs(span) <= min_span_rel * scale or span == 0.0:
        raise NoEdgeFound("no plateau-to-plateau swing")
    z = (y - lo) / span  # rising 0 -> 1 regardless of direction
    above90 = np.flatnonzero(z >= 0.9)
    if not len(above90):
        raise NoEdgeFound("signal never reaches 90 %")
    i90 = above90[0]
    below10 = np.flatnonzero(z[:i90] < 0.1)
    if not len(below10) or i90 == 0:
        raise NoEdgeFound("signal never starts below 10 %")
    i10 = below10[-1]

    def crossing(i, level):
        # between samples i and i + 1
        z0, z1 = z[i], z[i + 1]
        return t[i] + (level - z0) / (z1 - z0) * (t[i + 1] - t[i])

    return float(crossing(i90 - 1, 0.9) - crossing(i10, 0.1))


def quadrature_compose(components: Sequence[float]) -> float:
    comps = [float(c) for c in components]
    if any(c < 0 for c in comps):
        raise ValueError("components must be >= 0")
    return math.sqrt(math.fsum(c * c for c in comps))


def quadrature_extract(total: float, knowns: Sequence[float]) -> float:
    """Remaining contribution after removing ``knowns`` from ``total`` in quadrature."""
    rad = total * total - math.fsum(k * k for k in knowns)
    if rad < -1e-15 * max(total * total, 1.0):
        raise InconsistentBudget(
            f"known contributions ({quadrature_compose(knowns):.4g}) exceed total {total:.4g}"
        )
    return math.sqrt(max(rad, 0.0))


def fig2_scenario(start: float = 1.0, end: float = 0.0, coupler: CouplerModel | None = None,
                  chain: ResponseChain = ResponseChain(), window_ns: float = 10.0,
                  dt_ns: float = 0.005) -> TimeSeries:
    """Transmittance trajectory for a step between two ratios.

    Band-edge ratios (0 or 1) are clipped to the reachable visibility band.
    """
    coupler = coupler or CouplerModel()
    lo, hi = coupler.min_transmit, coupler.max_transmit
    start, end = min(max(start, lo), hi), min(max(end, lo), hi)
    pulse = pulse_between(start, end, coupler, chain, start_time_ns=window_ns / 2)
    return transmittance_trajectory(phase_trajectory(pulse, chain, coupler, dt_ns, window_ns), coupler)
