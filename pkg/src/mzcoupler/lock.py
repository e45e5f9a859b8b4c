"""Discrete-time simulation of the MZI phase lock.

Signal chain per step: phase noise advances, the two reference photodiodes
are read, the normalized error drives a PID (plus optional second
integrator), the controller output passes the fiber-stretcher low-pass and
range clamp, and the correction lands on the next step.

Sign convention: the error is ``(v1 - v2) / (v1 + v2) ~ V cos(phi)``, which is
``-V * delta`` around the pi/2 lock point, so a positive error *raises* the
actuator phase.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .errors import SignalLost
from .optics import CouplerModel
from .rng import stream
from .series import TimeSeries

LOCK_POINT = math.pi / 2


@dataclass(frozen=True)
class PhaseNoiseConfig:
    drift_rw_deg_per_sqrt_s: float = 0.0
    # (frequency Hz, amplitude deg, phase rad)
    acoustic_lines: tuple = ()
    seed: int = 0

    def __post_init__(self):
        lines = tuple(tuple(float(x) for x in line) for line in self.acoustic_lines)
        for f, a, _ in lines:
            if not f > 0 or a < 0:
                raise ValueError(f"acoustic line needs f > 0 and amplitude >= 0, got {(f, a)}")
        if self.drift_rw_deg_per_sqrt_s < 0:
            raise ValueError("drift must be >= 0")
        object.__setattr__(self, "acoustic_lines", lines)


# Open loop drifts by ~120 deg RMS over ten minutes; a 30 Hz lock holds it
# well below one degree.
DESK_SCENARIO = PhaseNoiseConfig(
    drift_rw_deg_per_sqrt_s=5.0,
    acoustic_lines=((7.0, 1.0, 0.0), (50.0, 0.3, 0.0)),
    seed=20190101,
)
# Stronger disturbances; a 30 Hz loop leaves roughly 1.8 deg RMS here.
HARSH_SCENARIO = PhaseNoiseConfig(
    drift_rw_deg_per_sqrt_s=20.0,
    acoustic_lines=((7.0, 5.0, 0.0), (50.0, 2.0, 0.0)),
    seed=20190101,
)


@dataclass(frozen=True)
class ReferenceReadout:
    reference_power_w: float = 100e-12
    responsivity_v_per_w: float = 1e9
    nep_w_per_sqrt_hz: float = 9e-15
    detection_bandwidth_hz: float = 1e3
    amplitude_flicker_rel: float = 0.05
    visibility: float = 1.0
    # Allan deviation of the PD1/PD2 gain imbalance (1/f process); moves
    # the lock point and sets the long-term stability floor
    balance_flicker: float = 4e-4
    # v1 + v2 below this fraction of the nominal sum counts as dropout
    floor_fraction: float = 0.1

    def __post_init__(self):
        for name in ("reference_power_w", "responsivity_v_per_w",
                     "nep_w_per_sqrt_hz", "detection_bandwidth_hz"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.amplitude_flicker_rel < 0 or self.balance_flicker < 0:
            raise ValueError("flicker levels must be >= 0")
        if not 0 < self.visibility <= 1:
            raise ValueError("reference visibility must lie in (0, 1]")

    @property
    def full_scale_v(self) -> float:
        return self.reference_power_w * self.responsivity_v_per_w

    @property
    def noise_std_v(self) -> float:
        return (self.nep_w_per_sqrt_hz * math.sqrt(self.detection_bandwidth_hz)
                * self.responsivity_v_per_w)

    @property
    def floor_v(self) -> float:
        return self.floor_fraction * self.full_scale_v


@dataclass(frozen=True)
class StretcherModel:
    range_um: float = 35.0
    wavelength_nm: float = 830.0
    bandwidth_hz: float = 1e3
    range_rad: float = field(init=False)

    def __post_init__(self):
        if not self.range_um > 0 or not self.wavelength_nm > 0 or not self.bandwidth_hz > 0:
            raise ValueError("stretcher parameters must be positive")
        object.__setattr__(
            self, "range_rad", 2 * math.pi * self.range_um * 1000.0 / self.wavelength_nm
        )


@dataclass(frozen=True)
class PidGains:
    kp: float = 0.0
    ki: float = 2 * math.pi * 30.0  # 1/s
    kd: float = 0.0  # s
    # second-integrator corner; 0 disables it
    boost_hz: float = 0.0
    loop_bandwidth_hz: float = 30.0

    def __post_init__(self):
        for name in ("kp", "ki", "kd", "boost_hz"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not self.loop_bandwidth_hz > 0:
            raise ValueError("loop_bandwidth_hz must be positive")
        if self.boost_hz < 0:
            raise ValueError("boost_hz must be >= 0")

    @property
    def kb(self) -> float:
        """Second-integrator gain, 1/s^2."""
        return self.ki * 2 * math.pi * self.boost_hz


@dataclass
class LockRunResult:
    phase_error: TimeSeries
    transmittance: TimeSeries
    actuator: TimeSeries
    unlocked: TimeSeries
    open_phase_error: TimeSeries
    open_transmittance: TimeSeries
    saturation_times: list
    gains: PidGains

    @property
    def saturated(self) -> bool:
        return bool(self.saturation_times)


def pink_noise(n: int, dt: float, level: float, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean noise with one-sided PSD ``level / f``."""
    if level == 0.0 or n < 2:
        return np.zeros(n)
    w = rng.standard_normal(n)
    spec = np.fft.rfft(w)
    f = np.fft.rfftfreq(n, dt)
    scale = np.zeros_like(f)
    # unit-variance white noise has one-sided PSD 2*dt
    scale[1:] = np.sqrt(level / f[1:] / (2.0 * dt))
    return np.fft.irfft(spec * scale, n)


def flicker_for_allan(sigma_allan: float) -> float:
    """PSD coefficient h of ``h/f`` noise whose Allan deviation is ``sigma_allan``."""
    return sigma_allan ** 2 / (2.0 * math.log(2.0))


def _n_samples(duration_s: float, dt_s: float) -> int:
    if not dt_s > 0 or duration_s < dt_s:
        raise ValueError("need duration >= dt > 0")
    return int(math.floor(duration_s / dt_s + 1e-9)) + 1


def simulate_phase_noise(cfg: PhaseNoiseConfig, duration_s: float, dt_s: float,
                         rng: np.random.Generator | None = None) -> TimeSeries:
    """Random walk plus sinusoidal lines, in radians, starting at zero."""
    n = _n_samples(duration_s, dt_s)
    rng = stream(cfg.seed, 0, 1) if rng is None else rng
    phase = np.zeros(n)
    if cfg.drift_rw_deg_per_sqrt_s > 0:
        step = math.radians(cfg.drift_rw_deg_per_sqrt_s) * math.sqrt(dt_s)
        phase[1:] = np.cumsum(rng.normal(0.0, step, n - 1))
    t = dt_s * np.arange(n)
    for f, amp_deg, ph in cfg.acoustic_lines:
        phase += math.radians(amp_deg) * np.sin(2 * math.pi * f * t + ph)
    return TimeSeries(dt_s, phase)


def photodiode_signals(phase, readout: ReferenceReadout, rng: np.random.Generator | None = None,
                       amplitude=1.0, imbalance=0.0):
    """Voltages of the two reference photodiodes.

    ``amplitude`` is the common-mode reference power factor and ``imbalance``
    the fractional PD1/PD2 gain difference. Without ``rng`` the readout is
    noiseless.
    """
    phase = np.asarray(phase, dtype=float)
    c = readout.visibility * np.cos(phase)
    base = 0.5 * readout.full_scale_v * np.asarray(amplitude)
    v1 = base * (1.0 + c) * (1.0 + 0.5 * np.asarray(imbalance))
    v2 = base * (1.0 - c) * (1.0 - 0.5 * np.asarray(imbalance))
    if rng is not None:
        sd = readout.noise_std_v
        v1 = v1 + rng.normal(0.0, sd, np.shape(v1))
        v2 = v2 + rng.normal(0.0, sd, np.shape(v2))
    if v1.ndim == 0:
        return float(v1), float(v2)
    return v1, v2


def error_signal(v1, v2, floor: float = 0.0):
    """Amplitude-normalized error ``(v1 - v2) / (v1 + v2)``."""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    total = v1 + v2
    if np.any(total <= floor):
        raise SignalLost(f"photodiode sum {float(np.min(total)):.3g} V at or below floor {floor:.3g} V")
    e = (v1 - v2) / total
    return float(e) if e.ndim == 0 else e


@njit(cache=True)
def _loop_kernel(noise, n1, n2, amp, imb, full_scale, vis_ref, kp, ki, kb, kd, dt,
                 alpha, half_range, floor):
    n = noise.shape[0]
    delta = np.empty(n)
    act_out = np.empty(n)
    flags = np.zeros(n, dtype=np.uint8)  # bit0 signal lost, bit1 saturated
    act = 0.0
    u = 0.0
    s = 0.0
    e1 = 0.0
    e2 = 0.0
    for k in range(n):
        d = noise[k] + act
        delta[k] = d
        c = vis_ref * math.cos(LOCK_POINT + d)
        base = 0.5 * full_scale * amp[k]
        v1 = base * (1.0 + c) * (1.0 + 0.5 * imb[k]) + n1[k]
        v2 = base * (1.0 - c) * (1.0 - 0.5 * imb[k]) + n2[k]
        total = v1 + v2
        if total <= floor:
            # reference dropout: hold the controller
            flags[k] |= 1
        else:
            e = (v1 - v2) / total
            s_new = s + dt * e
            du = kp * (e - e1) + ki * dt * e + kb * dt * s_new + kd * (e - 2.0 * e1 + e2) / dt
            u_new = u + du
            if u_new > half_range or u_new < -half_range:
                flags[k] |= 2
                u_new = half_range if u_new > 0 else -half_range
            else:
                s = s_new
            u = u_new
            e2 = e1
            e1 = e
        act += alpha * (u - act)
        if act > half_range:
            act = half_range
            flags[k] |= 2
        elif act < -half_range:
            act = -half_range
            flags[k] |= 2
        act_out[k] = act
    return delta, act_out, flags


@dataclass
class _Drive:
    """Pre-drawn noise arrays shared by the open- and closed-loop paths."""

    noise: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    amp: np.ndarray
    imb: np.ndarray


def _draw(plant: PhaseNoiseConfig, readout: ReferenceReadout, duration_s, dt_s) -> _Drive:
    noise = simulate_phase_noise(plant, duration_s, dt_s).values
    n = len(noise)
    rng = stream(plant.seed, 0, 2)
    sd = readout.noise_std_v
    n1 = rng.normal(0.0, sd, n)
    n2 = rng.normal(0.0, sd, n)
    amp = 1.0 + pink_noise(n, dt_s, 1.0, rng)
    if readout.amplitude_flicker_rel > 0:
        fl = amp - 1.0
        amp = 1.0 + fl * (readout.amplitude_flicker_rel / max(fl.std(), 1e-300))
    else:
        amp = np.ones(n)
    imb = pink_noise(n, dt_s, flicker_for_allan(readout.balance_flicker), rng)
    return _Drive(noise, n1, n2, amp, imb)


def _run_kernel(drive: _Drive, readout, stretcher, gains, dt_s):
    alpha = 1.0 - math.exp(-2 * math.pi * stretcher.bandwidth_hz * dt_s)
    return _loop_kernel(
        drive.noise, drive.n1, drive.n2, drive.amp, drive.imb, readout.full_scale_v,
        readout.visibility, gains.kp, gains.ki, gains.kb, gains.kd, dt_s, alpha,
        0.5 * stretcher.range_rad, readout.floor_v,
    )


def _check_dt(gains: PidGains, dt_s: float):
    if dt_s * gains.loop_bandwidth_hz > 0.05:
        raise ValueError(
            f"dt={dt_s} s too coarse for a {gains.loop_bandwidth_hz} Hz loop "
            "(need dt * bandwidth <= 0.05)"
        )


def run_closed_loop(plant: PhaseNoiseConfig, readout: ReferenceReadout,
                    stretcher: StretcherModel, gains: PidGains, coupler: CouplerModel,
                    duration_s: float, dt_s: float = 1e-4) -> LockRunResult:
    """Paired closed- and open-loop runs from identical noise draws.

    Phase error is the deviation of the interferometer phase from the lock
    point; the signal sits at ``coupler.bias_phase`` plus that error.
    """
    _check_dt(gains, dt_s)
    drive = _draw(plant, readout, duration_s, dt_s)
    delta, act, flags = _run_kernel(drive, readout, stretcher, gains, dt_s)
    v = coupler.visibility
    trans = (1.0 - v * np.cos(coupler.bias_phase + delta)) / 2.0
    open_trans = (1.0 - v * np.cos(coupler.bias_phase + drive.noise)) / 2.0
    sat_idx = np.flatnonzero(flags & 2)
    return LockRunResult(
        phase_error=TimeSeries(dt_s, delta),
        transmittance=TimeSeries(dt_s, trans),
        actuator=TimeSeries(dt_s, act),
        unlocked=TimeSeries(dt_s, (flags != 0).astype(float)),
        open_phase_error=TimeSeries(dt_s, drive.noise),
        open_transmittance=TimeSeries(dt_s, open_trans),
        saturation_times=(sat_idx * dt_s).tolist(),
        gains=gains,
    )


def closed_loop_gain(freq_hz: float, readout: ReferenceReadout, stretcher: StretcherModel,
                     gains: PidGains, dt_s: float = 1e-4, amplitude_rad: float = 0.01) -> float:
    """|T(f)|: actuator response to a small injected phase tone, noiseless readout."""
    periods_settle = max(5.0, 0.5 * freq_hz)
    periods_meas = 5.0
    n_per = 1.0 / (freq_hz * dt_s)
    n_settle = int(math.ceil(periods_settle * n_per))
    n_meas = int(round(math.ceil(periods_meas * n_per) / n_per) * n_per) or int(n_per)
    n = n_settle + n_meas
    t = dt_s * np.arange(n)
    tone = amplitude_rad * np.sin(2 * math.pi * freq_hz * t)
    z = np.zeros(n)
    quiet = replace(readout, amplitude_flicker_rel=0.0, balance_flicker=0.0)
    drive = _Drive(tone, z, z, np.ones(n), z)
    _, act, _ = _run_kernel(drive, quiet, stretcher, gains, dt_s)
    ref = np.exp(-2j * math.pi * freq_hz * t[n_settle:])
    return float(abs(np.dot(act[n_settle:], ref)) / abs(np.dot(tone[n_settle:], ref)))


def measure_bandwidth(readout: ReferenceReadout, stretcher: StretcherModel, gains: PidGains,
                      dt_s: float = 1e-4) -> float:
    """Highest frequency where |T| falls through -3 dB."""
    target = 1.0 / math.sqrt(2.0)
    f_hi = 0.2 / dt_s
    grid = np.geomspace(0.1, f_hi, 40)
    vals = [closed_loop_gain(f, readout, stretcher, gains, dt_s) for f in grid]
    idx = None
    for i in range(len(grid) - 1, 0, -1):
        if vals[i] < target <= vals[i - 1]:
            idx = i
            break
    if idx is None:
        return float(grid[0]) if vals[0] < target else float(f_hi)
    lo, hi = math.log(grid[idx - 1]), math.log(grid[idx])
    for _ in range(20):
        mid = 0.5 * (lo + hi)
        if closed_loop_gain(math.exp(mid), readout, stretcher, gains, dt_s) >= target:
            lo = mid
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi))


def tune_gains(readout: ReferenceReadout = ReferenceReadout(),
               stretcher: StretcherModel = StretcherModel(), target_hz: float = 30.0,
               boost_ratio: float = 1.0 / 3.0, kp: float = 0.0, kd: float = 0.0,
               dt_s: float = 1e-4, tol: float = 0.02) -> PidGains:
    """Scan the integral gain until the measured closed-loop bandwidth hits
    ``target_hz``; the second-integrator corner tracks ``boost_ratio`` times
    the integrator crossover."""

    def gains_for(ki):
        return PidGains(kp=kp, ki=ki, kd=kd, boost_hz=boost_ratio * ki / (2 * math.pi),
                        loop_bandwidth_hz=target_hz)

    _check_dt(gains_for(1.0), dt_s)
    gain_scale = readout.visibility
    lo = math.log(2 * math.pi * target_hz / gain_scale / 8)
    hi = math.log(2 * math.pi * target_hz / gain_scale * 4)
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        bw = measure_bandwidth(readout, stretcher, gains_for(math.exp(mid)), dt_s)
        if abs(bw / target_hz - 1.0) < tol:
            break
        if bw < target_hz:
            lo = mid
        else:
            hi = mid
    return gains_for(math.exp(mid))


_TUNED = {}


def default_gains(readout: ReferenceReadout = ReferenceReadout(),
                  stretcher: StretcherModel = StretcherModel(), target_hz: float = 30.0,
                  dt_s: float = 1e-4) -> PidGains:
    """Memoized :func:`tune_gains` for the given hardware."""
    key = (readout, stretcher, target_hz, dt_s)
    if key not in _TUNED:
        _TUNED[key] = tune_gains(readout, stretcher, target_hz, dt_s=dt_s)
    return _TUNED[key]
