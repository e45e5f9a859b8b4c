"""Stability metrology: averaged periodograms and Allan deviation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import InvalidTau, SeriesTooShort
from .series import TimeSeries


@dataclass(frozen=True)
class Spectrum:
    freq: np.ndarray
    density: np.ndarray

    @property
    def df(self) -> float:
        return float(self.freq[1] - self.freq[0])

    def band_power(self, f_lo: float, f_hi: float) -> float:
        """Integrated power over ``f_lo < f <= f_hi``."""
        sel = (self.freq > f_lo) & (self.freq <= f_hi)
        return float(self.density[sel].sum() * self.df)

    def at(self, f: float) -> float:
        return float(self.density[np.argmin(np.abs(self.freq - f))])


def noise_spectrum(series: TimeSeries, segment_len: int) -> Spectrum:
    """One-sided power spectral density by Welch averaging.

    Hann-windowed segments with 50 % overlap, mean removed per segment.
    """
    n = len(series)
    if segment_len < 2 or segment_len & (segment_len - 1):
        raise ValueError(f"segment_len must be a power of two >= 2, got {segment_len}")
    if n < 2 or segment_len > n:
        raise SeriesTooShort(f"series of {n} samples shorter than segment {segment_len}")
    f, p = signal.welch(
        series.values, fs=1.0 / series.dt, window="hann", nperseg=segment_len,
        noverlap=segment_len // 2, detrend="constant", scaling="density",
    )
    return Spectrum(f, p)


def _tau_to_m(tau: float, dt: float) -> int:
    ratio = tau / dt
    m = int(round(ratio))
    if m < 1 or abs(ratio - m) > 1e-9 * max(1.0, ratio):
        raise InvalidTau(f"tau={tau} is not a positive integer multiple of dt={dt}")
    return m


def allan_deviation(series: TimeSeries, taus) -> list[tuple[float, float]]:
    """Non-overlapping Allan deviation at each averaging time in ``taus``."""
    y = series.values
    if len(y) < 2:
        raise SeriesTooShort("need at least two samples")
    out = []
    for tau in taus:
        m = _tau_to_m(float(tau), series.dt)
        n_blocks = len(y) // m
        if n_blocks < 3:
            raise SeriesTooShort(f"tau={tau} needs {3 * m} samples, have {len(y)}")
        means = y[: n_blocks * m].reshape(n_blocks, m).mean(axis=1)
        d = np.diff(means)
        out.append((float(tau), float(np.sqrt(0.5 * np.mean(d * d)))))
    return out


def log_taus(series: TimeSeries, per_decade: int = 4, min_blocks: int = 3) -> list[float]:
    """Averaging times on a log grid, all integer multiples of ``dt``."""
    max_m = len(series) // min_blocks
    if max_m < 1:
        raise SeriesTooShort("series too short for any averaging time")
    n_pts = int(per_decade * np.log10(max_m)) + 1
    ms = np.unique(np.round(np.logspace(0, np.log10(max_m), n_pts)).astype(int))
    ms = ms[(ms >= 1) & (ms <= max_m)]
    return [float(m * series.dt) for m in ms]


def phase_to_path_nm(phase_deg: float, wavelength_nm: float) -> float:
    if not wavelength_nm > 0:
        raise ValueError("wavelength must be positive")
    return phase_deg / 360.0 * wavelength_nm
