import math

import numpy as np
import pytest

from mzcoupler.errors import InvalidTau, SeriesTooShort
from mzcoupler.metrology import allan_deviation, log_taus, noise_spectrum, phase_to_path_nm
from mzcoupler.series import TimeSeries


def test_sinusoid_peak():
    dt = 1e-3
    t = dt * np.arange(2 ** 14)
    s = noise_spectrum(TimeSeries(dt, np.sin(2 * math.pi * 62.5 * t)), 1024)
    assert s.freq[np.argmax(s.density)] == pytest.approx(62.5, abs=s.df)


def test_white_noise_density_and_parseval():
    rng = np.random.default_rng(3)
    dt, sigma = 1e-3, 0.7
    x = rng.normal(0, sigma, 2 ** 18)
    s = noise_spectrum(TimeSeries(dt, x), 2048)
    # flat at sigma^2 * 2 dt away from DC and Nyquist
    assert np.median(s.density[5:-5]) == pytest.approx(sigma ** 2 * 2 * dt, rel=0.05)
    assert np.sum(s.density) * s.df == pytest.approx(np.var(x), rel=0.05)


def test_random_walk_slope():
    rng = np.random.default_rng(4)
    x = np.cumsum(rng.normal(0, 1, 2 ** 18))
    s = noise_spectrum(TimeSeries(1e-3, x), 2 ** 12)
    sel = (s.freq > 2) & (s.freq < 100)
    slope = np.polyfit(np.log10(s.freq[sel]), 10 * np.log10(s.density[sel]), 1)[0]
    assert slope == pytest.approx(-20, abs=2)


def test_spectrum_preconditions():
    ts = TimeSeries(1.0, np.zeros(100))
    with pytest.raises(ValueError):
        noise_spectrum(ts, 48)
    with pytest.raises(SeriesTooShort):
        noise_spectrum(ts, 128)


def test_allan_constant_is_zero():
    ts = TimeSeries(0.1, np.full(1000, 3.3))
    assert all(s == 0.0 for _, s in allan_deviation(ts, [0.1, 1.0, 10.0]))


def test_allan_white_noise_law():
    rng = np.random.default_rng(5)
    sigma0 = 2.0
    ts = TimeSeries(1.0, rng.normal(0, sigma0, 1_000_000))
    # >= 500 blocks keeps the estimator scatter near 3 %
    for m in (1, 4, 16, 64, 256, 1000, 2000):
        (_, s), = allan_deviation(ts, [float(m)])
        assert s == pytest.approx(sigma0 / math.sqrt(m), rel=0.10)


def test_allan_ramp_closed_form():
    a, dt = 0.37, 0.01
    ts = TimeSeries(dt, a * dt * np.arange(10_000))
    for tau, s in allan_deviation(ts, [0.01, 0.1, 0.5, 3.0]):
        assert s == pytest.approx(a * tau / math.sqrt(2), abs=1e-9)


def test_allan_rejects_bad_tau():
    ts = TimeSeries(0.1, np.zeros(100))
    with pytest.raises(InvalidTau):
        allan_deviation(ts, [0.15])
    with pytest.raises(SeriesTooShort):
        allan_deviation(ts, [4.0])


def test_log_taus_are_multiples():
    ts = TimeSeries(0.25, np.zeros(1000))
    taus = log_taus(ts)
    assert taus[0] == 0.25 and taus == sorted(taus)
    allan_deviation(ts, taus)


def test_phase_to_path():
    assert phase_to_path_nm(0.6, 810) == pytest.approx(1.35)
    assert phase_to_path_nm(360, 633) == pytest.approx(633)
    assert phase_to_path_nm(1, 830) == pytest.approx(2.306, abs=5e-4)
