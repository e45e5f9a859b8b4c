import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mzcoupler.counting import (
    SpadModel, afterpulse_correct, afterpulse_delay_profile, click_pipeline, clicks_to_csv,
    pnr_response, pnr_response_equal, sample_click_numbers,
)
from mzcoupler.errors import TooManyBins
from mzcoupler.rng import stream
from mzcoupler.series import Histogram


def brute_force(bin_probs, eff, n):
    """Enumerate every photon-to-outcome assignment (last outcome = lost)."""
    w = [eff * p for p in bin_probs]
    outcomes = w + [1.0 - sum(w)]
    lost = len(w)
    dist = np.zeros(len(w) + 1)
    for assign in itertools.product(range(len(outcomes)), repeat=n):
        prob = math.prod(outcomes[a] for a in assign)
        dist[len({a for a in assign if a != lost})] += prob
    return dist


def test_pnr_examples():
    r = pnr_response([0.25] * 4, 1.0, 4)
    assert r[2, 2] == pytest.approx(0.75, abs=1e-12)
    assert r[1, 2] == pytest.approx(0.25, abs=1e-12)
    assert r[:, 2] == pytest.approx(brute_force([0.25] * 4, 1.0, 2), abs=1e-12)
    assert r[0, 0] == 1.0
    r2 = pnr_response([0.3, 0.7], 1.0, 2)
    assert r2[2, 2] == pytest.approx(0.42, abs=1e-12)


@pytest.mark.parametrize("probs,eff", [([0.25] * 4, 1.0), ([0.1, 0.2, 0.3, 0.4], 0.7),
                                       ([0.05, 0.3, 0.15], 0.5), ([0.2] * 5, 0.9)])
def test_pnr_matches_enumeration(probs, eff):
    r = pnr_response(probs, eff, 5)
    for n in range(6):
        assert r[:, n] == pytest.approx(brute_force(probs, eff, n), abs=1e-12)


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8), st.floats(0.0, 1.0),
       st.integers(0, 8))
def test_columns_are_distributions(raw, eff, n_max):
    total = sum(raw)
    probs = [x / total for x in raw] if total > 0 else raw
    r = pnr_response(probs, eff, n_max)
    assert np.all(r.matrix >= 0)
    assert r.matrix.sum(axis=0) == pytest.approx(np.ones(n_max + 1), abs=1e-12)
    for n in range(n_max + 1):
        assert not r.matrix[n + 1:, n].any()


@pytest.mark.parametrize("n_bins", range(1, 9))
@pytest.mark.parametrize("eff", [1.0, 0.6])
def test_equal_fast_path(n_bins, eff):
    fast = pnr_response_equal(n_bins, eff, 8)
    general = pnr_response([1.0 / n_bins] * n_bins, eff, 8)
    assert fast.matrix == pytest.approx(general.matrix, abs=1e-12)


def test_too_many_bins():
    with pytest.raises(TooManyBins):
        pnr_response([0.01] * 21, 1.0, 2)
    pnr_response([0.05] * 20, 1.0, 2)


def test_monte_carlo_convergence():
    r = pnr_response([0.25] * 4, 1.0, 4)
    rng = stream(10)
    for n in range(5):
        counts = sample_click_numbers([0.25] * 4, 1.0, n, 1_000_000, rng)
        tv = 0.5 * np.abs(counts / counts.sum() - r[:, n]).sum()
        assert tv <= 0.01


def test_response_json():
    d = json.loads(pnr_response([0.5, 0.5], 1.0, 2).to_json())
    assert d["matrix"] == [[1.0, 0.0, 0.0], [0.0, 1.0, 0.5], [0.0, 0.0, 0.5]]
    assert d["n_bins"] == 2 and d["n_max"] == 2


def test_dead_time_veto():
    spad = SpadModel.ideal(dead_time_ns=25.0)
    assert len(click_pipeline([0.0, 10.0], spad, stream(1))) == 1
    assert len(click_pipeline([0.0, 60.0], spad, stream(1))) == 2


def test_dark_counts_only():
    spad = SpadModel.ideal(efficiency=0.0, dark_rate_hz=1e5)
    window = (0.0, 1e6)  # 1 ms -> 100 expected
    totals = [len(click_pipeline([10.0, 20.0], spad, stream(s), window=window)) for s in range(300)]
    assert np.mean(totals) == pytest.approx(100.0, abs=3 * math.sqrt(100 / 300))
    clicks = click_pipeline([10.0], spad, stream(1), window=window)
    assert {c.origin for c in clicks} == {"dark"}


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1e4), max_size=200), st.floats(0, 100), st.integers(0, 2 ** 31))
def test_dead_time_respected(times, dead, seed):
    spad = SpadModel(efficiency=0.8, jitter_ns=0.3, dead_time_ns=dead, afterpulse_prob=0.09,
                     dark_rate_hz=1e5)
    ids = np.arange(len(times)) % 2
    clicks = click_pipeline(sorted(times), spad, stream(seed), detector_ids=ids)
    for det in (0, 1):
        t = np.array([c.time_ns for c in clicks if c.detector_id == det])
        if len(t) > 1:
            assert np.all(np.diff(t) >= dead)


def test_click_csv():
    clicks = click_pipeline([1.0], SpadModel.ideal(), stream(1))
    assert clicks_to_csv(clicks) == "detector_id,time_ns,origin\n0,1.0,photon\n"


def test_afterpulse_identity_and_delta():
    h = Histogram(np.arange(5.0), np.array([[1000, 0, 0, 0]]), ports=("p",))
    same, sub = afterpulse_correct(h, 0.0, [0, 1])
    assert np.array_equal(same.counts, h.counts) and sub[0] == 0
    h2 = Histogram(np.arange(5.0), np.array([[1000, 500, 0, 0]]), ports=("p",))
    corrected, sub = afterpulse_correct(h2, 0.01, [0.0, 1.0])
    assert corrected.port(0)[1] == pytest.approx(490.0)
    assert corrected.port(0)[2] == 0.0  # 5 expected, clamped at zero
    assert sub[0] == pytest.approx(10.0)


def test_delay_profile_normalization():
    spad = SpadModel(dead_time_ns=25.0, afterpulse_mean_ns=50.0, afterpulse_max_ns=1000.0)
    prof = afterpulse_delay_profile(60.0, spad, 40, click_offset_ns=30.0)
    assert prof.sum() == pytest.approx(1.0, abs=1e-12)
    norm = -math.expm1(-1000.0 / 50.0)
    # same bin iff 30 + 25 + x < 60
    assert prof[0] == pytest.approx(-math.expm1(-5.0 / 50.0) / norm, rel=1e-12)
    prof_u = afterpulse_delay_profile(60.0, spad, 40)
    assert prof_u.sum() == pytest.approx(1.0, abs=1e-12)


def _train(spad, rng, n_trials, period=2000.0, width=60.0, n_bins=8):
    # alternate single photons into bin 0 and bin 3 (bin centers)
    times = np.arange(n_trials) * period + np.where(np.arange(n_trials) % 2, 3.5, 0.5) * width
    clicks = click_pipeline(times, spad, rng, window=(0.0, n_trials * period))
    t = np.array([c.time_ns for c in clicks])
    idx = np.floor(np.mod(t, period) / width).astype(int)
    counts = np.bincount(idx[idx < n_bins], minlength=n_bins)[:n_bins]
    return Histogram(np.arange(n_bins + 1) * width, counts[None, :], ports=("p",))


def test_afterpulse_round_trip():
    ap = SpadModel(efficiency=1.0, jitter_ns=0.0, dead_time_ns=25.0, afterpulse_prob=0.05,
                   dark_rate_hz=0.0)
    clean = SpadModel(efficiency=1.0, jitter_ns=0.0, dead_time_ns=25.0, afterpulse_prob=0.0,
                      dark_rate_hz=0.0)
    n = 200_000
    noisy = _train(ap, stream(8), n)
    ref = _train(clean, stream(8), n)
    prof = afterpulse_delay_profile(60.0, ap, 7, click_offset_ns=30.0)
    corrected, sub = afterpulse_correct(noisy, ap.afterpulse_prob, prof)
    expected_ap = noisy.counts - ref.counts
    assert sub[0] == pytest.approx(expected_ap.sum(), rel=0.05)
    diff = corrected.port(0) - ref.port(0)
    tol = 3 * np.sqrt(np.maximum(expected_ap[0], 1)) + 1
    assert np.all(np.abs(diff) <= tol)
