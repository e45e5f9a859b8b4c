"""Click statistics of SPADs behind the time multiplexer.

Photons are classical, independently routed particles. A time-multiplexed
detector with bins ``w_k`` (per-photon probability of reaching bin ``k``
and being detected) reports the number ``m`` of bins that fired.
"""
from __future__ import annotations

import csv
import heapq
import io
import json
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import TooManyBins
from .series import Histogram

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class SpadModel:
    efficiency: float = 0.6
    jitter_ns: float = 0.3  # FWHM
    dead_time_ns: float = 25.0
    afterpulse_prob: float = 0.01
    dark_rate_hz: float = 100.0
    # afterpulse delay after re-arming: exponential, truncated
    afterpulse_mean_ns: float = 50.0
    afterpulse_max_ns: float = 1000.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        if not 0.0 <= self.afterpulse_prob < 0.1:
            raise ValueError("afterpulse_prob must lie in [0, 0.1)")
        if self.jitter_ns < 0 or self.dead_time_ns < 0 or self.dark_rate_hz < 0:
            raise ValueError("jitter, dead time and dark rate must be >= 0")
        if not self.afterpulse_mean_ns > 0 or not self.afterpulse_max_ns > 0:
            raise ValueError("afterpulse delay parameters must be positive")

    @classmethod
    def ideal(cls, **kw) -> "SpadModel":
        base = dict(efficiency=1.0, jitter_ns=0.0, dead_time_ns=0.0,
                    afterpulse_prob=0.0, dark_rate_hz=0.0)
        base.update(kw)
        return cls(**base)

    def afterpulse_cdf(self, delay_after_rearm):
        """CDF of the afterpulse delay measured from the end of dead time."""
        x = np.clip(np.asarray(delay_after_rearm, dtype=float), 0.0, self.afterpulse_max_ns)
        norm = -math.expm1(-self.afterpulse_max_ns / self.afterpulse_mean_ns)
        return -np.expm1(-x / self.afterpulse_mean_ns) / norm

    def sample_afterpulse_delay(self, u):
        """Inverse-CDF draw from uniforms ``u``; includes the dead time."""
        norm = -math.expm1(-self.afterpulse_max_ns / self.afterpulse_mean_ns)
        return self.dead_time_ns - self.afterpulse_mean_ns * np.log1p(-np.asarray(u) * norm)


@dataclass(frozen=True)
class ResponseMatrix:
    """``matrix[m, n]`` = P(m bins fire | n photons)."""

    matrix: np.ndarray
    bin_probabilities: tuple
    efficiency: float

    @property
    def n_bins(self) -> int:
        return self.matrix.shape[0] - 1

    @property
    def n_max(self) -> int:
        return self.matrix.shape[1] - 1

    def __getitem__(self, idx):
        return self.matrix[idx]

    def to_json(self) -> str:
        return json.dumps({
            "n_bins": self.n_bins,
            "n_max": self.n_max,
            "efficiency": self.efficiency,
            "bin_probabilities": list(self.bin_probabilities),
            "layout": "row-major, rows m clicks 0..n_bins, columns n photons 0..n_max",
            "matrix": self.matrix.tolist(),
        })


def _subset_sums(w: np.ndarray):
    sums = np.zeros(1)
    sizes = np.zeros(1, dtype=np.int64)
    for wk in w:
        sums = np.concatenate([sums, sums + wk])
        sizes = np.concatenate([sizes, sizes + 1])
    return sums, sizes


def pnr_response(bin_probs: Sequence[float], per_photon_efficiency: float = 1.0,
                 n_max: int = 8, max_bins: int = 20) -> ResponseMatrix:
    """Click-number distribution by inclusion-exclusion over bin subsets.

    With ``w_k = eff * p_k`` and ``l = 1 - sum(w)``,
    ``P(m|n) = sum_{t<=m} (-1)^(m-t) C(N-t, m-t) A_t(n)`` where ``A_t(n)``
    sums ``(l + w_T)^n`` over subsets ``T`` of size ``t``.
    """
    p = np.asarray(bin_probs, dtype=float)
    n_bins = len(p)
    if n_bins > max_bins:
        raise TooManyBins(f"{n_bins} bins exceed the inclusion-exclusion limit of {max_bins}")
    if np.any(p < 0) or n_max < 0 or not 0 <= per_photon_efficiency <= 1:
        raise ValueError("bin probabilities must be >= 0, n_max >= 0, efficiency in [0, 1]")
    w = per_photon_efficiency * p
    lost = 1.0 - w.sum()
    if lost < -1e-12:
        raise ValueError("bin probabilities sum to more than one")
    lost = max(lost, 0.0)
    sums, sizes = _subset_sums(w)
    base = lost + sums
    out = np.zeros((n_bins + 1, n_max + 1))
    for n in range(n_max + 1):
        vals = base ** n if n else np.ones_like(base)
        a = np.bincount(sizes, weights=vals, minlength=n_bins + 1)
        for m in range(min(n, n_bins) + 1):
            terms = [(-1) ** (m - t) * math.comb(n_bins - t, m - t) * a[t] for t in range(m + 1)]
            out[m, n] = math.fsum(terms)
    np.clip(out, 0.0, None, out=out)
    return ResponseMatrix(out, tuple(p.tolist()), float(per_photon_efficiency))


def pnr_response_equal(n_bins: int, per_photon_efficiency: float = 1.0,
                       n_max: int = 8, bin_prob: Optional[float] = None) -> ResponseMatrix:
    """Closed form for ``n_bins`` equiprobable bins.

    ``P(m|n) = C(N, m) sum_j (-1)^j C(m, j) (l + (m - j) w)^n``.
    """
    bin_prob = 1.0 / n_bins if bin_prob is None else bin_prob
    w = per_photon_efficiency * bin_prob
    lost = max(0.0, 1.0 - n_bins * w)
    out = np.zeros((n_bins + 1, n_max + 1))
    for n in range(n_max + 1):
        for m in range(min(n, n_bins) + 1):
            terms = [(-1) ** j * math.comb(m, j) * (lost + (m - j) * w) ** n for j in range(m + 1)]
            out[m, n] = math.comb(n_bins, m) * math.fsum(terms)
    np.clip(out, 0.0, None, out=out)
    return ResponseMatrix(out, (bin_prob,) * n_bins, float(per_photon_efficiency))


def sample_click_numbers(bin_probs: Sequence[float], per_photon_efficiency: float, n_photons: int,
                         trials: int, rng: np.random.Generator) -> np.ndarray:
    """Monte Carlo histogram of fired-bin counts for ideal click detectors."""
    w = per_photon_efficiency * np.asarray(bin_probs, dtype=float)
    pvals = np.append(w, max(0.0, 1.0 - w.sum()))
    occ = rng.multinomial(n_photons, pvals / pvals.sum(), size=trials)[:, :-1]
    fired = (occ > 0).sum(axis=1)
    return np.bincount(fired, minlength=len(w) + 1)


@dataclass(frozen=True)
class ClickRecord:
    detector_id: int
    time_ns: float
    origin: str  # photon | afterpulse | dark


def clicks_to_csv(clicks: Sequence[ClickRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["detector_id", "time_ns", "origin"])
    for c in clicks:
        w.writerow([c.detector_id, repr(float(c.time_ns)), c.origin])
    return buf.getvalue()


def _one_detector(det, times, spad: SpadModel, rng, window):
    n = len(times)
    keep = rng.random(n) < spad.efficiency
    t = times[keep]
    if spad.jitter_ns > 0:
        t = t + rng.normal(0.0, spad.jitter_ns / FWHM_PER_SIGMA, len(t))
    origin = np.zeros(len(t), dtype=np.int8)
    if spad.dark_rate_hz > 0 and window is not None:
        t_lo, t_hi = window
        n_dark = rng.poisson(spad.dark_rate_hz * (t_hi - t_lo) * 1e-9)
        t = np.concatenate([t, rng.uniform(t_lo, t_hi, n_dark)])
        origin = np.concatenate([origin, np.full(n_dark, 2, dtype=np.int8)])
    order = np.argsort(t, kind="stable")
    t, origin = t[order].tolist(), origin[order].tolist()

    names = ("photon", "afterpulse", "dark")
    out = []
    pending = []  # afterpulse heap
    last = -math.inf
    i = 0
    ap = spad.afterpulse_prob
    while i < len(t) or pending:
        if pending and (i >= len(t) or pending[0] < t[i]):
            ti, oi = heapq.heappop(pending), 1
        else:
            ti, oi = t[i], origin[i]
            i += 1
        if ti - last < spad.dead_time_ns:
            continue
        last = ti
        out.append(ClickRecord(det, ti, names[oi]))
        if ap > 0 and rng.random() < ap:
            heapq.heappush(pending, ti + float(spad.sample_afterpulse_delay(rng.random())))
    return out


def click_pipeline(photon_times, spad: SpadModel, rng: np.random.Generator,
                   detector_ids=None, window: Optional[tuple] = None) -> list[ClickRecord]:
    """Turn photon arrival times into recorded clicks.

    Per detector: efficiency thinning, Gaussian jitter, Poisson dark counts
    over ``window`` (defaults to the span of the photon times), dead-time
    veto against the previous accepted click, and afterpulses spawned by
    accepted clicks. Clicks come back sorted by detector then time.
    """
    times = np.asarray(photon_times, dtype=float)
    ids = np.zeros(len(times), dtype=np.int64) if detector_ids is None else np.asarray(detector_ids)
    if window is None and len(times):
        window = (float(times.min()), float(times.max()))
    dets = np.unique(ids).tolist()
    if not dets:
        dets = [0]
    out = []
    for det in dets:
        out.extend(_one_detector(int(det), times[ids == det], spad, rng, window))
    return out


def afterpulse_delay_profile(bin_width_ns: float, spad: SpadModel, n_offsets: int,
                             click_offset_ns: Optional[float] = None,
                             n_grid: int = 400) -> np.ndarray:
    """Probability that an afterpulse lands ``j`` bins after its parent click.

    ``click_offset_ns`` is the parent's position inside its bin; ``None``
    averages over a uniform position.
    """
    if click_offset_ns is None:
        u = (np.arange(n_grid) + 0.5) / n_grid * bin_width_ns
    else:
        u = np.array([float(click_offset_ns)])
    j = np.arange(n_offsets + 1)[:, None]
    edges = j * bin_width_ns - u[None, :] - spad.dead_time_ns
    cdf = spad.afterpulse_cdf(edges)
    return np.diff(cdf, axis=0).mean(axis=1)


def afterpulse_correct(hist: Histogram, afterpulse_prob: float,
                       delay_profile) -> tuple[Histogram, np.ndarray]:
    """Subtract expected afterpulse counts from every port of ``hist``.

    ``delay_profile[j]`` is the probability that an afterpulse lands ``j``
    bins after its parent (``j = 0`` is the parent's own bin). Returns the
    clamped corrected histogram and the subtracted total per port.
    """
    if not 0.0 <= afterpulse_prob <= 0.1:
        raise ValueError("afterpulse_prob must lie in [0, 0.1]")
    prof = np.asarray(delay_profile, dtype=float)
    counts = hist.counts.astype(float)
    n_bins = counts.shape[1]
    expected = np.vstack([afterpulse_prob * np.convolve(row, prof)[:n_bins] for row in counts])
    corrected = np.clip(counts - expected, 0.0, None)
    subtracted = (counts - corrected).sum(axis=1)
    return replace(hist, counts=corrected), subtracted
