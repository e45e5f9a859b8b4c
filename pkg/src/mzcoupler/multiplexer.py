"""Loop-based time multiplexer: release schedules, propagation, fidelity.

A pulse enters the loop, and on pass ``k`` the coupler releases a fraction
``r_k`` of the circulating energy into time bin ``k``; the remainder makes
another round trip with transmission ``eta``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateDistribution, InfeasibleSchedule
from .optics import CouplerModel
from .series import Histogram

DEFAULT_VISIBILITY = 0.9955


@dataclass(frozen=True)
class LoopConfig:
    cycle_transmission: float = 0.2
    loop_delay_ns: float = 60.0
    min_release: float = (1.0 - DEFAULT_VISIBILITY) / 2.0
    # apply one circulation loss before the first release as well
    lossy_first_pass: bool = False

    def __post_init__(self):
        if not 0.0 < self.cycle_transmission <= 1.0:
            raise ValueError("cycle_transmission must lie in (0, 1]")
        if not 0.0 <= self.min_release < 0.5:
            raise ValueError("min_release must lie in [0, 0.5)")
        if not self.loop_delay_ns > 0:
            raise ValueError("loop_delay_ns must be positive")

    @classmethod
    def for_coupler(cls, coupler: CouplerModel, **kw) -> "LoopConfig":
        return cls(min_release=coupler.min_transmit, **kw)


def is_realizable(r: float, min_release: float) -> bool:
    return r == 1.0 or (min_release <= r <= 1.0 - min_release)


@dataclass(frozen=True)
class RatioSchedule:
    releases: tuple
    min_release: float = 0.0

    def __post_init__(self):
        rel = tuple(float(r) for r in self.releases)
        if not rel:
            raise ValueError("schedule must not be empty")
        if any(not 0.0 <= r <= 1.0 for r in rel):
            raise ValueError("release fractions must lie in [0, 1]")
        object.__setattr__(self, "releases", rel)

    def __len__(self):
        return len(self.releases)

    @property
    def feasible(self) -> bool:
        return all(is_realizable(r, self.min_release) for r in self.releases)

    def to_json(self) -> str:
        return json.dumps({"releases": list(self.releases), "feasible": self.feasible})


@dataclass(frozen=True)
class BinDistribution:
    probabilities: tuple
    survival: float = 0.0
    losses: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "probabilities", tuple(float(p) for p in self.probabilities))
        object.__setattr__(self, "losses", tuple(float(x) for x in self.losses))

    @property
    def emitted(self) -> float:
        return math.fsum(self.probabilities)

    def normalized(self) -> np.ndarray:
        p = np.asarray(self.probabilities)
        s = p.sum()
        if s <= 0:
            raise DegenerateDistribution("distribution sums to zero")
        return p / s

    def to_json(self) -> str:
        return json.dumps({"probabilities": list(self.probabilities),
                           "survival": self.survival, "losses": list(self.losses)})


def forward_simulate(schedule: RatioSchedule | Sequence[float], loop: LoopConfig) -> BinDistribution:
    """Exact energy bookkeeping through the loop.

    Loss of each circulation is applied after that pass's release; whatever
    remains after the last pass is reported as ``survival``.
    """
    rel = schedule.releases if isinstance(schedule, RatioSchedule) else tuple(schedule)
    if not rel:
        raise ValueError("schedule must not be empty")
    eta = loop.cycle_transmission
    a = 1.0
    losses = []
    if loop.lossy_first_pass:
        losses.append(1.0 - eta)
        a = eta
    probs = []
    for k, r in enumerate(rel):
        probs.append(a * r)
        remaining = a * (1.0 - r)
        if k == len(rel) - 1:
            return BinDistribution(probs, remaining, losses)
        losses.append(remaining * (1.0 - eta))
        a = remaining * eta


def balanced_schedule(n_bins: int, loop: LoopConfig) -> RatioSchedule:
    """Release ratios giving equal energy in every bin.

    Backward recursion from a full dump on the last pass:
    ``r_k = eta r_{k+1} / (1 + eta r_{k+1})``.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    eta = loop.cycle_transmission
    rel = [1.0]
    for _ in range(n_bins - 1):
        nxt = rel[0]
        rel.insert(0, eta * nxt / (1.0 + eta * nxt))
    sched = RatioSchedule(rel, loop.min_release)
    if not sched.feasible:
        raise InfeasibleSchedule(
            f"{n_bins} balanced bins need a first release of {rel[0]:.4g}, "
            f"below the extinction floor {loop.min_release:.4g}"
        )
    return sched


def schedule_for_target(target: Sequence[float], loop: LoopConfig,
                        check: bool = True) -> tuple[RatioSchedule, float]:
    """Schedule emitting energy proportional to ``target`` with maximal scale.

    Returns the schedule and ``c``, the total emitted fraction. Passes after
    the last non-zero target bin dump everything (release 1).
    """
    q = np.asarray(target, dtype=float)
    if q.ndim != 1 or len(q) == 0 or np.any(q < 0) or not q.sum() > 0:
        raise ValueError("target must be a non-empty, non-negative, non-zero vector")
    q = q / q.sum()
    eta = loop.cycle_transmission
    a1 = eta if loop.lossy_first_pass else 1.0
    last = int(np.flatnonzero(q)[-1])
    # r_k <= 1 for every k reduces to c * sum_{j<=k} q_j eta^(1-j) <= a1; binding at the last bin
    weights = eta ** -np.arange(last + 1, dtype=float)
    c = a1 / math.fsum(q[: last + 1] * weights)
    rel = []
    a = a1
    for k in range(len(q)):
        if k >= last:
            rel.append(1.0)
            continue
        r = c * q[k] / a
        rel.append(min(r, 1.0))
        a = a * (1.0 - r) * eta
    sched = RatioSchedule(rel, loop.min_release)
    if check and not sched.feasible:
        bad = [k + 1 for k, r in enumerate(rel) if not is_realizable(r, loop.min_release)]
        raise InfeasibleSchedule(f"release ratios of passes {bad} outside the realizable band")
    return sched, c


def max_balanced_bins(loop: LoopConfig, cap: int = 1000) -> tuple[int, bool]:
    """Largest feasible balanced bin count; the flag is True when the count
    is only bounded by ``cap`` (lossless loop with a perfect coupler)."""
    eta = loop.cycle_transmission
    r = 1.0
    n = 1
    while n < cap:
        r = eta * r / (1.0 + eta * r)
        if r < loop.min_release:
            return n, False
        n += 1
    return cap, True


def bhattacharyya_coefficient(p, q) -> float:
    """Overlap ``sum_k sqrt(p_k q_k)`` of the normalized distributions."""
    p = p.normalized() if isinstance(p, BinDistribution) else _norm(p)
    q = q.normalized() if isinstance(q, BinDistribution) else _norm(q)
    if len(p) != len(q):
        raise ValueError("distributions have different lengths")
    return float(np.sum(np.sqrt(p * q)))


def distribution_fidelity(p, q) -> float:
    """Classical fidelity: squared Bhattacharyya coefficient."""
    return bhattacharyya_coefficient(p, q) ** 2


def _norm(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    s = x.sum()
    if not s > 0:
        raise DegenerateDistribution("distribution sums to zero")
    return x / s


def effective_releases(schedule: RatioSchedule, coupler: CouplerModel) -> list[float]:
    """Requested releases clipped to what the coupler can actually set."""
    lo, hi = coupler.min_transmit, coupler.max_transmit
    return [min(max(r, lo), hi) for r in schedule.releases]


def photon_outcome_probabilities(schedule: RatioSchedule, loop: LoopConfig,
                                 coupler: Optional[CouplerModel] = None,
                                 tail_passes: int = 4) -> np.ndarray:
    """Per-photon probabilities of [bin 1..N, later passes, lost].

    With a coupler, releases are clipped to its visibility band and the
    residue after the last scheduled pass keeps circulating for
    ``tail_passes`` extra passes.
    """
    rel = list(schedule.releases)
    if coupler is not None:
        rel = effective_releases(schedule, coupler)
        tail = [coupler.max_transmit] * tail_passes
    else:
        tail = []
    dist = forward_simulate(rel + tail, loop)
    p = np.asarray(dist.probabilities)
    n = len(schedule)
    later = p[n:].sum()
    lost = max(0.0, 1.0 - p[:n].sum() - later)
    return np.concatenate([p[:n], [later, lost]])


def simulate_pulse_train(schedule: RatioSchedule, loop: LoopConfig, coupler: CouplerModel,
                         spad, n_input_pulses: int, mean_photons: float,
                         rng: np.random.Generator, pulse_period_ns: Optional[float] = None,
                         latency_ns: float = 45.0) -> Histogram:
    """Click histogram over time bins for a train of Poissonian input pulses.

    Each photon is routed independently through the loop and then passes
    the SPAD click pipeline (efficiency, jitter, dead time, afterpulses,
    dark counts). Clicks are assigned to the nearest bin slot of their
    pulse; the result's ``meta`` counts clicks falling outside all bins.
    """
    from .counting import click_pipeline

    n_bins = len(schedule)
    delay = loop.loop_delay_ns
    if pulse_period_ns is None:
        pulse_period_ns = (n_bins + 10) * delay
    probs = photon_outcome_probabilities(schedule, loop, coupler)
    n_ph = rng.poisson(mean_photons, n_input_pulses)
    total = int(n_ph.sum())
    pulse_idx = np.repeat(np.arange(n_input_pulses), n_ph)
    outcome = rng.choice(len(probs), size=total, p=probs / probs.sum())
    # photons leaving in later passes are timed on their actual pass
    emitted = outcome < n_bins + 1
    passes = np.where(outcome < n_bins, outcome, n_bins)
    times = (pulse_idx * pulse_period_ns + latency_ns + passes * delay)[emitted]
    times.sort(kind="stable")
    window = (0.0, n_input_pulses * pulse_period_ns)
    clicks = click_pipeline(times, spad, rng, window=window)
    t = np.array([c.time_ns for c in clicks]) if clicks else np.zeros(0)
    rel_t = np.mod(t, pulse_period_ns) - latency_ns
    slot = np.rint(rel_t / delay).astype(np.int64)
    inside = (slot >= 0) & (slot < n_bins) & (np.abs(rel_t - slot * delay) < delay / 2)
    counts = np.bincount(slot[inside], minlength=n_bins)[:n_bins]
    edges = np.arange(n_bins + 1) - 0.5
    return Histogram(edges, counts[None, :], ports=("bins",),
                     meta={"outside": int((~inside).sum()), "photons": total,
                           "input_pulses": int(n_input_pulses)})
