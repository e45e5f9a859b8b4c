"""Result carriers shared by the simulation modules."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled real-valued trace."""

    dt: float
    values: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def __len__(self):
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.values))

    def to_csv(self, time_header: str = "time_s") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([time_header, "value"])
        for t, v in zip(self.times, self.values):
            w.writerow([repr(float(t)), repr(float(v))])
        return buf.getvalue()


@dataclass(frozen=True)
class Histogram:
    """Binned count record for one or more detector ports.

    ``counts`` has shape ``(n_ports, n_bins)``; ``edges`` has ``n_bins + 1``
    entries in ns (or bin-index units for time-bin histograms).
    """

    edges: np.ndarray
    counts: np.ndarray
    ports: tuple = ("port1", "port2")
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        counts = np.atleast_2d(np.asarray(self.counts))
        if counts.shape[1] != len(edges) - 1:
            raise ValueError("counts and edges disagree on bin count")
        if counts.shape[0] != len(self.ports):
            raise ValueError("one port label per counts row required")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "counts", counts)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    def port(self, name_or_index) -> np.ndarray:
        if isinstance(name_or_index, str):
            name_or_index = self.ports.index(name_or_index)
        return self.counts[name_or_index]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_start_ns", *(f"count_{p}" for p in self.ports)])
        for i, start in enumerate(self.edges[:-1]):
            row = [repr(float(start))]
            row += [repr(c.item()) for c in self.counts[:, i]]
            w.writerow(row)
        return buf.getvalue()
