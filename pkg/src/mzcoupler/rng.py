"""Per-run random streams derived from ``(master_seed, run_index)``.

Every Monte Carlo entry point takes a ``numpy.random.Generator``; use
:func:`stream` to build one so that concurrent runs never share state and
results do not depend on scheduling order.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

import numpy as np


def stream(master_seed: int, run_index: int = 0, *sub: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(run_index), *sub])
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return stream(0 if rng is None else int(rng))


def _call(args):
    fn, master_seed, idx = args
    return fn(stream(master_seed, idx))


def run_ensemble(fn: Callable[[np.random.Generator], object], master_seed: int,
                 n_runs: int, workers: int = 1) -> Sequence:
    """Evaluate ``fn`` once per run index; results ordered by index.

    ``fn`` must be picklable when ``workers > 1``.
    """
    jobs = [(fn, master_seed, i) for i in range(n_runs)]
    if workers <= 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, jobs))
