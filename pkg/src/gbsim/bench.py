"""Scaling benchmarks: Torontonian size sweeps and forced-click sampling.

Both kernels grow exponentially (2^N subset terms; branch doubling per
click). Each size is timed with one warmup run followed by five measured
runs; the per-size value is the median of the five and the doubling
factor comes from a least-squares fit of log(median) against size,
excluding the two smallest sizes where fixed overhead still matters.
"""

from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass

import numpy as np

from .gaussian import ClickPattern, random_state
from .probabilities import state_kernel
from .sampler import chain_rule_probability
from .torontonian import torontonian

REPEATS = 5
FIT_SKIP = 2  # smallest sizes excluded from the doubling-factor fit


@dataclass(frozen=True)
class BenchResult:
    kind: str
    sizes: tuple
    medians: tuple
    means: tuple
    stds: tuple
    doubling_factor: float

    def to_csv(self):
        buf = io.StringIO()
        buf.write("size,median_seconds,mean_seconds,std_seconds\n")
        for size, med, mean, std in zip(self.sizes, self.medians, self.means, self.stds):
            buf.write(f"{size},{med!r},{mean!r},{std!r}\n")
        return buf.getvalue()


def _time_runs(fn, repeats=REPEATS):
    fn()  # warmup
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    arr = np.asarray(samples)
    return float(np.median(arr)), float(arr.mean()), float(arr.std(ddof=1))


def _doubling_factor(sizes, values, skip=FIT_SKIP):
    sizes = np.asarray(sizes, dtype=float)[skip:]
    values = np.log(np.asarray(values, dtype=float)[skip:])
    if len(sizes) < 2:
        raise ValueError("need at least two sizes beyond the excluded ones")
    slope = np.polyfit(sizes, values, 1)[0]
    return float(math.exp(slope))


def bench_torontonian(sizes, seed, threads=1, repeats=REPEATS):
    """Time the full Torontonian of random physical N-mode kernels."""
    sizes = sorted(int(s) for s in sizes)
    if sizes and sizes[-1] > 22:
        raise ValueError("Torontonian benchmark limited to N <= 22")
    rng = np.random.default_rng(seed)
    medians, means, stds = [], [], []
    for n in sizes:
        state = random_state(n, rng, max_squeezing=0.4)
        _, kernel, _ = state_kernel(state)
        med, mean, std = _time_runs(lambda: torontonian(kernel, threads=threads), repeats)
        medians.append(med)
        means.append(mean)
        stds.append(std)
    return BenchResult("tor", tuple(sizes), tuple(medians), tuple(means), tuple(stds),
                       _doubling_factor(sizes, medians))


def bench_sampler(click_counts, seed, modes=16, repeats=REPEATS):
    """Time one forced-path sample with a growing number of clicks.

    Clicks are forced on the lowest-index modes, which are measured last,
    so the branch count doubles at the tail of the pass and the total work
    tracks 2^clicks.
    """
    click_counts = sorted(int(k) for k in click_counts)
    if click_counts and click_counts[-1] > 16:
        raise ValueError("sampler benchmark limited to 16 forced clicks")
    modes = max(modes, click_counts[-1] if click_counts else 1)
    rng = np.random.default_rng(seed)
    state = random_state(modes, rng, max_squeezing=0.5)
    medians, means, stds = [], [], []
    for k in click_counts:
        pattern = ClickPattern(modes, tuple(range(1, k + 1)))
        med, mean, std = _time_runs(lambda: chain_rule_probability(state, pattern), repeats)
        medians.append(med)
        means.append(mean)
        stds.append(std)
    return BenchResult("sample", tuple(click_counts), tuple(medians), tuple(means), tuple(stds),
                       _doubling_factor(click_counts, medians))
