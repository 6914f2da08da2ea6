"""Counter-based random streams and the replicate runner.

Replicate ``i`` of stream ``k`` under base seed ``b`` always sees the same
Philox sequence, whatever the number of worker threads or the order in
which replicates are executed.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

THREADS_ENV = "STRATASG_THREADS"

# stream ids; fixed so that adding a stream never shifts another one
STREAM_EASG = 1
STREAM_TYPES = 2
STREAM_SASG = 3
STREAM_FOREST = 4
STREAM_MORAN = 5
STREAM_PRUNE = 6

_MASK64 = (1 << 64) - 1


def generator(seed: int, stream: int, replicate: int = 0) -> np.random.Generator:
    key = (int(seed) & _MASK64) | ((int(stream) & _MASK64) << 64)
    bg = np.random.Philox(key=key, counter=int(replicate) << 128)
    return np.random.Generator(bg)


def thread_count(default: int = 1) -> int:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def run_replicates(make_worker, n: int, threads: int | None = None) -> list:
    """Evaluate replicates 0..n-1 and return their results in index order.

    ``make_worker()`` returns a callable ``work(i)``; each thread gets its own
    worker so per-thread scratch space is never shared.
    """
    threads = thread_count() if threads is None else threads
    if threads <= 1 or n < 2:
        work = make_worker()
        return [work(i) for i in range(n)]
    chunks = np.array_split(np.arange(n), threads)

    def run_chunk(idx):
        work = make_worker()
        return [work(int(i)) for i in idx]

    with ThreadPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(run_chunk, chunks))
    return [r for part in parts for r in part]


@dataclass
class MCResult:
    """Mean and standard error of a Monte Carlo estimate."""

    estimate: float
    se: float
    n: int
    n_flagged: int = 0
    flagged: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def flag_fraction(self) -> float:
        return self.n_flagged / self.n if self.n else 0.0

    def z(self, target: float) -> float:
        d = self.estimate - target
        if self.se == 0:
            return 0.0 if d == 0 else math.copysign(math.inf, d)
        return d / self.se

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.estimate - target) <= k * self.se


def summarize(values, n_flagged: int = 0, flag_limit: float | None = None,
              **extra) -> MCResult:
    x = np.asarray(values, dtype=float)
    n = len(x)
    if n < 2:
        raise ValueError("need at least two replicates")
    if np.all(x == x[0]):
        # keep degenerate samples exact
        mean, se = float(x[0]), 0.0
    else:
        mean = float(x.mean())
        se = float(x.std(ddof=1) / math.sqrt(n))
    flagged = flag_limit is not None and n_flagged > flag_limit * n
    return MCResult(mean, se, n, n_flagged, flagged, dict(extra))
