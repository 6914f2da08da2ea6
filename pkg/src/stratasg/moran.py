"""Finite-population Moran model lumped to the count of unfit individuals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .ode import integrate
from .params import ModelParams, ParameterError
from .rng import STREAM_MORAN, generator, run_replicates


@dataclass(frozen=True)
class MoranState:
    N: int
    k: int
    t: float = 0.0

    def __post_init__(self):
        if self.N < 1:
            raise ParameterError("population size must be at least 1")
        if not 0 <= self.k <= self.N:
            raise ParameterError(f"need 0 <= k <= N, got k={self.k}, N={self.N}")

    @property
    def y(self) -> float:
        return self.k / self.N


def transition_rates(p: ModelParams, st: MoranState) -> tuple[float, float]:
    """(rate k -> k+1, rate k -> k-1)."""
    N, k = st.N, st.k
    cross = k * (N - k) / N
    up = cross + (N - k) * p.u * p.nu1
    down = cross * (1.0 + p.s + p.gamma * (N - k) / N) + k * p.u * p.nu0
    return up, down


@dataclass
class MoranPath:
    """Jump times and counts; the path is right-continuous and constant
    between jumps."""

    N: int
    times: np.ndarray
    counts: np.ndarray
    t_end: float

    def at(self, t):
        i = np.searchsorted(self.times, t, side="right") - 1
        return self.counts[i]

    @property
    def final_k(self) -> int:
        return int(self.counts[-1])


def simulate(p: ModelParams, N: int, k0: int, t_end: float, seed: int,
             replicate: int = 0) -> MoranPath:
    MoranState(N, k0)
    if t_end < 0:
        raise ParameterError("t_end must be non-negative")
    rng = generator(seed, STREAM_MORAN, replicate)
    ts, ks = K.moran_path(int(N), int(k0), float(t_end), p.s, p.gamma,
                          p.u * p.nu1, p.u * p.nu0, rng)
    return MoranPath(int(N), ts, ks, float(t_end))


def path_gap(path: MoranPath, traj) -> float:
    """sup over [0, t_end] of |k/N - y|, with y the dense ODE solution.

    On each constant piece of the path the ODE is monotone, so the supremum
    over the piece is attained at one of its ends.
    """
    y = path.counts / path.N
    left = path.times
    right = np.append(path.times[1:], path.t_end)
    g1 = np.abs(y - traj(left))
    g2 = np.abs(y - traj(right))
    return float(max(g1.max(), g2.max()))


def lln_gap(p: ModelParams, N: int, y0: float, t_end: float, seed: int,
            replicate: int = 0, traj=None) -> float:
    if not 0.0 <= y0 <= 1.0:
        raise ParameterError(f"y0 must lie in [0, 1], got {y0!r}")
    k0 = int(round(N * y0))
    path = simulate(p, N, k0, t_end, seed, replicate)
    if traj is None:
        traj = integrate(p, y0, t_end, tol=1e-10, max_step=max(t_end / 200, 1e-9))
    return path_gap(path, traj)


def lln_experiment(p: ModelParams, N: int, y0: float, t_end: float,
                   replicates: int, seed: int, threads: int | None = None):
    """(sup gaps, final counts) for replicates 0..replicates-1."""
    traj = integrate(p, y0, t_end, tol=1e-10, max_step=max(t_end / 200, 1e-9))
    k0 = int(round(N * y0))

    def make():
        def work(i):
            path = simulate(p, N, k0, t_end, seed, i)
            return path_gap(path, traj), path.final_k
        return work

    res = run_replicates(make, replicates, threads)
    return np.array([r[0] for r in res]), np.array([r[1] for r in res])
