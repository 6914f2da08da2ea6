"""The stratified ASG: a Markov chain on weighted ternary trees.

Each leaf of weight m fires at rates s*m (weight +1), gamma*m (graft the
tree (m 1 1) in its place), u*nu1*m (weight -1, with the cascade) and
u*nu0*m (subtree deletion, possibly into the cemetery).  The tree ``0`` and
the cemetery are absorbing.

Two implementations live here: the reference transforms on nested tuples,
which follow the definitions literally, and the compiled engine in
``_kernels`` used for Monte Carlo work.  Tests drive both with the same event
sequences and require identical trees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from . import wtt
from .ode import equilibria, integrate
from .params import ModelParams, ParameterError, critical_rates
from .rng import MCResult, STREAM_SASG, generator, run_replicates, summarize
from .wtt import DELTA, get_at, is_leaf, leftmost_path, replace_at

DEFAULT_M_MAX = 10_000
ABSORBED_ROOT0 = "absorbed_root0"
ABSORBED_DELTA = "absorbed_delta"
ESCAPED = "escaped"
TIMED_OUT = "timed_out"

_OUTCOME = {K.ROOT0: ABSORBED_ROOT0, K.DELTA: ABSORBED_DELTA,
            K.ESCAPED: ESCAPED, K.OVERFLOW: ESCAPED, K.ALIVE: TIMED_OUT}

EVENTS = ("branch", "ternary", "deleterious", "beneficial")


class SasgDomainError(ValueError):
    pass


# ---------------------------------------------------------------------------
# reference transforms


def _check_leaf(t, path, positive=True):
    if t is DELTA or t == 0:
        raise SasgDomainError("no transitions out of an absorbing state")
    try:
        x = get_at(t, path)
    except (TypeError, IndexError):
        raise SasgDomainError(f"no vertex at path {tuple(path)}") from None
    if not is_leaf(x):
        raise SasgDomainError(f"path {tuple(path)} is not a leaf")
    if positive and x < 1:
        raise SasgDomainError(f"leaf at {tuple(path)} has weight 0 and never fires")
    return x


def apply_branch(t, path):
    w = _check_leaf(t, path, positive=False)
    return replace_at(t, tuple(path), w + 1)


def apply_ternary(t, path):
    w = _check_leaf(t, path, positive=False)
    return replace_at(t, tuple(path), (w, 1, 1))


def apply_deleterious(t, path):
    path = tuple(path)
    w = _check_leaf(t, path)
    t = replace_at(t, path, w - 1)
    x = path
    # a weight-0 leaf in a middle or right slot fixes nothing: its parent
    # reduces to the left child, possibly repeatedly
    while x and x[-1] != 0:
        cur = get_at(t, x)
        if not (is_leaf(cur) and cur == 0):
            break
        par = x[:-1]
        t = replace_at(t, par, get_at(t, par + (0,)))
        x = par
    return t


def apply_beneficial(t, path):
    path = tuple(path)
    _check_leaf(t, path)
    x = path
    while x and x[-1] == 0:
        x = x[:-1]
    if not x:
        return DELTA
    par = x[:-1]
    other = 3 - x[-1]  # the sibling of mu* that is not the left child
    t_v = get_at(t, par + (0,))
    t_w = get_at(t, par + (other,))
    lp_v = leftmost_path(t_v)
    lp_w = leftmost_path(t_w)
    t_w = replace_at(t_w, lp_w, get_at(t_w, lp_w) + get_at(t_v, lp_v))
    return replace_at(t, par, replace_at(t_v, lp_v, t_w))


_APPLY = (apply_branch, apply_ternary, apply_deleterious, apply_beneficial)


def apply_event(t, kind: int, path):
    return _APPLY[kind](t, path)


def simulate_reference(p: ModelParams, t0, r_end: float, rng: np.random.Generator,
                       m_max: int = DEFAULT_M_MAX):
    """Direct Gillespie on nested tuples.  Slow; for cross-checks only."""
    rates = np.array([p.s, p.gamma, p.u * p.nu1, p.u * p.nu0])
    total = rates.sum()
    t = t0
    r = 0.0
    while True:
        if t is DELTA or t == 0:
            return t, r
        lv = wtt.leaves(t)
        w = np.array([m for _, m in lv], dtype=float)
        mass = w.sum()
        if mass >= m_max or total == 0:
            return t, r_end if total == 0 else r
        r += rng.exponential(1.0 / (total * mass))
        if r >= r_end:
            return t, r_end
        i = int(np.searchsorted(np.cumsum(w), rng.random() * mass, side="right"))
        i = min(i, len(lv) - 1)
        kind = int(np.searchsorted(np.cumsum(rates), rng.random() * total, side="right"))
        t = apply_event(t, min(kind, 3), lv[i][0])


# ---------------------------------------------------------------------------
# compiled engine


class Engine:
    """Per-thread workspace for the compiled simulator."""

    def __init__(self, mass_cap: int):
        self.mass_cap = int(mass_cap)
        self.node, self.sl, self.free, self.meta, self.buf, self.hv = \
            K.new_workspace(self.mass_cap)
        self.counts = np.zeros(4, dtype=np.int64)

    @property
    def arrays(self):
        return self.node, self.sl, self.free, self.meta, self.buf

    def load(self, t):
        st = K.load_codes(*self.arrays, wtt.to_codes(t))
        if st != K.ALIVE:
            raise SasgDomainError("tree too large for this workspace")

    def dump(self):
        return wtt.from_codes(K.dump_codes(self.node, self.meta, self.buf))

    def mass(self) -> int:
        return int(self.meta[K.M_MASS])

    def leaf(self, k: int) -> int:
        """Arena id of the k-th leaf in left-to-right order."""
        return int(K.leaf_by_index(self.node, self.meta, self.buf, k))

    def apply(self, kind: int, k: int) -> int:
        return int(K.apply_event(*self.arrays, kind, self.leaf(k)))

    def hs(self, y0: float) -> float:
        return float(K.hs_arena(self.node, self.meta, self.buf, self.hv, y0))


def _engine_for(t0, m_max):
    return Engine(max(int(m_max), wtt.mass(t0)) + 4)


@dataclass
class AbsorptionVerdict:
    outcome: str
    time: float
    mass: int


@dataclass
class SasgState:
    value: object
    time: float
    events: int
    counts: dict = field(default_factory=dict)


def _rates(p: ModelParams):
    return p.s, p.gamma, p.u * p.nu1, p.u * p.nu0


def simulate_sasg(p: ModelParams, t0, r_end: float = math.inf,
                  m_max: int = DEFAULT_M_MAX, seed: int = 0,
                  replicate: int = 0) -> tuple[SasgState, AbsorptionVerdict]:
    """One trajectory from ``t0`` until absorption, escape or ``r_end``."""
    wtt.validate(t0)
    if r_end < 0:
        raise ParameterError("r_end must be non-negative")
    eng = _engine_for(t0, m_max)
    eng.load(t0)
    rng = generator(seed, STREAM_SASG, replicate)
    out, r = K.run_sasg(*eng.arrays, *_rates(p), float(r_end), int(m_max), rng,
                        eng.counts)
    value = eng.dump()
    counts = dict(zip(EVENTS, eng.counts.tolist()))
    state = SasgState(value, float(r), int(eng.counts.sum()), counts)
    return state, AbsorptionVerdict(_OUTCOME[out], float(r), wtt.mass(value))


def mc_duality_sasg(p: ModelParams, t0, y0: float, t: float, replicates: int,
                    seed: int, m_max: int = DEFAULT_M_MAX,
                    threads: int | None = None) -> MCResult:
    """Mean of Hs(T(t), y0) started from ``t0``.

    Replicates that hit ``m_max`` before ``t`` are evaluated on the capped
    tree and counted in ``n_flagged``; the result is flagged above 1%.
    """
    if replicates < 2:
        raise ParameterError("need at least two replicates")
    if not 0.0 <= y0 <= 1.0:
        raise ParameterError("y0 must lie in [0, 1]")
    wtt.validate(t0)
    codes = wtt.to_codes(t0)
    rates = _rates(p)

    def make():
        eng = _engine_for(t0, m_max)

        def work(i):
            rng = generator(seed, STREAM_SASG, i)
            out, r, mass, h = K.sasg_replicate(
                *eng.arrays, eng.hv, codes, *rates, float(t), int(m_max),
                float(y0), rng, eng.counts)
            return h, out in (K.ESCAPED, K.OVERFLOW), mass
        return work

    res = run_replicates(make, replicates, threads)
    h = np.array([x[0] for x in res])
    capped = int(sum(x[1] for x in res))
    return summarize(h, capped, 0.01, hs=h,
                     mean_mass=float(np.mean([x[2] for x in res])))


def default_r_max(p: ModelParams) -> float:
    top = max(p.s, p.gamma, p.u)
    if top <= 0:
        raise ParameterError("all rates are zero; no default horizon")
    return 50.0 / top


@dataclass
class AbsorptionEstimate:
    w1: MCResult
    d1: MCResult
    escape_fraction: float
    timeout_fraction: float
    inconclusive: bool


def run_absorption(p: ModelParams, t0, replicates: int, seed: int,
                   m_max: int = DEFAULT_M_MAX, r_max: float | None = None,
                   y0: float | None = None, threads: int | None = None):
    """Outcome code, time, final mass and (optionally) Hs at y0 per replicate."""
    r_max = default_r_max(p) if r_max is None else float(r_max)
    codes = wtt.to_codes(t0)
    rates = _rates(p)
    yy = 0.5 if y0 is None else float(y0)

    def make():
        eng = _engine_for(t0, m_max)

        def work(i):
            rng = generator(seed, STREAM_SASG, i)
            out, r, mass, h = K.sasg_replicate(
                *eng.arrays, eng.hv, codes, *rates, r_max, int(m_max), yy,
                rng, eng.counts)
            return out, r, mass, h
        return work

    res = run_replicates(make, replicates, threads)
    out = np.array([x[0] for x in res], dtype=np.int64)
    out[out == K.OVERFLOW] = K.ESCAPED
    return (out, np.array([x[1] for x in res]),
            np.array([x[2] for x in res], dtype=np.int64),
            np.array([x[3] for x in res]))


def estimate_w1_d1(p: ModelParams, replicates: int, seed: int,
                   m_max: int = DEFAULT_M_MAX, r_max: float | None = None,
                   threads: int | None = None) -> AbsorptionEstimate:
    """Absorption probabilities from root_1: w1 into 0, d1 never into the
    cemetery.  Escapes and timeouts count as not absorbed."""
    if replicates < 2:
        raise ParameterError("need at least two replicates")
    out, _, _, _ = run_absorption(p, 1, replicates, seed, m_max, r_max,
                                  threads=threads)
    n = len(out)
    esc = float(np.mean(out == K.ESCAPED))
    tmo = float(np.mean(out == K.ALIVE))
    w1 = summarize((out == K.ROOT0).astype(float))
    d1 = summarize((out != K.DELTA).astype(float))
    w1.extra.update(escape_fraction=esc, timeout_fraction=tmo)
    d1.extra.update(escape_fraction=esc, timeout_fraction=tmo)
    inconclusive = tmo > 0.05
    w1.flagged = d1.flagged = inconclusive
    w1.n_flagged = d1.n_flagged = int(round(tmo * n))
    return AbsorptionEstimate(w1, d1, esc, tmo, inconclusive)


def bernoulli_limit(p: ModelParams, y0: float, replicates: int, seed: int,
                    m_max: int = DEFAULT_M_MAX, r_max: float | None = None,
                    escape: str = "dual", threads: int | None = None) -> MCResult:
    """X = Hs(T(r_max), y0) from root_1; ``extra['spread']`` is E[X(1-X)].

    A run that escapes at time tau cannot be followed to r_max.  With
    ``escape="freeze"`` X is read off the capped tree at y0.  With
    ``escape="dual"`` X is replaced by its conditional mean given the capped
    tree, Hs(T(tau), y(r_max - tau; y0)): unbiased for E[X], and its spread
    bounds the true spread from above.
    """
    if escape not in ("dual", "freeze"):
        raise ValueError("escape must be 'dual' or 'freeze'")
    if replicates < 2:
        raise ParameterError("need at least two replicates")
    r_max = default_r_max(p) if r_max is None else float(r_max)
    codes = wtt.to_codes(1)
    rates = _rates(p)
    traj = integrate(p, y0, r_max, tol=1e-12, max_step=r_max / 2000)

    def make():
        eng = _engine_for(1, m_max)

        def work(i):
            rng = generator(seed, STREAM_SASG, i)
            K.load_codes(*eng.arrays, codes)
            out, r = K.run_sasg(*eng.arrays, *rates, r_max, int(m_max), rng,
                                eng.counts)
            y = y0
            if out in (K.ESCAPED, K.OVERFLOW) and escape == "dual":
                y = min(max(float(traj(r_max - r)), 0.0), 1.0)
            return (K.ESCAPED if out == K.OVERFLOW else out), r, eng.hs(y)
        return work

    res = run_replicates(make, replicates, threads)
    out = np.array([x[0] for x in res], dtype=np.int64)
    h = np.array([x[2] for x in res])
    summary = summarize(h, int(np.sum(out == K.ALIVE)), 0.05,
                        spread=float(np.mean(h * (1 - h))),
                        escape_fraction=float(np.mean(out == K.ESCAPED)),
                        r_max=r_max, escape=escape)
    summary.extra["values"] = h
    summary.extra["outcomes"] = out
    summary.extra["times"] = np.array([x[1] for x in res])
    return summary


# ---------------------------------------------------------------------------
# series for the non-absorption probability


def catalan_series(p: ModelParams, n_terms: int) -> np.ndarray:
    """Partial sums of sum_n C_n zeta^(n+1) b^n, n = 0..n_terms.

    x = 1 - w1 solves b x^2 - x + zeta = 0 and the series sums to the smaller
    root, so it equals 1 - w1 only while 1 - w1 <= 1/(2b).  Close to u = s
    with gamma > s that fails (e.g. s=0.3, gamma=0.5, u=0.2).
    """
    if p.nu0 != 0:
        raise ParameterError("series requires nu0 = 0")
    if p.gamma <= 0:
        raise ParameterError("series requires gamma > 0")
    u_hat, _ = critical_rates(p)
    if not p.u < u_hat:
        raise ParameterError("series requires u < s")
    if n_terms < 0:
        raise ParameterError("n_terms must be non-negative")
    s, g, u = p.s, p.gamma, p.u
    w1 = 0.0 if u == 0 else min(equilibria(p).named["ybar2"], 1.0)
    zeta = 1.0 - u / s
    g_t = g * (1.0 - w1)
    b = (u / s) * g / (s + g_t - u)
    n = np.arange(n_terms + 1, dtype=float)
    # C_{n+1}/C_n = 2(2n+1)/(n+2), folded into the term ratio
    ratio = np.empty(n_terms + 1)
    ratio[0] = zeta
    ratio[1:] = 2.0 * (2.0 * n[:-1] + 1.0) / (n[:-1] + 2.0) * zeta * b
    return np.cumsum(np.cumprod(ratio))
