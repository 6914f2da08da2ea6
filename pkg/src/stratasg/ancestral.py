"""Ancestral type distribution without beneficial mutations.

g_r(y0) is the probability that the ancestor, r time units back, of an
individual sampled from a population with unfit frequency y0 is unfit.  It
equals y0 * exp(-int_0^r (1 - y)(s + gamma (1 - y)) dxi) along the ODE
solution started at y0; the Monte Carlo route samples the forest of
stratified ASGs hanging off the immune line instead.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels as K
from .ode import integrate, long_term_limit, y_separable
from .params import ModelParams, ParameterError, drift
from .rng import MCResult, STREAM_FOREST, generator, run_replicates, summarize
from .sasg import DEFAULT_M_MAX

EQ_TOL = 1e-9
_REL = 1e-12


def _require(p: ModelParams, y0: float, r: float | None = None):
    if p.nu0 != 0:
        raise ParameterError(
            "ancestral type distribution requires nu0 = 0 "
            "(no beneficial mutations)")
    if not 0.0 <= y0 <= 1.0:
        raise ParameterError(f"y0 must lie in [0, 1], got {y0!r}")
    if r is not None and r < 0:
        raise ParameterError("r must be non-negative")


def rate_integrand(p: ModelParams, y: float) -> float:
    return (1.0 - y) * (p.s + p.gamma * (1.0 - y))


def _roots(p: ModelParams):
    """(y2, y3, sigma, position of u relative to u_check) for gamma > 0."""
    s, g, u = p.s, p.gamma, p.u
    u_check = (s + g) ** 2 / (4.0 * g)
    sg = (1.0 + s / g) ** 2 - 4.0 * u / g
    if abs(u - u_check) <= _REL * u_check:
        where, sg = "at", 0.0
    else:
        where = "below" if u < u_check else "above"
    if sg >= 0:
        rt = math.sqrt(sg)
        return 0.5 * (1 + s / g - rt), 0.5 * (1 + s / g + rt), sg, where
    return None, None, sg, where


def _equilibria_in_unit(p: ModelParams) -> list[float]:
    if p.gamma == 0:
        if p.s == 0:
            return [1.0] if p.u > 0 else []
        out = [1.0]
        if p.u / p.s <= 1.0:
            out.append(p.u / p.s)
        return out
    y2, y3, _, _ = _roots(p)
    out = [1.0]
    for y in (y2, y3):
        if y is not None and 0.0 <= y <= 1.0:
            out.append(y)
    return out


def _at_equilibrium(p: ModelParams, y0: float) -> bool:
    if p.u == 0 and p.s == 0 and p.gamma == 0:
        return True
    if p.u == 0 and y0 == 0.0:
        return True
    return any(abs(y0 - e) < EQ_TOL for e in _equilibria_in_unit(p))


def y_path(p: ModelParams, y0: float, r: float) -> float:
    if p.gamma == 0:
        return y_separable(p, y0, r)
    return integrate(p, y0, r, tol=1e-13).final


def g_closed(p: ModelParams, y0: float, r: float) -> float:
    """Closed-form g_r(y0), nu0 = 0."""
    _require(p, y0, r)
    s, g, u = p.s, p.gamma, p.u
    if r == 0 or (s == 0 and g == 0):
        return y0
    if _at_equilibrium(p, y0):
        return y0 * math.exp(-r * rate_integrand(p, y0))
    y = y_path(p, y0, r)
    if g == 0:
        return y0 * (u - s * y) / (u - s * y0)
    y2, y3, sg, where = _roots(p)
    if where == "below":
        rt = math.sqrt(sg)
        return (y0 * ((y2 - y) / (y2 - y0)) ** (y3 / rt)
                * ((y3 - y0) / (y3 - y)) ** (y2 / rt))
    if where == "at":
        return (y0 * (y - y2) / (y0 - y2)
                * math.exp(-y2 * (y - y0) / ((y - y2) * (y0 - y2))))
    rho = (g + s) / g
    rt = math.sqrt(-sg)
    num = u - y * (s + g * (1 - y))
    den = u - y0 * (s + g * (1 - y0))
    return (y0 * math.sqrt(num / den)
            * math.exp(-rho * (math.atan((2 * y - rho) / rt)
                               - math.atan((2 * y0 - rho) / rt)) / rt))


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10,
                     max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""
    if a == b:
        return 0.0
    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    whole = (b - a) / 6.0 * (fa + 4 * fm + fb)
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    total = 0.0
    while stack:
        a_, b_, fa_, fm_, fb_, w, eps, depth = stack.pop()
        m = 0.5 * (a_ + b_)
        lm, rm = 0.5 * (a_ + m), 0.5 * (m + b_)
        flm, frm = f(lm), f(rm)
        left = (m - a_) / 6.0 * (fa_ + 4 * flm + fm_)
        right = (b_ - m) / 6.0 * (fm_ + 4 * frm + fb_)
        delta = left + right - w
        if depth >= max_depth or abs(delta) <= 15 * eps:
            total += left + right + delta / 15.0
        else:
            stack.append((a_, m, fa_, flm, fm_, left, eps / 2, depth + 1))
            stack.append((m, b_, fm_, frm, fb_, right, eps / 2, depth + 1))
    return total


def g_quadrature(p: ModelParams, y0: float, r: float, tol: float = 1e-10) -> float:
    """g_r(y0) from the defining integral, evaluated along the dense ODE
    output by adaptive Simpson."""
    _require(p, y0, r)
    if r == 0:
        return y0
    traj = integrate(p, y0, r, tol=1e-13, max_step=r / 400)
    integral = adaptive_simpson(lambda xi: rate_integrand(p, traj(xi)), 0.0, r, tol)
    return y0 * math.exp(-integral)


def g_asymptotic(p: ModelParams, y0: float) -> float:
    """lim_{r -> inf} g_r(y0)."""
    _require(p, y0)
    s, g, u = p.s, p.gamma, p.u
    if y0 == 1.0 or (s == 0 and g == 0):
        return y0
    y_inf = long_term_limit(p, y0) if p.s > 0 or p.gamma > 0 else y0
    if rate_integrand(p, y_inf) > 0:
        # the path settles where the integrand is positive: the integral
        # diverges
        return 0.0
    # y -> 1; take the closed forms at y = 1
    if g == 0:
        if u <= s:
            return 0.0
        return y0 * (u - s) / (u - s * y0)
    y2, y3, sg, where = _roots(p)
    if where == "below":
        rt = math.sqrt(sg)
        a = (y2 - 1.0) / (y2 - y0)
        b = (y3 - y0) / (y3 - 1.0) if y3 != 1.0 else math.inf
        if a == 0.0:
            return 0.0
        return y0 * a ** (y3 / rt) * b ** (y2 / rt)
    if where == "at":
        if y2 == 1.0:
            return 0.0
        return (y0 * (1 - y2) / (y0 - y2)
                * math.exp(-y2 * (1 - y0) / ((1 - y2) * (y0 - y2))))
    rho = (g + s) / g
    rt = math.sqrt(-sg)
    # the limit of the finite-r form keeps gamma (1 - y0) in the denominator
    return (y0 * math.sqrt((u - s) / (u - y0 * (s + g * (1 - y0))))
            * math.exp(-rho * (math.atan((2 - rho) / rt)
                               - math.atan((2 * y0 - rho) / rt)) / rt))


def g_equilibrium(p: ModelParams, y0: float) -> float:
    """g_inf evaluated at the equilibrium reached from y0."""
    _require(p, y0)
    if p.s == 0 and p.gamma == 0:
        return y0
    return g_asymptotic(p, long_term_limit(p, y0))


def mc_ancestral(p: ModelParams, y0: float, r: float, replicates: int, seed: int,
                 m_max: int = DEFAULT_M_MAX, sequential: bool = False,
                 threads: int | None = None) -> MCResult:
    """y0 times the product of Hs over the forest at time r, averaged.

    The default sampler draws the two Poisson counts and then uniform ages;
    ``sequential=True`` walks exponential inter-arrival gaps instead.
    Trees capped at ``m_max`` are counted in ``n_flagged``.
    """
    _require(p, y0, r)
    if replicates < 2:
        raise ParameterError("need at least two replicates")

    def make():
        ws = K.new_workspace(int(m_max) + 4)
        counts = np.zeros(4, dtype=np.int64)

        def work(i):
            rng = generator(seed, STREAM_FOREST, i)
            return K.forest_replicate(*ws, p.s, p.gamma, p.u * p.nu1, float(r),
                                      int(m_max), float(y0), bool(sequential),
                                      rng, counts)
        return work

    res = run_replicates(make, replicates, threads)
    vals = np.array([x[0] for x in res])
    capped = int(sum(1 for x in res if x[1] > 0))
    return summarize(vals, capped, 0.01)
