"""Deterministic dynamics dy/dt = F(y): integration, equilibria, limits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .params import (ModelParams, ParameterError, critical_rates, drift,
                     drift_coefficients, sigma)


class IntegrationError(RuntimeError):
    def __init__(self, msg, t, y):
        super().__init__(msg)
        self.t = t
        self.y = y


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


@dataclass
class Trajectory:
    """Accepted steps of an integration with cubic Hermite dense output."""

    times: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    y0: float

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def final(self) -> float:
        return float(self.values[-1])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        ts, ys, fs = self.times, self.values, self.slopes
        if len(ts) == 1:
            return np.full_like(t, ys[0]) if t.ndim else float(ys[0])
        if np.any(t < ts[0] - 1e-12) or np.any(t > ts[-1] + 1e-12):
            raise ValueError("dense output requested outside the integrated range")
        i = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2)
        h = ts[i + 1] - ts[i]
        x = (t - ts[i]) / h
        x2 = x * x
        x3 = x2 * x
        out = ((2 * x3 - 3 * x2 + 1) * ys[i] + (x3 - 2 * x2 + x) * h * fs[i]
               + (-2 * x3 + 3 * x2) * ys[i + 1] + (x3 - x2) * h * fs[i + 1])
        return out if out.ndim else float(out)


def integrate(p: ModelParams, y0: float, t_end: float, tol: float = 1e-10,
              rtol: float | None = None, h0: float | None = None,
              max_step: float = math.inf) -> Trajectory:
    """Adaptive Dormand-Prince 5(4) solution of dy/dt = F(y) on [0, t_end].

    ``max_step`` caps the step size, which tightens the Hermite dense output
    between steps (the step controller alone only bounds the node values).
    """
    if not 0.0 <= y0 <= 1.0:
        raise ParameterError(f"y0 must lie in [0, 1], got {y0!r}")
    if t_end < 0:
        raise ParameterError("t_end must be non-negative")
    if tol <= 0:
        raise ParameterError("tol must be positive")
    atol = tol
    rtol = tol if rtol is None else rtol

    def f(y):
        return drift(p, y)

    t, y = 0.0, float(y0)
    fy = f(y)
    ts, ys, fs = [t], [y], [fy]
    if t_end == 0:
        return Trajectory(np.array(ts), np.array(ys), np.array(fs), y0)
    if h0 is None:
        scale = atol + rtol * abs(y)
        h = 0.01 * scale / abs(fy) if fy != 0 else t_end
        h = min(max(h, 1e-6), t_end)
    else:
        h = h0
    hmin = 1e-14 * max(1.0, t_end)
    k = [0.0] * 7
    k[0] = fy
    while t < t_end:
        h = min(h, max_step)
        if t + h > t_end:
            h = t_end - t
        for i in range(1, 7):
            yi = y + h * sum(a * kk for a, kk in zip(_A[i], k))
            k[i] = f(yi)
        ynew = y + h * sum(b * kk for b, kk in zip(_B, k))
        err = abs(h * sum(e * kk for e, kk in zip(_E, k)))
        sc = atol + rtol * max(abs(y), abs(ynew))
        ratio = err / sc
        if ratio <= 1.0:
            t = t_end if t_end - (t + h) < 1e-15 * t_end else t + h
            y = ynew
            k[0] = k[6]  # first-same-as-last
            ts.append(t)
            ys.append(y)
            fs.append(k[6])
        fac = 5.0 if ratio == 0 else min(5.0, max(0.2, 0.9 * ratio ** -0.2))
        if ratio > 1.0:
            fac = min(fac, 1.0)
        h *= fac
        if h < hmin and t < t_end:
            raise IntegrationError("step size underflow", t, y)
    vals = np.array(ys)
    # clamp round-off overshoot out of [0, 1]
    over = (vals < 0) & (vals > -tol) | (vals > 1) & (vals < 1 + tol)
    vals[over] = np.clip(vals[over], 0.0, 1.0)
    return Trajectory(np.array(ts), vals, np.array(fs), y0)


def y_at(p: ModelParams, y0: float, t: float, tol: float = 1e-10) -> float:
    return integrate(p, y0, t, tol).final


def y_separable(p: ModelParams, y0: float, t: float) -> float:
    """Exact solution for gamma = 0, nu0 = 0, where F(y) = (1 - y)(u - s y)
    separates."""
    if p.gamma != 0 or p.nu0 != 0:
        raise ParameterError("separable solution needs gamma = 0 and nu0 = 0")
    if not 0.0 <= y0 <= 1.0:
        raise ParameterError(f"y0 must lie in [0, 1], got {y0!r}")
    s, u = p.s, p.u
    if y0 == 1.0:
        return 1.0
    if u == s:
        return 1.0 - 1.0 / (1.0 / (1.0 - y0) + s * t)
    # (u - s y)/(1 - y) grows like exp((u - s) t)
    ke = (u - s * y0) / (1.0 - y0) * math.exp((u - s) * t)
    return (ke - u) / (ke - s)


# ---------------------------------------------------------------------------
# equilibria

STABLE = "stable"
UNSTABLE = "unstable"
SEMISTABLE = "semistable-left-attracting"

MERGE_TOL = 1e-8
_AT_TOL = 1e-12


@dataclass(frozen=True)
class Root:
    value: float
    multiplicity: int
    in_unit_interval: bool
    stability: str

    @property
    def stable_in_unit(self) -> bool:
        """Stable as an equilibrium of the flow on [0, 1]."""
        if self.stability == STABLE:
            return True
        return self.stability == SEMISTABLE and abs(self.value - 1.0) < MERGE_TOL


@dataclass
class EquilibriumReport:
    roots: list[Root]
    sigma: float | None
    regime: tuple[str, str]
    y_hat_inf: float
    y_check_inf: float
    y_c: float
    named: dict = field(default_factory=dict)

    @property
    def values(self) -> list[float]:
        """Root values repeated by multiplicity, ascending."""
        out = []
        for r in self.roots:
            out.extend([r.value] * r.multiplicity)
        return out

    @property
    def unit_roots(self) -> list[Root]:
        return [r for r in self.roots if r.in_unit_interval]

    @property
    def stable_values(self) -> list[float]:
        return [r.value for r in self.roots if r.in_unit_interval and r.stable_in_unit]


def _close(a, b):
    return abs(a - b) <= _AT_TOL * max(abs(a), abs(b), 1e-300)


def classify(p: ModelParams) -> tuple[str, str]:
    """Position of u relative to (u_hat, u_check) and of gamma relative to s."""
    u_hat, u_check = critical_rates(p)
    u = p.u
    if p.gamma == 0:
        g = "gamma=0"
    elif _close(p.gamma, p.s):
        g = "gamma=s"
    else:
        g = "gamma<s" if p.gamma < p.s else "gamma>s"
    if _close(u, u_hat):
        r = "at_uhat"
    elif u < u_hat:
        r = "below_uhat"
    elif u_check is None:
        r = "above_ucheck"  # no saddle-node without interaction
    elif _close(u, u_check):
        r = "at_ucheck"
    elif u < u_check:
        r = "between"
    else:
        r = "above_ucheck"
    return r, g


def _stability(p: ModelParams, r: float, mult: int) -> str:
    a3, a2, a1, _ = drift_coefficients(p)
    if mult == 1:
        d = 3 * a3 * r * r + 2 * a2 * r + a1
        return STABLE if d < 0 else UNSTABLE
    if mult == 2:
        # F ~ c (y-r)^2 near r
        c = 3 * a3 * r + a2
        return SEMISTABLE if c > 0 else UNSTABLE
    # triple root: F ~ a3 (y-r)^3 with a3 = -gamma < 0
    return STABLE if a3 < 0 else UNSTABLE


def _merge(vals: list[float]) -> list[tuple[float, int]]:
    vals = sorted(vals)
    groups: list[list[float]] = []
    for v in vals:
        if groups and abs(v - groups[-1][-1]) < MERGE_TOL:
            groups[-1].append(v)
        else:
            groups.append([v])
    out = []
    for g in groups:
        v = sum(g) / len(g)
        if any(x == 1.0 for x in g):
            v = 1.0
        out.append((v, len(g)))
    return out


def _closed_form_values(p: ModelParams, regime) -> tuple[list[float], float | None, dict]:
    s, g, u = p.s, p.gamma, p.u
    if g == 0:
        if s == 0:
            return [1.0], None, {"ybar1": 1.0}
        y2 = 1.0 if regime[0] == "at_uhat" else u / s
        return [1.0, y2], None, {"ybar1": 1.0, "ybar2": y2}
    sg = sigma(p)
    if regime[0] == "at_ucheck":
        sg = 0.0
    named = {"ybar1": 1.0}
    vals = [1.0]
    if sg >= 0:
        rt = math.sqrt(sg)
        y2 = 0.5 * (1 + s / g - rt)
        y3 = 0.5 * (1 + s / g + rt)
        if regime[0] == "at_uhat":
            # roots are exactly 1 and s/gamma
            y2, y3 = sorted((1.0, s / g))
        named["ybar2"] = y2
        named["ybar3"] = y3
        vals += [y2, y3]
    return vals, sg, named


def _polish(p: ModelParams, r: float) -> float:
    a3, a2, a1, a0 = drift_coefficients(p)
    for _ in range(2):
        f = ((a3 * r + a2) * r + a1) * r + a0
        d = (3 * a3 * r + 2 * a2) * r + a1
        if d == 0 or not math.isfinite(f / d):
            break
        step = f / d
        if abs(step) > 1e-6:
            break  # not in the Newton basin (or a multiple root); keep r
        r -= step
    return r


def _numeric_values(p: ModelParams) -> list[float]:
    coeffs = np.array(drift_coefficients(p))
    raw = np.roots(coeffs)  # companion-matrix eigenvalues
    vals = [_polish(p, float(z.real)) for z in raw if abs(z.imag) < 1e-7]
    if any(-1e-12 <= v <= 1 + 1e-12 for v in vals):
        return vals
    # badly scaled cubic: F(0) > 0 >= F(1) still brackets a root, so bisect
    # for it and deflate
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if drift(p, mid) > 0:
            lo = mid
        else:
            hi = mid
    r = hi if drift(p, hi) == 0 else 0.5 * (lo + hi)
    a3, a2, a1, _ = coeffs
    b1 = a2 + a3 * r
    b0 = a1 + b1 * r
    out = [r]
    if a3 == 0:
        if b1 != 0:
            out.append(_polish(p, -b0 / b1))
        return out
    disc = b1 * b1 - 4 * a3 * b0
    if disc >= 0:
        q = -0.5 * (b1 + math.copysign(math.sqrt(disc), b1))
        for z in (q / a3, b0 / q if q != 0 else None):
            if z is not None:
                out.append(_polish(p, z))
    return out


def equilibria(p: ModelParams) -> EquilibriumReport:
    """Zeros of F with multiplicities, stabilities and the regime."""
    if p.u <= 0:
        raise ParameterError("equilibria assume u > 0")
    regime = classify(p) if p.s > 0 else ("n/a", "n/a")
    if p.nu0 == 0:
        vals, sg, named = _closed_form_values(p, regime)
    else:
        vals = _numeric_values(p)
        sg = sigma(p) if p.gamma > 0 else None
        named = {}
    merged = _merge(vals)
    roots = []
    for v, m in merged:
        inside = -1e-12 <= v <= 1 + 1e-12
        if inside:
            v = min(max(v, 0.0), 1.0)
        roots.append(Root(float(v), m, inside, _stability(p, v, m)))
    unit = sorted(r.value for r in roots if r.in_unit_interval)
    lo, hi = unit[0], unit[-1]
    if len(unit) >= 3:
        yc = unit[1]
    elif len(unit) == 2:
        yc = hi if drift(p, 0.5 * (lo + hi)) < 0 else lo
    else:
        yc = lo
    return EquilibriumReport(roots, sg, regime, lo, hi, yc, named)


def long_term_limit(p: ModelParams, y0: float, method: str = "auto") -> float:
    """lim y(t; y0) as t -> infinity."""
    if not 0.0 <= y0 <= 1.0:
        raise ParameterError(f"y0 must lie in [0, 1], got {y0!r}")
    if method == "integrate":
        scale = min(p.s + p.gamma, p.u, 1.0) if p.u > 0 else 1.0
        return integrate(p, y0, 1e4 / max(scale, 1e-6)).final
    if p.nu0 == 0 and p.s > 0 and p.gamma > 0 and p.u > 0 and method in ("auto", "table"):
        return _limit_table(p, y0)
    if method not in ("auto", "bracket", "table"):
        raise ValueError(f"unknown method {method!r}")
    return _limit_bracket(p, y0)


def _limit_table(p: ModelParams, y0: float) -> float:
    rep = equilibria(p)
    y2 = rep.named.get("ybar2")
    y3 = rep.named.get("ybar3")
    r, _ = rep.regime
    s, g = p.s, p.gamma
    if r == "below_uhat" or (r == "at_uhat" and s < g):
        return y2 if y0 < 1.0 else 1.0
    if r in ("between", "at_ucheck") and s < g:
        if y0 < y3:
            return y2
        if y0 == y3:
            return y3
        return 1.0
    return 1.0


def _limit_bracket(p: ModelParams, y0: float) -> float:
    # for a scalar flow the limit is the nearest zero in the drift direction
    if p.u == 0:
        if y0 in (0.0, 1.0) or drift(p, y0) == 0:
            return y0
        return 0.0 if drift(p, y0) < 0 else 1.0
    unit = [r.value for r in equilibria(p).unit_roots]
    for r in unit:
        if abs(r - y0) < 1e-15:
            return r
    f = drift(p, y0)
    if f > 0:
        return min(r for r in unit if r > y0)
    if f < 0:
        return max(r for r in unit if r < y0)
    return y0


# ---------------------------------------------------------------------------
# uniqueness for nu0 in (0, 1)


@dataclass(frozen=True)
class UniquenessResult:
    unique: bool
    o_F: int
    o_F_plus: int

    def __bool__(self):
        return self.unique


def sign_changes(coeffs) -> int:
    signs = [c > 0 for c in coeffs if c != 0]
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def shifted_coefficients(coeffs) -> list[float]:
    """Coefficients of F(y + 1) (highest power first) by Taylor shift."""
    c = list(coeffs)
    n = len(c)
    for i in range(n - 1):
        for j in range(1, n - i):
            c[j] += c[j - 1]
    return c


def uniqueness_criterion(p: ModelParams) -> UniquenessResult:
    """Budan sign-change test for a single zero of F in [0, 1]."""
    if not 0.0 < p.nu0 < 1.0:
        raise ParameterError("the sign-change criterion is stated for nu0 in (0,1)")
    if p.u <= 0 or p.gamma <= 0:
        raise ParameterError("the sign-change criterion needs u > 0 and gamma > 0")
    cf = drift_coefficients(p)
    o_f = sign_changes(cf)
    o_fp = sign_changes(shifted_coefficients(cf))
    return UniquenessResult(o_f - o_fp == 1, o_f, o_fp)
