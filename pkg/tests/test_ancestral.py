import math

import numpy as np
import pytest

from stratasg import ancestral
from stratasg.ancestral import g_asymptotic, g_closed, g_equilibrium, g_quadrature
from stratasg.ode import equilibria
from stratasg.params import ModelParams, ParameterError, critical_rates

S30 = 1 / 30
U_CHECK = critical_rates(ModelParams(S30, 0.1, 0.01))[1]

REGIMES = {
    "below": ModelParams(0.3, 0.5, 0.2),
    "at": ModelParams(S30, 0.1, U_CHECK),
    "above": ModelParams(0.3, 0.5, 0.5),
}


def test_gamma_zero_example():
    p = ModelParams(0.3, 0.0, 0.2)
    assert g_closed(p, 2 / 3, 1.0) == pytest.approx(2 / 3 * math.exp(-0.1), abs=1e-12)
    assert g_closed(p, 0.5, 1.0) == pytest.approx(0.431870, abs=1e-6)


def test_equilibrium_start():
    p = REGIMES["below"]
    y2 = equilibria(p).named["ybar2"]
    want = y2 * math.exp(-2.0 * (1 - y2) * (p.s + p.gamma * (1 - y2)))
    assert g_closed(p, y2, 2.0) == pytest.approx(want, rel=1e-12)


def test_trivial_cases():
    assert g_closed(ModelParams(0, 0, 0.4), 0.3, 5.0) == 0.3
    assert g_closed(REGIMES["below"], 1.0, 5.0) == 1.0
    assert g_closed(REGIMES["below"], 0.4, 0.0) == 0.4
    with pytest.raises(ParameterError):
        g_closed(ModelParams(0.3, 0.5, 0.2, nu0=0.1), 0.5, 1.0)
    with pytest.raises(ParameterError):
        g_closed(REGIMES["below"], 0.5, -1.0)


def _draw(rng):
    s = rng.uniform(0.01, 1)
    kind = rng.random()
    if kind < 0.2:
        g, u = 0.0, rng.uniform(0.005, 1)
    elif kind < 0.3:
        g = rng.uniform(0.05, 1)
        u = (s + g) ** 2 / (4 * g)
    else:
        g, u = rng.uniform(0.05, 1), rng.uniform(0.005, 1.5)
    return ModelParams(s, g, u), rng.uniform(0, 1), rng.uniform(0.05, 5)


def test_closed_form_matches_quadrature():
    rng = np.random.default_rng(12)
    for _ in range(100):
        p, y0, r = _draw(rng)
        assert g_closed(p, y0, r) == pytest.approx(g_quadrature(p, y0, r), abs=1e-8), (p, y0, r)


def test_bounded_by_y0_and_decreasing():
    rng = np.random.default_rng(13)
    rs = [0.0, 0.3, 1.0, 3.0, 8.0]
    for _ in range(40):
        p, y0, _ = _draw(rng)
        g = [g_closed(p, y0, r) for r in rs]
        assert g[0] == y0
        assert all(b <= a + 1e-14 for a, b in zip(g, g[1:]))


def test_adaptive_simpson():
    assert ancestral.adaptive_simpson(math.sin, 0, math.pi) == pytest.approx(2.0, abs=1e-10)
    assert ancestral.adaptive_simpson(math.exp, 1, 1) == 0.0


def test_asymptotic_examples():
    for p in REGIMES.values():
        assert g_asymptotic(p, 1.0) == 1.0
    # u < s: the population stays away from 1 and the ancestor ends up fit
    assert g_equilibrium(REGIMES["below"], 0.7) == 0.0
    assert g_equilibrium(ModelParams(0.3, 0.0, 0.2), 0.9) == 0.0


def test_equilibrium_regime_between_critical_rates():
    p = ModelParams(S30, 0.1, 0.04)
    y3 = equilibria(p).named["ybar3"]
    assert g_equilibrium(p, y3 + 0.01) == 1.0
    assert g_equilibrium(p, y3 - 0.01) == 0.0
    assert g_equilibrium(p, 0.1) == 0.0


def test_asymptotic_is_the_long_time_limit():
    for p, y0 in [(REGIMES["above"], 0.4), (ModelParams(0.3, 0.0, 0.5), 0.4),
                  (ModelParams(S30, 0.1, 0.04), 0.95),
                  (REGIMES["at"], 0.95), (ModelParams(1.0, 0.5, 1.2), 0.3)]:
        assert g_asymptotic(p, y0) == pytest.approx(g_closed(p, y0, 2000.0), abs=1e-6)
        assert 0.0 < g_asymptotic(p, y0) < y0


@pytest.mark.parametrize("name", sorted(REGIMES))
def test_mc_grid(name):
    p = REGIMES[name]
    for y0 in (0.2, 0.5, 0.9):
        for r in (0.5, 1.0, 3.0):
            res = ancestral.mc_ancestral(p, y0, r, 4000, seed=14)
            assert not res.flagged
            assert res.within(g_closed(p, y0, r)), (name, y0, r, res.estimate)


def test_sequential_sampler_agrees():
    p = REGIMES["below"]
    a = ancestral.mc_ancestral(p, 0.6, 2.0, 20_000, seed=15)
    b = ancestral.mc_ancestral(p, 0.6, 2.0, 20_000, seed=16, sequential=True)
    assert abs(a.estimate - b.estimate) < 3 * math.hypot(a.se, b.se)


def test_mc_extremes():
    p = REGIMES["below"]
    assert ancestral.mc_ancestral(p, 1.0, 2.0, 100, seed=1).estimate == 1.0
    assert ancestral.mc_ancestral(p, 0.0, 2.0, 100, seed=1).estimate == 0.0
    assert ancestral.mc_ancestral(p, 0.4, 0.0, 100, seed=1).estimate == 0.4
