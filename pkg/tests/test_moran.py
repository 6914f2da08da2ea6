import numpy as np
import pytest

from stratasg import moran
from stratasg.moran import MoranState, transition_rates
from stratasg.params import ModelParams, ParameterError, drift

P = ModelParams(0.3, 0.5, 0.2)


def test_rates_example():
    up, down = transition_rates(ModelParams(0.1, 0.2, 0.05), MoranState(5, 2))
    assert up == pytest.approx(1.35)
    assert down == pytest.approx(1.464)


def test_rates_at_the_boundary():
    up, down = transition_rates(P, MoranState(10, 0))
    assert down == 0.0 and up == pytest.approx(10 * 0.2)
    up, down = transition_rates(P, MoranState(10, 10))
    assert up == 0.0 and down == 0.0
    up, down = transition_rates(P.with_(nu0=0.4), MoranState(10, 10))
    assert up == 0.0 and down == pytest.approx(10 * 0.2 * 0.4)


def test_drift_is_the_mean_rate():
    p = ModelParams(0.2, 0.7, 0.3, nu0=0.25)
    for k in range(0, 21):
        up, down = transition_rates(p, MoranState(20, k))
        assert (up - down) / 20 == pytest.approx(drift(p, k / 20), abs=1e-14)


def test_state_validation():
    with pytest.raises(ParameterError):
        MoranState(0, 0)
    with pytest.raises(ParameterError):
        MoranState(5, 6)
    with pytest.raises(ParameterError):
        moran.simulate(P, 5, 2, -1.0, seed=1)


def test_all_unfit_without_beneficial_mutation_is_absorbing():
    path = moran.simulate(P, 50, 50, 10.0, seed=1)
    assert len(path.times) == 1 and path.final_k == 50
    assert path.at(7.0) == 50


def test_neutral_pair():
    p = ModelParams(0.0, 0.0, 0.0)
    first, finals = [], []
    for i in range(4000):
        path = moran.simulate(p, 2, 1, 50.0, seed=2, replicate=i)
        assert len(path.times) <= 2
        if len(path.times) == 2:
            first.append(path.times[1])
        finals.append(path.final_k)
    first = np.array(first)
    # total jump rate 1, each direction equally likely
    assert abs(first.mean() - 1.0) < 4 * first.std() / np.sqrt(len(first))
    assert set(finals) <= {0, 2}
    frac = np.mean(np.array(finals) == 2)
    assert abs(frac - 0.5) < 4 * np.sqrt(0.25 / len(finals))


def test_paths_are_reproducible():
    a = moran.simulate(P, 100, 40, 3.0, seed=3, replicate=5)
    b = moran.simulate(P, 100, 40, 3.0, seed=3, replicate=5)
    c = moran.simulate(P, 100, 40, 3.0, seed=3, replicate=6)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.counts, b.counts)
    assert not np.array_equal(a.counts, c.counts)


def test_path_is_a_valid_jump_chain():
    path = moran.simulate(P, 200, 60, 5.0, seed=4)
    assert path.times[0] == 0.0 and np.all(np.diff(path.times) > 0)
    assert path.times[-1] <= 5.0
    assert np.all(np.abs(np.diff(path.counts)) == 1)
    assert np.all((path.counts >= 0) & (path.counts <= 200))


def test_gap_is_zero_at_the_fixed_point():
    assert moran.lln_gap(P, 100, 1.0, 5.0, seed=5) == 0.0


def test_gap_shrinks_with_population_size():
    p = ModelParams(1 / 30, 0.1, 0.02)
    small, _ = moran.lln_experiment(p, 10, 0.5, 5.0, 40, seed=6)
    large, _ = moran.lln_experiment(p, 10_000, 0.5, 5.0, 40, seed=6)
    assert np.median(large) < np.median(small) / 5


def test_small_time_mean_follows_drift():
    N, y0, t = 100, 0.5, 0.01
    _, finals = moran.lln_experiment(P, N, y0, t, 50_000, seed=7)
    y = finals / N
    se = y.std(ddof=1) / np.sqrt(len(y))
    want = y0 + t * drift(P, y0)
    assert abs(y.mean() - want) < 4 * se
    assert abs(y.mean() - y0) > 4 * se  # the drift is visible at this sample size
