import math

import numpy as np
import pytest

from stratasg import rng as R
from stratasg import sasg, wtt
from stratasg.params import ModelParams


def test_streams_are_independent_of_each_other():
    a = R.generator(1, R.STREAM_SASG, 0).random(4)
    b = R.generator(1, R.STREAM_SASG, 0).random(4)
    c = R.generator(1, R.STREAM_SASG, 1).random(4)
    d = R.generator(1, R.STREAM_EASG, 0).random(4)
    e = R.generator(2, R.STREAM_SASG, 0).random(4)
    assert np.array_equal(a, b)
    for other in (c, d, e):
        assert not np.array_equal(a, other)


def test_replicate_results_do_not_depend_on_thread_count():
    def make():
        def work(i):
            return R.generator(5, R.STREAM_SASG, i).random()
        return work
    one = R.run_replicates(make, 37, threads=1)
    many = R.run_replicates(make, 37, threads=4)
    assert one == many


def test_simulation_is_thread_invariant(monkeypatch):
    p = ModelParams(0.3, 0.5, 0.2)
    a = sasg.mc_duality_sasg(p, wtt.PITCHSTAR, 0.4, 1.0, 400, seed=3, threads=1)
    b = sasg.mc_duality_sasg(p, wtt.PITCHSTAR, 0.4, 1.0, 400, seed=3, threads=3)
    monkeypatch.setenv(R.THREADS_ENV, "2")
    c = sasg.mc_duality_sasg(p, wtt.PITCHSTAR, 0.4, 1.0, 400, seed=3)
    assert a.estimate == b.estimate == c.estimate
    assert np.array_equal(a.extra["hs"], b.extra["hs"])


def test_thread_env(monkeypatch):
    monkeypatch.delenv(R.THREADS_ENV, raising=False)
    assert R.thread_count(3) == 3
    monkeypatch.setenv(R.THREADS_ENV, "4")
    assert R.thread_count() == 4
    for bad in ("0", "x"):
        monkeypatch.setenv(R.THREADS_ENV, bad)
        with pytest.raises(ValueError):
            R.thread_count()


def test_summarize():
    res = R.summarize([1.0, 2.0, 3.0, 4.0])
    assert res.estimate == 2.5
    assert res.se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert res.z(2.5) == 0.0
    assert res.within(2.5 + 2.9 * res.se) and not res.within(2.5 + 3.1 * res.se)
    const = R.summarize([0.1] * 5)
    assert const.estimate == 0.1 and const.se == 0.0
    assert const.z(0.1) == 0.0 and const.z(0.2) == -math.inf
    with pytest.raises(ValueError):
        R.summarize([1.0])


def test_flagging():
    res = R.summarize(np.zeros(100) + np.arange(100), n_flagged=2, flag_limit=0.01)
    assert res.flagged and res.flag_fraction == 0.02
    assert not R.summarize(np.arange(100.0), n_flagged=1, flag_limit=0.01).flagged
