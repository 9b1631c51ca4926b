from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from asyncdual import (
    AdaptiveCounter,
    Cyclic,
    IidBernoulli,
    PersistentlyExciting,
    PowerDecay,
    RunConfig,
    ScriptedMask,
    Synchronous,
    build_topology,
    empirical_rate,
    next_mask,
    path_graph,
    quadratic_consensus,
    run,
)
from asyncdual.scheduler import scheduler_stream

TWO = build_topology(3, [(1, 2), (2, 3)])


def _masks(scheduler, topo=TWO, steps=200, seed=0):
    problem = quadratic_consensus([0.0] * topo.num_agents, topology=topo)
    trace, _ = run(RunConfig(problem, scheduler, PowerDecay(0.15, 0.51), steps, seed=seed))
    return trace.mask[1:]


def test_cyclic_replay():
    rng = scheduler_stream(0)
    spec = Cyclic((2, 1))
    assert [next_mask(spec, TWO, k, rng).tolist() for k in range(3)] == [[0, 1], [1, 0], [0, 1]]


def test_cyclic_rejects_non_permutation():
    with pytest.raises(ValueError):
        RunConfig(quadratic_consensus([0, 1, 2]), Cyclic((1, 1)), PowerDecay(1, 1), 5)


def test_iid_full_probability():
    m = _masks(IidBernoulli(1.0))
    assert m.all()


def test_synchronous_is_all_ones():
    assert _masks(Synchronous()).all()


def test_cyclic_rate():
    m = _masks(Cyclic(), steps=100)
    assert empirical_rate(m, 1) == Fraction(1, 2) and empirical_rate(m, 2) == Fraction(1, 2)


def test_iid_rate_concentration():
    m = _masks(IidBernoulli(0.3), steps=100_000, seed=0)
    for e in (1, 2):
        assert abs(float(empirical_rate(m, e)) - 0.3) <= 3 * math.sqrt(0.3 * 0.7 / 1e5)


def test_persistent_window():
    topo = path_graph(6)
    W = 7
    m = _masks(PersistentlyExciting(W), topo=topo, steps=3000, seed=4)
    for start in range(0, m.shape[0] - W + 1):
        assert m[start : start + W].any(axis=0).all()


def test_adaptive_counter_backs_off():
    # busy neighborhoods fire less often than the base rate
    topo = path_graph(5)
    m = _masks(AdaptiveCounter((1.0,) * 5, 0.7, 10), topo=topo, steps=20_000)
    rates = m.mean(axis=0)
    assert np.all(rates > 0) and np.all(rates < 1)
    no_window = _masks(AdaptiveCounter((1.0,) * 5, 0.7, 0), topo=topo, steps=100)
    assert no_window.all()


def test_adaptive_validation():
    with pytest.raises(ValueError):
        AdaptiveCounter((0.0, 1.0))
    with pytest.raises(ValueError):
        RunConfig(quadratic_consensus([0, 1, 2]), AdaptiveCounter((1.0, 1.0)), PowerDecay(1, 1), 5)


def test_scripted_idles_after_script():
    script = np.zeros((10, 2), dtype=np.uint8)
    script[:, 0] = 1
    m = _masks(ScriptedMask(script), steps=30)
    assert m[:10, 0].all() and not m[10:].any()
    rep = _masks(ScriptedMask(script, repeat=True), steps=30)
    assert rep[:, 0].all()


def test_masks_depend_on_seed_only():
    a = _masks(IidBernoulli(0.5), steps=3000, seed=11)
    b = _masks(IidBernoulli(0.5), steps=3000, seed=11)
    c = _masks(IidBernoulli(0.5), steps=3000, seed=12)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_next_mask_matches_run_for_iid():
    rng = scheduler_stream(5)
    spec = IidBernoulli(0.4)
    stepwise = np.array([next_mask(spec, TWO, k, rng) for k in range(50)])
    assert np.array_equal(stepwise, _masks(spec, steps=50, seed=5))


def test_iid_probability_validation():
    with pytest.raises(ValueError):
        IidBernoulli(0.0)
    with pytest.raises(ValueError):
        IidBernoulli((0.5, 1.5))


def test_empirical_rate_needs_steps():
    with pytest.raises(ValueError):
        empirical_rate(np.zeros((0, 1)), 1)
