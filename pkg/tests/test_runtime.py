from __future__ import annotations

import json

import numpy as np
import pytest

from asyncdual import (
    ClosedFormShift,
    async_step,
    Constant,
    Cyclic,
    DualState,
    Hinge,
    IidBernoulli,
    LocalProblem,
    OracleError,
    PowerDecay,
    Quadratic,
    RunConfig,
    ScriptedMask,
    Synchronous,
    ZeroMean,
    build_topology,
    consensus_problem,
    run,
    sample_error,
    sync_step,
    tree_quadratic_reference,
)
from asyncdual.runtime import MissingChannelError, normalize_channels

ALL = ("lambda", "Q", "residual", "witness")


def test_fixed_point_run(path3, lam_star):
    trace, state = run(RunConfig(path3, IidBernoulli(0.5), PowerDecay(0.15, 0.51), 500, lambda0=lam_star, channels=ALL))
    assert np.array_equal(state.lam, lam_star)
    assert np.all(trace.lam == lam_star)


def test_idle_schedule(path3):
    trace, state = run(RunConfig(path3, ScriptedMask(np.zeros((0, 2))), PowerDecay(0.15, 0.51), 100, channels=ALL))
    assert not trace.mask.any() and not trace.gamma.any()
    assert np.all(trace.lam == 0.0) and np.all(trace.Q == 0.0)
    assert np.all(trace.avg_weight == 0.0) and trace.primal_average is None


def test_row_semantics(path3):
    rule = PowerDecay(0.15, 0.51)
    trace, state = run(RunConfig(path3, Cyclic(), rule, 6, channels=ALL))
    assert trace.Q.shape == (7,) and trace.num_steps == 6
    assert not trace.mask[0].any()
    assert trace.mask[1:].tolist() == [[1, 0], [0, 1]] * 3
    assert trace.gamma[-1].tolist() == [3, 3] and state.k == 6
    # alpha[k] is what the next step uses; each edge fired three times
    assert trace.alpha[-1] == pytest.approx([0.15 * 4**-0.51] * 2)
    assert trace.avg_weight[0] == pytest.approx(0.15) and trace.avg_weight[-1] == 0.0


def test_matches_stepwise_sync(path3):
    rule = PowerDecay(0.15, 0.51)
    trace, _ = run(RunConfig(path3, Synchronous(), rule, 300, channels=ALL))
    s = DualState.initial(path3, rule)
    for k in range(300):
        s = sync_step(path3, s, float(trace.alpha[k][0]))
        assert np.array_equal(s.lam, trace.lam[k + 1])


def test_noise_enters_as_sampled(path3):
    noise = ZeroMean(0.05)
    trace, _ = run(RunConfig(path3, Synchronous(), PowerDecay(0.15, 0.51), 20, noise=noise, seed=3, channels=ALL))
    s = DualState.initial(path3, PowerDecay(0.15, 0.51))
    for k in range(20):
        s = sync_step(path3, s, float(trace.alpha[k][0]), sample_error(noise, k, 3, 2))
    assert np.array_equal(s.lam, trace.lam[-1])


def test_global_clock_advances_every_step(path3):
    trace, _ = run(RunConfig(path3, Cyclic(), PowerDecay(1.0, 1.0), 10, global_clock=True))
    assert np.all(trace.alpha[:, 0] == trace.alpha[:, 1])
    assert trace.alpha[-1][0] == pytest.approx(1.0 / 11)


def test_global_clock_needs_single_rule(path3):
    with pytest.raises(ValueError):
        RunConfig(path3, Cyclic(), (PowerDecay(1, 1), PowerDecay(1, 1)), 10, global_clock=True)


def test_per_edge_rules(path3):
    trace, _ = run(RunConfig(path3, Synchronous(), [PowerDecay(1.0, 1.0), Constant(0.1)], 5))
    assert trace.alpha[-1].tolist() == pytest.approx([1.0 / 6, 0.1])


def test_reference_channels(path3):
    ref = tree_quadratic_reference(path3)
    trace, _ = run(RunConfig(path3, Synchronous(), PowerDecay(0.15, 0.51), 50, reference=ref, channels=("gap",)))
    assert trace.gap[0] == pytest.approx(9.0)
    assert trace.dist[0] == pytest.approx(np.sqrt(18.0))
    assert trace.spread is not None and trace.spread[0] == pytest.approx(6.0)
    assert np.all(np.diff(trace.best_gap) <= 0)


def test_gap_needs_reference(path3):
    trace, _ = run(RunConfig(path3, Synchronous(), PowerDecay(0.15, 0.51), 5))
    with pytest.raises(MissingChannelError):
        trace.gap


def test_channel_names():
    assert normalize_channels(["λ", "x"]) == {"lambda", "witness"}
    with pytest.raises(ValueError):
        normalize_channels(["bogus"])


def test_csv_and_summary(path3, tmp_path):
    ref = tree_quadratic_reference(path3)
    trace, _ = run(RunConfig(path3, Synchronous(), PowerDecay(0.15, 0.51), 10, reference=ref, channels=ALL))
    text = trace.to_csv(tmp_path / "t.csv", stride=4)
    lines = text.splitlines()
    assert lines[0].split(",")[:6] == ["k", "mask", "Q", "gap", "best_gap", "residual"]
    assert [ln.split(",")[0] for ln in lines[1:]] == ["0", "4", "8", "10"]
    assert (tmp_path / "t.csv").read_text() == text
    summary = json.loads(trace.to_json())
    assert summary["iterations"] == 10 and summary["updates_per_edge"] == [10, 10]
    assert summary["reference"]["Q_star"] == pytest.approx(9.0)


def test_oracle_failure_reports_step_and_agent():
    # an unboxed hinge with a negative linear term has no minimizer
    topo = build_topology(2, [(1, 2)])
    p = consensus_problem(topo, [LocalProblem((Hinge(1.0, 0.0),)), LocalProblem((Quadratic(10.0),))])
    with pytest.raises(OracleError) as info:
        run(RunConfig(p, Synchronous(), PowerDecay(1.0, 0.6), 10))
    assert info.value.agent == 1 and info.value.step is not None


def test_runs_are_deterministic(path3):
    cfg = RunConfig(path3, IidBernoulli(0.5), ClosedFormShift(0.15, 0.51), 5000, noise=ZeroMean(0.05), seed=2, channels=ALL)
    a, _ = run(cfg)
    b, _ = run(cfg)
    assert a.to_csv() == b.to_csv()


def test_iteration_validation(path3):
    with pytest.raises(ValueError):
        RunConfig(path3, Synchronous(), PowerDecay(1, 1), 0)


def test_adaptive_network_run_replays_stepwise():
    from asyncdual import generate_sect6_config

    spec = generate_sect6_config(2, 8, "path", 0, iterations=3000)
    name, cfg = [(n, c) for n, c in spec.run_configs() if n == "async-local"][0]
    cfg = RunConfig(cfg.problem, cfg.scheduler, cfg.stepsize, 3000, seed=cfg.seed, channels=ALL)
    trace, _ = run(cfg)
    s = cfg.initial_state()
    for k in range(3000):
        s = async_step(cfg.problem, s, trace.mask[k + 1], rules=cfg.stepsize)
        assert np.array_equal(s.lam, trace.lam[k + 1])
    assert np.array_equal(s.alpha, trace.alpha[-1]) and np.array_equal(s.gamma, trace.gamma[-1])
