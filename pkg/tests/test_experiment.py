from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from asyncdual import (
    Biased,
    ClosedFormShift,
    Constant,
    Cyclic,
    ExperimentSpec,
    IidBernoulli,
    LocalProblem,
    PowerDecay,
    Quadratic,
    ScriptedMask,
    Variant,
    ZeroMean,
    generate_sect6_config,
    run_experiment,
)
from asyncdual.config import ConfigError, GraphSpec
from asyncdual.experiment import EXIT_OK, EXIT_VIOLATION, OutputSpec, compute_reference


def small_spec(**kw):
    base = dict(
        name="small",
        graph=GraphSpec("path", 3),
        agents=tuple(LocalProblem((Quadratic(a),)) for a in (0.0, 3.0, 6.0)),
        scheduler=IidBernoulli(0.5),
        stepsize=ClosedFormShift(0.15, 0.51),
        iterations=2000,
    )
    base.update(kw)
    return ExperimentSpec(**base)


def test_round_trip_all_sections():
    spec = small_spec(
        noise=Biased((0.01, 0.02), ZeroMean(0.05, "triangular"), 0.5),
        lambda0=(1.0, -1.0),
        variants=(
            Variant("a", scheduler=Cyclic((2, 1))),
            Variant("b", stepsize=(PowerDecay(1.0, 1.0), Constant(0.1))),
            Variant("c", global_clock=True),
            Variant("d", scheduler=ScriptedMask(np.eye(2, dtype=np.uint8), repeat=True)),
            Variant("e", graph=GraphSpec("edges", 3, edges=((1, 2), (1, 3)))),
        ),
        outputs=OutputSpec(None, ("Q", "witness"), 5),
    )
    again = ExperimentSpec.loads(spec.dumps())
    assert again == spec
    assert again.dumps() == spec.dumps()


def test_sect6_round_trip():
    spec = generate_sect6_config(2, 8, "rgg", 3)
    assert ExperimentSpec.loads(spec.dumps()) == spec


def test_empty_variants_runs_base():
    configs = small_spec().run_configs()
    assert [n for n, _ in configs] == ["small"]


@pytest.mark.parametrize(
    "mutate,field",
    [
        (lambda d: d["scheduler"].update(type="bogus"), "scheduler.type"),
        (lambda d: d["run"].pop("iterations"), "run.iterations"),
        (lambda d: d["stepsize"].update(q=2.0), "stepsize"),
        (lambda d: d["run"].update(iterations="many"), "run.iterations"),
        (lambda d: d["variants"].append({"name": "x", "global_clock": 1}), "variants[0].global_clock"),
    ],
)
def test_config_errors_name_the_field(mutate, field):
    doc = small_spec().to_dict()
    mutate(doc)
    with pytest.raises(ConfigError) as info:
        ExperimentSpec.loads(json.dumps(doc, indent=2))
    assert info.value.path == field
    assert info.value.line is not None


def test_json_syntax_error_has_line():
    with pytest.raises(ConfigError) as info:
        ExperimentSpec.loads('{\n  "name": "x",\n  oops\n}')
    assert info.value.line == 3


def test_edge_count_mismatch_is_config_error():
    doc = small_spec().to_dict()
    doc["stepsize"] = {"rules": [{"type": "power", "c": 1.0, "q": 1.0}], "global_clock": False}
    with pytest.raises(ConfigError):
        ExperimentSpec.loads(json.dumps(doc))


def test_run_experiment_writes_files(tmp_path):
    spec = small_spec(variants=(Variant("iid"), Variant("cyc", scheduler=Cyclic())), outputs=OutputSpec(None, ("Q",), 100))
    result = run_experiment(spec, tmp_path)
    assert result.status == EXIT_OK
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["cyc.summary.json", "cyc.trace.csv", "gaps.csv", "iid.summary.json", "iid.trace.csv"]
    rows = list(csv.reader(open(tmp_path / "gaps.csv")))
    assert rows[0] == ["k", "gap_iid", "gap_cyc"] and rows[-1][0] == "2000"
    summary = json.loads((tmp_path / "iid.summary.json").read_text())
    assert summary["variant"] == "iid" and summary["monitor"]["flags"] == []


def test_constant_stepsize_is_a_violation(tmp_path):
    spec = small_spec(stepsize=Constant(0.05), iterations=200)
    result = run_experiment(spec, tmp_path)
    assert result.status == EXIT_VIOLATION and "Assumption 3" in result.message
    assert run_experiment(spec, tmp_path, allow_violations=True).status == EXIT_OK


def test_output_env(tmp_path, monkeypatch):
    monkeypatch.setenv("ASYNCDUAL_OUT", str(tmp_path / "env"))
    run_experiment(small_spec(iterations=10))
    assert (tmp_path / "env" / "small.trace.csv").exists()


def test_generator_shapes():
    spec = generate_sect6_config(5, 45, "path", 0)
    problem = spec.problem()
    assert problem.topology.num_agents == 50 and problem.topology.num_edges == 49
    assert [v.name for v in spec.variants] == ["sync", "async-global", "async-local"]
    rgg = generate_sect6_config(5, 45, "rgg", 0).problem().topology
    assert rgg.num_edges == 358 and rgg.connected
    single = generate_sect6_config(0, 1, "path", 0).problem()
    assert single.n_bar == 0


def test_generator_distributions():
    spec = generate_sect6_config(20, 30, "path", 1)
    hinges = [a.atoms[0] for a in spec.agents[:20]]
    assert all(0.2 <= h.slope <= 1.0 and 2.0 <= h.knee <= 8.0 for h in hinges)
    assert all(a.rho == 0.005 for a in spec.agents[:20])
    assert all(1.0 <= a.atoms[0].scale <= 5.0 for a in spec.agents[20:])
    assert all(0.5 <= p <= 1.0 for p in spec.scheduler.ptilde)
    assert generate_sect6_config(2, 2, regularize=False).agents[0].rho == 0.0


def test_compute_reference_kinds():
    assert compute_reference(small_spec().problem()).method.startswith("tree")
    assert compute_reference(generate_sect6_config(2, 3).problem()) is not None
