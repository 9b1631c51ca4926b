"""Experiment specs, the variant runner and the hinge/entropy network generator."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from asyncdual.config import (
    ConfigError,
    GraphSpec,
    _Reader,
    dump_agent,
    dump_graph,
    dump_noise,
    dump_scheduler,
    dump_stepsize,
    dumps_document,
    loads_document,
    parse_graph,
    parse_noise,
    parse_problem,
    parse_scheduler,
    parse_stepsize,
)
from asyncdual.dual import ClosedFormShift
from asyncdual.monitors import MonitorReport, monitor
from asyncdual.noise import NoNoise
from asyncdual.oracles import OracleError
from asyncdual.problem import Entropy, Hinge, LocalProblem, ProblemInstance, consensus_problem
from asyncdual.reference import (
    Reference,
    ReferenceError,
    solve_consensus_scalar,
    tree_quadratic_reference,
)
from asyncdual.runtime import DEFAULT_CHANNELS, RunConfig, Trace, normalize_channels, run
from asyncdual.scheduler import AdaptiveCounter, Synchronous
from asyncdual.topology import radius_for_edge_count

__all__ = [
    "Variant",
    "OutputSpec",
    "ExperimentSpec",
    "VariantResult",
    "ExperimentResult",
    "compute_reference",
    "run_experiment",
    "generate_sect6_config",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_VIOLATION",
    "EXIT_ORACLE",
]

EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION, EXIT_ORACLE = 0, 2, 3, 4
OUTPUT_ENV = "ASYNCDUAL_OUT"

# reference network density: 358 edges among 50 agents
RGG_DENSITY = 358 / 1225


@dataclass(frozen=True)
class Variant:
    """Named overrides of the base run. ``None`` keeps the base setting."""

    name: str
    scheduler: object = None
    stepsize: object = None
    global_clock: bool | None = None
    noise: object = None
    graph: GraphSpec | None = None


@dataclass(frozen=True)
class OutputSpec:
    directory: str | None = None
    channels: frozenset = DEFAULT_CHANNELS
    stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, "channels", normalize_channels(self.channels))
        if int(self.stride) < 1:
            raise ValueError(f"stride must be at least 1, got {self.stride}")


@dataclass(frozen=True)
class ExperimentSpec:
    """A base run plus variants; the document form round-trips exactly."""

    name: str
    graph: GraphSpec
    agents: tuple[LocalProblem, ...]
    scheduler: object
    stepsize: object
    iterations: int
    global_clock: bool = False
    noise: object = NoNoise()
    seed: int = 0
    lambda0: tuple[float, ...] | None = None
    variants: tuple[Variant, ...] = ()
    outputs: OutputSpec = OutputSpec()

    def __post_init__(self):
        names = [v.name for v in self.variants]
        if len(set(names)) != len(names):
            raise ValueError(f"variant names must be unique, got {names}")
        if self.graph.num_agents != len(self.agents):
            raise ValueError(f"graph has {self.graph.num_agents} agents but {len(self.agents)} are defined")
        if self.lambda0 is not None:
            object.__setattr__(self, "lambda0", tuple(float(v) for v in self.lambda0))

    # ---------------------------------------------------------------- configs

    def problem(self, graph: GraphSpec | None = None) -> ProblemInstance:
        return consensus_problem((graph or self.graph).build(), self.agents)

    def run_configs(self) -> list[tuple[str, RunConfig]]:
        """``(name, config)`` per variant, or the base config alone. No reference attached."""
        variants = self.variants or (Variant(self.name or "base"),)
        out = []
        for v in variants:
            problem = self.problem(v.graph)
            out.append(
                (
                    v.name,
                    RunConfig(
                        problem=problem,
                        scheduler=v.scheduler if v.scheduler is not None else self.scheduler,
                        stepsize=v.stepsize if v.stepsize is not None else self.stepsize,
                        iterations=self.iterations,
                        noise=v.noise if v.noise is not None else self.noise,
                        seed=self.seed,
                        global_clock=v.global_clock if v.global_clock is not None else self.global_clock,
                        lambda0=None if self.lambda0 is None else np.asarray(self.lambda0),
                        channels=self.outputs.channels,
                    ),
                )
            )
        return out

    @property
    def base(self) -> RunConfig:
        return replace(self, variants=()).run_configs()[0][1]

    def with_overrides(self, *, seed=None, iterations=None, channels=None, directory=None) -> "ExperimentSpec":
        spec = self
        if seed is not None:
            spec = replace(spec, seed=int(seed))
        if iterations is not None:
            spec = replace(spec, iterations=int(iterations))
        if channels is not None or directory is not None:
            out = spec.outputs
            spec = replace(
                spec,
                outputs=replace(
                    out,
                    channels=out.channels if channels is None else normalize_channels(channels),
                    directory=out.directory if directory is None else str(directory),
                ),
            )
        return spec

    # ---------------------------------------------------------------- documents

    def to_dict(self) -> dict:
        doc = {
            "name": self.name,
            "graph": dump_graph(self.graph),
            "problem": {"agents": [dump_agent(a) for a in self.agents]},
            "scheduler": dump_scheduler(self.scheduler),
            "stepsize": dump_stepsize(self.stepsize, self.global_clock),
            "noise": dump_noise(self.noise),
            "run": {
                "iterations": self.iterations,
                "seed": self.seed,
                "lambda0": None if self.lambda0 is None else list(self.lambda0),
            },
            "variants": [],
            "outputs": {
                "directory": self.outputs.directory,
                "channels": sorted(self.outputs.channels),
                "stride": self.outputs.stride,
            },
        }
        for v in self.variants:
            item = {"name": v.name}
            if v.scheduler is not None:
                item["scheduler"] = dump_scheduler(v.scheduler)
            if v.stepsize is not None:
                item["stepsize"] = {k: val for k, val in dump_stepsize(v.stepsize, False).items() if k != "global_clock"}
            if v.global_clock is not None:
                item["global_clock"] = v.global_clock
            if v.noise is not None:
                item["noise"] = dump_noise(v.noise)
            if v.graph is not None:
                item["graph"] = dump_graph(v.graph)
            doc["variants"].append(item)
        return doc

    def dumps(self) -> str:
        return dumps_document(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict, text: str | None = None) -> "ExperimentSpec":
        r = _Reader(text)
        root = ()
        graph = parse_graph(r, r.section(doc, "graph", root))
        agents = parse_problem(r, r.section(doc, "problem", root))
        scheduler = parse_scheduler(r, r.section(doc, "scheduler", root))
        stepsize, gc = parse_stepsize(r, r.section(doc, "stepsize", root))
        noise = parse_noise(r, r.section(doc, "noise", root, required=False, default={"type": "none"}))
        run_sec = r.section(doc, "run", root)
        iterations = r.integer(run_sec, "iterations", ("run",))
        seed = r.integer(run_sec, "seed", ("run",), required=False, default=0)
        lam0 = r.section(run_sec, "lambda0", ("run",), required=False)
        name = r.section(doc, "name", root, required=False, default="experiment")
        variants = []
        raw = r.section(doc, "variants", root, required=False, default=[])
        if not isinstance(raw, list):
            r.fail(("variants",), "expected a list")
        for i, item in enumerate(raw):
            path = ("variants", i)
            vname = r.section(item, "name", path)
            vs = vg = None
            if "stepsize" in item:
                vs, vg = parse_stepsize(r, item["stepsize"], path + ("stepsize",))
                if "global_clock" not in item["stepsize"]:
                    vg = None
            if "global_clock" in item:
                vg = item["global_clock"]
                if not isinstance(vg, bool):
                    r.fail(path + ("global_clock",), "expected true or false")
            variants.append(
                Variant(
                    name=str(vname),
                    scheduler=parse_scheduler(r, item["scheduler"], path + ("scheduler",)) if "scheduler" in item else None,
                    stepsize=vs,
                    global_clock=vg,
                    noise=parse_noise(r, item["noise"], path + ("noise",)) if "noise" in item else None,
                    graph=parse_graph(r, item["graph"], path + ("graph",)) if "graph" in item else None,
                )
            )
        out_sec = r.section(doc, "outputs", root, required=False, default={})
        outputs = r.build(
            ("outputs",),
            OutputSpec,
            r.section(out_sec, "directory", ("outputs",), required=False),
            r.section(out_sec, "channels", ("outputs",), required=False, default=sorted(DEFAULT_CHANNELS)),
            r.integer(out_sec, "stride", ("outputs",), required=False, default=1),
        )
        spec = r.build(
            root, cls,
            name=str(name), graph=graph, agents=agents, scheduler=scheduler, stepsize=stepsize,
            iterations=iterations, global_clock=gc, noise=noise, seed=seed,
            lambda0=None if lam0 is None else tuple(lam0), variants=tuple(variants), outputs=outputs,
        )
        # surface edge-count mismatches and similar before any run starts
        _checked_configs(spec, r)
        return spec

    @classmethod
    def loads(cls, text: str) -> "ExperimentSpec":
        return cls.from_dict(loads_document(text), text)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read spec file: {exc.strerror}", str(path)) from None
        return cls.loads(text)


def _checked_configs(spec: ExperimentSpec, r: _Reader):
    try:
        return spec.run_configs()
    except (ValueError, TypeError) as exc:
        r.fail(("run",), str(exc))


# ------------------------------------------------------------------ running


def compute_reference(problem: ProblemInstance) -> Reference | None:
    """Analytic tree reference when it applies, else golden section, else none."""
    if not problem.is_consensus():
        return None
    try:
        return tree_quadratic_reference(problem)
    except ReferenceError:
        pass
    try:
        return solve_consensus_scalar(problem)
    except ReferenceError:
        return None


@dataclass(frozen=True)
class VariantResult:
    name: str
    trace: Trace = field(repr=False)
    report: MonitorReport = field(repr=False)
    files: tuple[str, ...] = ()


@dataclass(frozen=True)
class ExperimentResult:
    status: int
    variants: tuple[VariantResult, ...] = ()
    files: tuple[str, ...] = ()
    message: str = ""

    @property
    def flags(self) -> list[str]:
        return [f"{v.name}: {f}" for v in self.variants for f in v.report.flags]


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def run_experiment(spec: ExperimentSpec, out_dir=None, allow_violations: bool = False) -> ExperimentResult:
    """Reference, run, monitor and export every variant.

    Writes ``<variant>.trace.csv`` and ``<variant>.summary.json`` per variant
    and ``gaps.csv`` (``k`` against each variant's dual gap) to the output
    directory: ``out_dir``, else the spec's, else ``$ASYNCDUAL_OUT``, else
    the current directory.
    """
    directory = Path(out_dir or spec.outputs.directory or os.environ.get(OUTPUT_ENV) or ".")
    directory.mkdir(parents=True, exist_ok=True)
    stride = spec.outputs.stride
    results = []
    files = []
    for name, config in spec.run_configs():
        config = replace(config, reference=compute_reference(config.problem))
        try:
            trace, _ = run(config)
        except OracleError as exc:
            return ExperimentResult(EXIT_ORACLE, tuple(results), tuple(files), f"{name}: {exc}")
        report = monitor(trace)
        stem = _safe(name)
        csv_path = directory / f"{stem}.trace.csv"
        json_path = directory / f"{stem}.summary.json"
        trace.to_csv(csv_path, stride=stride)
        summary = {"variant": name, "experiment": spec.name, **trace.summary(), "monitor": report.to_dict()}
        json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        results.append(VariantResult(name, trace, report, (str(csv_path), str(json_path))))
        files += [str(csv_path), str(json_path)]
    gap_path = directory / "gaps.csv"
    _write_gaps(gap_path, results, stride)
    files.append(str(gap_path))
    result = ExperimentResult(EXIT_OK, tuple(results), tuple(files))
    if result.flags and not allow_violations:
        return replace(result, status=EXIT_VIOLATION, message="; ".join(result.flags))
    return result


def _write_gaps(path: Path, results: list[VariantResult], stride: int) -> None:
    K = results[0].trace.num_steps
    rows = list(range(0, K + 1, stride))
    if rows[-1] != K:
        rows.append(K)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k"] + [f"gap_{v.name}" for v in results])
        gaps = [v.trace.gap if v.trace.reference is not None else None for v in results]
        for k in rows:
            w.writerow([k] + ["" if g is None else repr(float(abs(g[k]))) for g in gaps])


# ------------------------------------------------------------------ generator


def generate_sect6_config(
    num_hinge: int,
    num_entropy: int,
    graph_kind: str = "path",
    seed: int = 0,
    *,
    iterations: int = 200_000,
    regularize: bool = True,
) -> ExperimentSpec:
    """Hinge and entropy agents with fixed parameter distributions.

    Hinge agents ``max(-w (x - a), 0)`` come first, with ``w ~ U[0.2, 1]``,
    ``a ~ U[2, 8]``, box ``[-50, 50]`` and ``0.005 x^2`` when ``regularize``.
    Entropy agents ``x log(p x)`` use ``p ~ U(1, 5)`` and box ``[1e-4, 50]``.
    Scheduling is the adaptive counter with ``ptilde ~ U(0.5, 1)``; variants
    are synchronous, asynchronous with a global clock and asynchronous with
    local clocks (the base).
    """
    if num_hinge < 0 or num_entropy < 0 or num_hinge + num_entropy < 1:
        raise ValueError("agent counts must be non-negative with at least one agent")
    if graph_kind not in ("path", "rgg"):
        raise ValueError(f"graph kind must be 'path' or 'rgg', got {graph_kind!r}")
    n = num_hinge + num_entropy
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(2,)))
    w = rng.uniform(0.2, 1.0, num_hinge)
    a = rng.uniform(2.0, 8.0, num_hinge)
    p = rng.uniform(1.0, 5.0, n)
    ptilde = rng.uniform(0.5, 1.0, n)
    rho = 0.005 if regularize else 0.0
    agents = [LocalProblem((Hinge(float(w[i]), float(a[i])),), box=(-50.0, 50.0), rho=rho) for i in range(num_hinge)]
    agents += [LocalProblem((Entropy(float(p[i])),), box=(1e-4, 50.0)) for i in range(num_hinge, n)]
    if graph_kind == "path" or n < 2:
        graph = GraphSpec("path", n)
    else:
        m = max(n - 1, round(RGG_DENSITY * n * (n - 1) / 2))
        graph = GraphSpec("rgg", n, radius=radius_for_edge_count(n, m, int(seed)), seed=int(seed))
    sched = AdaptiveCounter(tuple(float(v) for v in ptilde), 0.7, 10)
    return ExperimentSpec(
        name=f"sect6-{num_hinge}h{num_entropy}e-{graph_kind}-s{seed}",
        graph=graph,
        agents=tuple(agents),
        scheduler=sched,
        stepsize=ClosedFormShift(0.15, 0.51),
        iterations=iterations,
        global_clock=False,
        noise=NoNoise(),
        seed=int(seed),
        variants=(
            Variant("sync", scheduler=Synchronous(), global_clock=False),
            Variant("async-global", global_clock=True),
            Variant("async-local", global_clock=False),
        ),
        outputs=OutputSpec(channels=frozenset({"Q", "gap", "residual"}), stride=100),
    )
