"""Asynchronous dual decomposition with local stepsizes.

Agents hold local convex costs and are coupled by linear constraints on the
edges of a communication graph. The dual is maximized by block supergradient
ascent in which only the blocks selected by an activation mask move, each
with its own stepsize clock.
"""

from __future__ import annotations

from asyncdual.dual import (
    ClosedFormShift,
    Constant,
    DualState,
    LogDecay,
    OrbitError,
    PowerDecay,
    async_step,
    primal_average,
    stepsize_next,
    supergradient,
    sync_step,
)
from asyncdual.estimator import AsyncDualDecomposition
from asyncdual.experiment import ExperimentSpec, Variant, generate_sect6_config, run_experiment
from asyncdual.monitors import consensus_spread, monitor, rate_estimate
from asyncdual.noise import Biased, NoNoise, ZeroMean, sample_error
from asyncdual.oracles import (
    OracleError,
    solve_entropy,
    solve_hinge,
    solve_quadratic,
    solve_scalar_fallback,
)
from asyncdual.problem import (
    AffineLinear,
    Entropy,
    Hinge,
    LocalProblem,
    ProblemInstance,
    Quadratic,
    SelectionMap,
    check_constraint_rank,
    consensus_problem,
    constraint_residual,
    evaluate_dual,
    evaluate_lagrangian,
    local_linear_coefficient,
    quadratic_consensus,
    single_agent,
)
from asyncdual.reference import (
    Reference,
    grid_certify,
    solve_consensus_scalar,
    tree_quadratic_dual_optimum,
    tree_quadratic_reference,
)
from asyncdual.runtime import RunConfig, Trace, run
from asyncdual.scheduler import (
    AdaptiveCounter,
    Cyclic,
    IidBernoulli,
    PersistentlyExciting,
    ScriptedMask,
    Synchronous,
    empirical_rate,
    next_mask,
)
from asyncdual.topology import Topology, build_topology, path_graph, random_geometric_graph

__version__ = "0.1.0"

__all__ = [
    "AdaptiveCounter",
    "AffineLinear",
    "AsyncDualDecomposition",
    "Biased",
    "ClosedFormShift",
    "Constant",
    "Cyclic",
    "DualState",
    "Entropy",
    "ExperimentSpec",
    "Hinge",
    "IidBernoulli",
    "LocalProblem",
    "LogDecay",
    "NoNoise",
    "OracleError",
    "OrbitError",
    "PersistentlyExciting",
    "PowerDecay",
    "ProblemInstance",
    "Quadratic",
    "Reference",
    "RunConfig",
    "ScriptedMask",
    "SelectionMap",
    "Synchronous",
    "Topology",
    "Trace",
    "Variant",
    "ZeroMean",
    "async_step",
    "build_topology",
    "check_constraint_rank",
    "consensus_problem",
    "consensus_spread",
    "constraint_residual",
    "empirical_rate",
    "evaluate_dual",
    "evaluate_lagrangian",
    "generate_sect6_config",
    "grid_certify",
    "local_linear_coefficient",
    "monitor",
    "next_mask",
    "path_graph",
    "primal_average",
    "quadratic_consensus",
    "random_geometric_graph",
    "rate_estimate",
    "run",
    "run_experiment",
    "sample_error",
    "single_agent",
    "solve_consensus_scalar",
    "solve_entropy",
    "solve_hinge",
    "solve_quadratic",
    "solve_scalar_fallback",
    "stepsize_next",
    "supergradient",
    "sync_step",
    "tree_quadratic_dual_optimum",
    "tree_quadratic_reference",
]
