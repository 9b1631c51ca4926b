from __future__ import annotations

import math

import numpy as np
import pytest

from asyncdual import (
    Entropy,
    Hinge,
    LocalProblem,
    Quadratic,
    build_topology,
    consensus_problem,
    evaluate_dual,
    grid_certify,
    quadratic_consensus,
    single_agent,
    solve_consensus_scalar,
    supergradient,
    tree_quadratic_dual_optimum,
    tree_quadratic_reference,
)
from asyncdual.reference import ReferenceError


def random_tree(rng, n):
    edges = [(int(rng.integers(1, v)), v) for v in range(2, n + 1)]
    perm = rng.permutation(n) + 1
    return build_topology(n, [(perm[i - 1], perm[j - 1]) for i, j in edges])


def test_single_agent_reference():
    p = single_agent(LocalProblem((Quadratic(2.0, 3.0),), box=(0.0, 1.0)))
    ref = solve_consensus_scalar(p)
    assert ref.x_star[0] == pytest.approx(1.0) and ref.F_star == pytest.approx(1.5)


def test_boxed_quadratic_reference():
    p = quadratic_consensus([0.0, 3.0, 6.0], box=(4.0, 10.0))
    ref = solve_consensus_scalar(p)
    assert ref.x_star[0] == pytest.approx(4.0, abs=1e-12)


def test_entropy_consensus_reference():
    # sum of x log(p_i x): stationarity sum(log p_i x + 1) = 0
    ps = [1.0, 2.0, 4.0]
    p = consensus_problem(build_topology(3, [(1, 2), (2, 3)]), [LocalProblem((Entropy(v),), box=(1e-3, 10.0)) for v in ps])
    z = math.exp(-1.0 - sum(map(math.log, ps)) / 3)
    assert solve_consensus_scalar(p).x_star[0] == pytest.approx(z, abs=1e-11)


def test_strong_duality_on_trees():
    rng = np.random.default_rng(1)
    for n in range(2, 9):
        topo = random_tree(rng, n)
        p = quadratic_consensus(rng.uniform(-5, 5, n).tolist(), rng.uniform(0.5, 2.0, n).tolist(), topology=topo)
        ref = tree_quadratic_reference(p)
        assert np.abs(supergradient(p, ref.lambda_star).g).max() <= 1e-10
        assert evaluate_dual(p, ref.lambda_star)[0] == pytest.approx(ref.F_star, abs=1e-10)
        assert solve_consensus_scalar(p).F_star == pytest.approx(ref.F_star, abs=1e-10)


@pytest.mark.parametrize(
    "problem",
    [
        quadratic_consensus([0.0, 1.0, 2.0], topology=build_topology(3, [(1, 2), (1, 3), (2, 3)])),
        quadratic_consensus([0.0, 1.0, 2.0, 3.0], topology=build_topology(4, [(1, 2), (3, 4)])),
        quadratic_consensus([0.0, 3.0, 6.0], box=(4.0, 10.0)),
        consensus_problem(build_topology(2, [(1, 2)]), [LocalProblem((Hinge(1.0, 2.0),)), LocalProblem((Quadratic(0.0),))]),
    ],
)
def test_tree_dual_preconditions(problem):
    with pytest.raises(ReferenceError):
        tree_quadratic_dual_optimum(problem)


def test_grid_certify_vacuous_and_limits():
    assert grid_certify(single_agent(LocalProblem((Quadratic(0.0),))), np.zeros(0), 1.0, 0.1)
    p = quadratic_consensus([0.0, 1.0, 2.0, 3.0, 4.0])
    with pytest.raises(ReferenceError):
        grid_certify(p, np.zeros(4), 1.0, 0.1)


def test_reference_to_dict():
    ref = tree_quadratic_reference(quadratic_consensus([0.0, 3.0, 6.0]))
    d = ref.to_dict()
    assert d["F_star"] == pytest.approx(9.0) and d["Q_star"] == pytest.approx(9.0)
    assert len(d["lambda_star"]) == 2
