"""Independent ground truth for gap metrics and certificates.

The centralized solver evaluates costs through the atoms' own ``value``
methods in plain Python, so it shares no code path with the compiled dual
oracles it is used to check.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from asyncdual.problem import AffineLinear, ProblemInstance, Quadratic, evaluate_dual, evaluate_dual_batch

__all__ = [
    "Reference",
    "ReferenceError",
    "solve_consensus_scalar",
    "tree_quadratic_dual_optimum",
    "tree_quadratic_reference",
    "grid_certify",
]

GOLDEN_TOL = 1e-12
MAX_GRID_POINTS = 10**7
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class ReferenceError(ValueError):
    """The requested reference cannot be computed for this problem."""


@dataclass(frozen=True)
class Reference:
    """Optimal values of a problem. ``Q_star`` equals ``F_star`` under Slater."""

    F_star: float
    x_star: np.ndarray = field(repr=False)
    lambda_star: np.ndarray | None = field(default=None, repr=False)
    Q_star: float | None = None
    method: str = ""

    def __post_init__(self):
        if self.Q_star is None:
            object.__setattr__(self, "Q_star", float(self.F_star))

    def to_dict(self) -> dict:
        return {
            "F_star": float(self.F_star),
            "Q_star": float(self.Q_star),
            "x_star": [float(v) for v in self.x_star],
            "lambda_star": None if self.lambda_star is None else [float(v) for v in self.lambda_star],
            "method": self.method,
        }


def _require_consensus(problem: ProblemInstance) -> None:
    if not problem.is_consensus():
        raise ReferenceError("problem is not a scalar identity-selection consensus problem")


def _box_intersection(problem: ProblemInstance) -> tuple[float, float]:
    lo = max(lp.box[0][0] for lp in problem.locals)
    hi = min(lp.box[0][1] for lp in problem.locals)
    if lo > hi:
        raise ReferenceError(f"box intersection is empty: [{lo}, {hi}]")
    return lo, hi


def _bracket(phi, lo: float, hi: float) -> tuple[float, float]:
    """Finite interval containing a minimizer of the convex ``phi``."""
    if math.isfinite(lo) and math.isfinite(hi):
        return lo, hi
    if math.isfinite(lo):
        a, step = lo, 1.0
        while phi(a + step) < phi(a + step / 2):
            step *= 2.0
            if step > 1e15:
                raise ReferenceError("sum of costs is unbounded below on the box")
        return a, a + step
    if math.isfinite(hi):
        b, step = hi, 1.0
        while phi(b - step) < phi(b - step / 2):
            step *= 2.0
            if step > 1e15:
                raise ReferenceError("sum of costs is unbounded below on the box")
        return b - step, b
    step = 1.0
    while phi(-step) < phi(-step / 2) or phi(step) < phi(step / 2):
        step *= 2.0
        if step > 1e15:
            raise ReferenceError("sum of costs is unbounded below")
    return -step, step


def _golden(phi, a: float, b: float, tol: float) -> float:
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = phi(c), phi(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = phi(d)
    # the endpoints may beat the interior probes on a boundary optimum
    best = min((a, b, 0.5 * (a + b)), key=lambda z: (phi(z), z))
    return best


def _polish(dphi, a: float, b: float, z: float, lo: float, hi: float, tol: float) -> float:
    """Smallest ``z`` with right slope ``>= 0``, searched around the golden estimate.

    Function values stop discriminating about ``sqrt(eps)`` away from a smooth
    minimum, so the last digits come from the sign of the slope instead.
    """
    width = max(1e-6, 1e-6 * abs(z))
    left, right = max(lo, z - width), min(hi, z + width)
    # widen until the slope sign changes across the window (flat stretches)
    while left > a and dphi(left) >= 0:
        left = max(a, left - 2.0 * (right - left))
    while right < b and dphi(right) < 0:
        right = min(b, right + 2.0 * (right - left))
    if dphi(left) >= 0:
        return left
    if dphi(right) < 0:
        return right
    while right - left > tol:
        mid = 0.5 * (left + right)
        if mid <= left or mid >= right:
            break
        if dphi(mid) >= 0:
            right = mid
        else:
            left = mid
    return right


def solve_consensus_scalar(problem: ProblemInstance, tol: float = GOLDEN_TOL) -> Reference:
    """Minimize ``sum_i F_i(z)`` over the common box by golden-section search.

    Golden section localizes the minimizer; bisection on the sign of the
    right slope then fixes it to ``tol``. On a flat optimal segment the
    smallest minimizer is returned.

    Raises:
        ReferenceError: not a scalar consensus problem, or empty box intersection.
    """
    _require_consensus(problem)
    lo, hi = _box_intersection(problem)
    locals_ = problem.locals

    def phi(z: float) -> float:
        return math.fsum(lp.cost(z) for lp in locals_)

    def dphi(z: float) -> float:
        return math.fsum(
            [atom.right_slope(z) for lp in locals_ for atom in lp.atoms] + [2.0 * lp.rho * z for lp in locals_]
        )

    if lo == hi:
        z = lo
    else:
        a, b = _bracket(phi, lo, hi)
        z = _golden(phi, a, b, tol)
        z = _polish(dphi, a, b, z, lo, hi, tol)
    n = problem.n
    return Reference(F_star=phi(z), x_star=np.full(n, z), method="golden-section")


def _quadratic_data(problem: ProblemInstance) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per agent ``(W, WA, l)`` with ``F_i(z) = sum (w/2)(z - a)^2 + rho z^2 + l z``."""
    na = problem.topology.num_agents
    W, WA, L = np.zeros(na), np.zeros(na), np.zeros(na)
    for i, lp in enumerate(problem.locals):
        for atom in lp.atoms:
            if isinstance(atom, Quadratic):
                W[i] += atom.weight
                WA[i] += atom.weight * atom.center
            elif isinstance(atom, AffineLinear):
                L[i] += atom.coef
            else:
                raise ReferenceError(f"agent {i + 1} has a non-quadratic atom {atom}")
        W[i] += 2.0 * lp.rho
    return W, WA, L


def tree_quadratic_dual_optimum(problem: ProblemInstance) -> np.ndarray:
    """Analytic dual optimum of a quadratic consensus problem on a tree.

    Consensus gives ``z*``; stationarity fixes every agent's coefficient
    ``c_i = -F_i'(z*)``; the edge multipliers then follow by peeling leaves.

    Raises:
        ReferenceError: cycle, non-quadratic cost, zero curvature or active box.
    """
    _require_consensus(problem)
    topo = problem.topology
    if not topo.connected:
        raise ReferenceError("graph is disconnected")
    if topo.num_edges != topo.num_agents - 1:
        raise ReferenceError("graph has a cycle")
    W, WA, L = _quadratic_data(problem)
    if not W.sum() > 0:
        raise ReferenceError("total curvature is zero")
    z = (WA.sum() - L.sum()) / W.sum()
    for i, lp in enumerate(problem.locals):
        lo, hi = lp.box[0]
        if not lo < z < hi:
            raise ReferenceError(f"box of agent {i + 1} is active at the optimum z* = {z}")
    resid = -(W * z - WA + L)
    lam = np.zeros(topo.num_edges)
    edges = topo.oriented_edges
    incident: list[list[int]] = [[] for _ in range(topo.num_agents)]
    for q, (i, j) in enumerate(edges):
        incident[i - 1].append(q)
        incident[j - 1].append(q)
    degree = [len(e) for e in incident]
    solved = np.zeros(topo.num_edges, dtype=bool)
    leaves = deque(i for i in range(topo.num_agents) if degree[i] == 1)
    while leaves:
        v = leaves.popleft()
        if degree[v] != 1:
            continue
        q = next(e for e in incident[v] if not solved[e])
        i, j = edges[q][0] - 1, edges[q][1] - 1
        # agent i sees +lam on its edge (i, j); agent j sees -lam
        lam[q] = resid[v] if v == i else -resid[v]
        other = j if v == i else i
        resid[other] -= lam[q] if other == i else -lam[q]
        solved[q] = True
        degree[v] -= 1
        degree[other] -= 1
        if degree[other] == 1:
            leaves.append(other)
    return lam


def tree_quadratic_reference(problem: ProblemInstance) -> Reference:
    """:func:`solve_consensus_scalar` plus the analytic ``lambda*`` and ``Q(lambda*)``."""
    lam = tree_quadratic_dual_optimum(problem)
    ref = solve_consensus_scalar(problem)
    q_star, _ = evaluate_dual(problem, lam)
    return Reference(ref.F_star, ref.x_star, lam, q_star, method="tree-quadratic")


def grid_certify(problem: ProblemInstance, lam, radius: float, step: float, tol: float = 1e-9) -> bool:
    """True iff ``Q(lam)`` is at least every grid value minus ``tol``.

    The grid is ``lam + {-radius, ..., radius}^n_bar`` with spacing ``step``.

    Raises:
        ReferenceError: dual dimension above 3 or more than 1e7 grid points.
    """
    lam = np.asarray(lam, dtype=float).reshape(-1)
    nb_ = problem.n_bar
    if nb_ == 0:
        return True
    if nb_ > 3:
        raise ReferenceError(f"grid certification needs dual dimension <= 3, got {nb_}")
    if not (radius >= 0 and step > 0):
        raise ReferenceError("radius must be non-negative and step positive")
    half = int(round(radius / step))
    points = (2 * half + 1) ** nb_
    if points > MAX_GRID_POINTS:
        raise ReferenceError(f"grid has {points} points, limit is {MAX_GRID_POINTS}")
    axis = np.arange(-half, half + 1) * step
    mesh = np.stack(np.meshgrid(*([axis] * nb_), indexing="ij"), axis=-1).reshape(-1, nb_)
    values = evaluate_dual_batch(problem, lam[None, :] + mesh)
    q0 = evaluate_dual_batch(problem, lam[None, :])[0]
    return bool(q0 >= values.max() - tol)
