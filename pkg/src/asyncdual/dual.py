"""Dual state, local stepsize dynamics and the block supergradient updates.

The transition kernels (:func:`apply_async`, :func:`apply_sync`,
:func:`next_alpha`) are compiled and shared with the simulation loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from asyncdual.oracles import raise_for_status
from asyncdual.problem import ProblemInstance, dual_point, _check_dual

__all__ = [
    "PowerDecay",
    "LogDecay",
    "ClosedFormShift",
    "Constant",
    "StepsizeRule",
    "OrbitError",
    "DualState",
    "SupergradientVector",
    "supergradient",
    "sync_step",
    "async_step",
    "stepsize_next",
    "primal_average",
    "weighted_average",
]

SS_POWER, SS_LOG, SS_SHIFT, SS_CONST = 0, 1, 2, 3
ORBIT_RTOL = 1e-9


class OrbitError(ValueError):
    """A stepsize is not an element of its rule's sequence."""


@dataclass(frozen=True)
class PowerDecay:
    """``alpha_m = c / (1 + m)^q`` with ``q`` in (1/2, 1]."""

    c: float
    q: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if not 0.5 < self.q <= 1.0:
            raise ValueError(f"q must lie in (1/2, 1], got {self.q}")

    def code(self):
        return SS_POWER, float(self.c), float(self.q)


@dataclass(frozen=True)
class LogDecay:
    """``alpha_m = c / ((m + 2) log(m + 2))``."""

    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")

    def code(self):
        return SS_LOG, float(self.c), 0.0


@dataclass(frozen=True)
class ClosedFormShift:
    """The map ``A(a) = c0 ((a/c0)^(-1/q) + 1)^(-q)``.

    Iterating from ``c0`` walks the sequence ``c0 (1 + m)^(-q)``.
    """

    c0: float
    q: float

    def __post_init__(self):
        if not self.c0 > 0:
            raise ValueError(f"c0 must be positive, got {self.c0}")
        if not 0.5 < self.q <= 1.0:
            raise ValueError(f"q must lie in (1/2, 1], got {self.q}")

    def code(self):
        return SS_SHIFT, float(self.c0), float(self.q)


@dataclass(frozen=True)
class Constant:
    """Fixed stepsize. Not square summable; runs using it are flagged."""

    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")

    def code(self):
        return SS_CONST, float(self.c), 0.0


StepsizeRule = PowerDecay | LogDecay | ClosedFormShift | Constant


def is_square_summable(rule: StepsizeRule) -> bool:
    return not isinstance(rule, Constant)


# ------------------------------------------------------------ kernels


@nb.njit(cache=True)
def stepsize_element(kind, p1, p2, m):
    if kind == SS_POWER or kind == SS_SHIFT:
        return p1 / (1.0 + m) ** p2
    if kind == SS_LOG:
        return p1 / ((m + 2.0) * math.log(m + 2.0))
    return p1


@nb.njit(cache=True)
def _close(a, b):
    return abs(a - b) <= ORBIT_RTOL * abs(b)


@nb.njit(cache=True)
def stepsize_index(kind, p1, p2, alpha):
    """Position of ``alpha`` in the rule's sequence; (m, on_orbit)."""
    if kind == SS_CONST:
        return 0.0, _close(alpha, p1)
    if kind == SS_LOG:
        lo = 0.0
        hi = 4.0e18
        if alpha >= stepsize_element(kind, p1, p2, 0.0):
            return 0.0, _close(alpha, stepsize_element(kind, p1, p2, 0.0))
        # smallest m with element(m) <= alpha
        while hi - lo > 1.0:
            mid = math.floor(0.5 * (lo + hi))
            if stepsize_element(kind, p1, p2, mid) <= alpha:
                hi = mid
            else:
                lo = mid
        if _close(alpha, stepsize_element(kind, p1, p2, hi)):
            return hi, True
        return lo, _close(alpha, stepsize_element(kind, p1, p2, lo))
    if alpha <= 0.0:
        return 0.0, False
    m = np.rint((p1 / alpha) ** (1.0 / p2) - 1.0)
    if m < 0.0:
        return 0.0, False
    return m, _close(alpha, stepsize_element(kind, p1, p2, m))


@nb.njit(cache=True)
def next_alpha(kind, p1, p2, alpha):
    """``A(alpha)``: the element after ``alpha``; (value, on_orbit)."""
    m, ok = stepsize_index(kind, p1, p2, alpha)
    if kind == SS_SHIFT:
        t = (alpha / p1) ** (-1.0 / p2)
        # on the orbit t = 1 + m exactly; snap so pow round-off cannot accumulate
        if abs(t - np.rint(t)) <= 1e-7 * t:
            t = np.rint(t)
        return p1 * (t + 1.0) ** (-p2), ok
    if kind == SS_CONST:
        return p1, ok
    return stepsize_element(kind, p1, p2, m + 1.0), ok


@nb.njit(cache=True)
def apply_async(lam, alpha, gamma, g, e, mask, edge_ptr, rkind, rp1, rp2):
    """In-place masked block update. Returns the first off-orbit edge or -1."""
    for q in range(mask.shape[0]):
        if mask[q]:
            a = alpha[q]
            for r in range(edge_ptr[q], edge_ptr[q + 1]):
                lam[r] = lam[r] + a * (g[r] + e[r])
            a_next, ok = next_alpha(rkind[q], rp1[q], rp2[q], a)
            if not ok:
                return q
            alpha[q] = a_next
            gamma[q] += 1
    return -1


@nb.njit(cache=True)
def apply_sync(lam, g, e, a):
    for r in range(lam.shape[0]):
        lam[r] = lam[r] + a * (g[r] + e[r])


# ------------------------------------------------------------ state


def rule_arrays(rules, num_edges: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-edge ``(kind, p1, p2)`` arrays from one rule or a sequence of rules."""
    if not isinstance(rules, (list, tuple)):
        rules = [rules] * num_edges
    if len(rules) != num_edges:
        raise ValueError(f"{len(rules)} stepsize rules for {num_edges} edges")
    codes = [r.code() for r in rules]
    kind = np.array([c[0] for c in codes], dtype=np.int64)
    p1 = np.array([c[1] for c in codes], dtype=float)
    p2 = np.array([c[2] for c in codes], dtype=float)
    return kind, p1, p2


@dataclass(frozen=True)
class DualState:
    """Dual blocks, per-edge stepsizes and update counters at global step ``k``."""

    lam: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    k: int = 0

    def __post_init__(self):
        if np.any(self.alpha <= 0):
            raise ValueError("stepsizes must be strictly positive")

    @classmethod
    def initial(cls, problem: ProblemInstance, rules, lam0=None) -> "DualState":
        """``lam0`` (zero by default), first sequence element per edge, zero counters."""
        ne = problem.topology.num_edges
        kind, p1, p2 = rule_arrays(rules, ne)
        alpha = np.array([stepsize_element(kind[q], p1[q], p2[q], 0.0) for q in range(ne)])
        lam = np.zeros(problem.n_bar) if lam0 is None else _check_dual(problem, lam0).copy()
        return cls(lam, alpha, np.zeros(ne, dtype=np.int64), 0)

    def block(self, problem: ProblemInstance, edge_index: int) -> np.ndarray:
        return self.lam[problem.edge_slice(edge_index)]


@dataclass(frozen=True)
class SupergradientVector:
    """``g = E(x*)`` at the witness ``x*``; ``value`` is ``Q`` at the same point."""

    g: np.ndarray
    witness: np.ndarray
    value: float

    def block(self, problem: ProblemInstance, edge_index: int) -> np.ndarray:
        return self.g[problem.edge_slice(edge_index)]


def supergradient(problem: ProblemInstance, lam) -> SupergradientVector:
    lam = _check_dual(problem, lam)
    n = problem.n
    coef, x, values, g = np.empty(n), np.empty(n), np.empty(n), np.empty(problem.n_bar)
    q, status, bad, _ = dual_point(*problem.csr, *problem.compiled, lam, coef, x, values, g)
    raise_for_status(status, agent=int(problem.coord_agent[bad]) if status else None)
    return SupergradientVector(g, x, float(q))


def _errors(problem: ProblemInstance, e) -> np.ndarray:
    if e is None:
        return np.zeros(problem.n_bar)
    e = np.asarray(e, dtype=float).reshape(-1)
    if e.shape[0] != problem.n_bar:
        raise ValueError(f"error vector has dimension {e.shape[0]}, expected {problem.n_bar}")
    return e


def sync_step(problem: ProblemInstance, state: DualState, alpha: float, error=None) -> DualState:
    """``lam+ = lam + alpha (g(lam) + e)`` on every block.

    The per-edge stepsizes in ``state`` are left as they are; every counter
    is incremented.
    """
    if not alpha > 0:
        raise ValueError(f"stepsize must be positive, got {alpha}")
    e = _errors(problem, error)
    sg = supergradient(problem, state.lam)
    lam = state.lam.copy()
    apply_sync(lam, sg.g, e, float(alpha))
    return DualState(lam, state.alpha.copy(), state.gamma + 1, state.k + 1)


def async_step(problem: ProblemInstance, state: DualState, mask, errors=None, *, rules) -> DualState:
    """One step of the asynchronous system with local stepsize clocks.

    Active blocks move along the supergradient evaluated once at the current
    dual point, advance their stepsize with ``A`` and bump their counter;
    inactive blocks are untouched. ``k`` always advances.

    Raises:
        ValueError: mask length mismatch.
        OrbitError: an active stepsize is not on its rule's sequence.
    """
    ne = problem.topology.num_edges
    mask = np.asarray(mask).astype(np.uint8).reshape(-1)
    if mask.shape[0] != ne:
        raise ValueError(f"mask has length {mask.shape[0]}, expected {ne}")
    e = _errors(problem, errors)
    kind, p1, p2 = rule_arrays(rules, ne)
    lam, alpha, gamma = state.lam.copy(), state.alpha.copy(), state.gamma.copy()
    if mask.any():
        sg = supergradient(problem, state.lam)
        bad = apply_async(lam, alpha, gamma, sg.g, e, mask, problem.edge_ptr, kind, p1, p2)
        if bad >= 0:
            raise OrbitError(f"stepsize {state.alpha[bad]!r} of edge {bad + 1} is off its rule's orbit")
    return DualState(lam, alpha, gamma, state.k + 1)


def stepsize_next(rule: StepsizeRule, alpha: float) -> float:
    """Next element of the sequence after ``alpha``.

    Raises:
        OrbitError: ``alpha`` is not an element of the sequence (relative 1e-9).
    """
    if not alpha > 0:
        raise ValueError(f"stepsize must be positive, got {alpha}")
    value, ok = next_alpha(*rule.code(), float(alpha))
    if not ok:
        raise OrbitError(f"{alpha!r} is not on the orbit of {rule}")
    return float(value)


def weighted_average(witnesses, weights) -> np.ndarray:
    """``sum_m w_m x_m / sum_m w_m``."""
    witnesses = np.atleast_2d(np.asarray(witnesses, dtype=float))
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if witnesses.shape[0] == 0 or weights.shape[0] != witnesses.shape[0]:
        raise ValueError("need one weight per witness and at least one witness")
    total = weights.sum()
    if not total > 0:
        raise ValueError("no update steps to average over")
    return (weights @ witnesses) / total


def primal_average(trace) -> np.ndarray:
    """Ergodic primal estimate from a trace.

    Each witness is weighted by the mean stepsize of the blocks it updated;
    idle steps get weight zero. The trace must carry the witness channel.
    """
    if getattr(trace, "witness", None) is None:
        raise ValueError("trace has no witness channel")
    return weighted_average(trace.witness, trace.avg_weight)
