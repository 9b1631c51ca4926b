"""Input checks shared by the estimator facade and the stepwise API."""

from __future__ import annotations

import numpy as np

from asyncdual.problem import ProblemInstance

__all__ = ["check_problem", "check_dual_vector", "check_mask", "check_positive", "check_iterations"]


def check_problem(problem) -> ProblemInstance:
    if not isinstance(problem, ProblemInstance):
        raise TypeError(f"expected a ProblemInstance, got {type(problem).__name__}")
    return problem


def check_dual_vector(problem: ProblemInstance, lam, name: str = "lambda") -> np.ndarray:
    """Finite float vector of the problem's dual dimension."""
    arr = np.asarray(lam, dtype=float).reshape(-1)
    if arr.shape[0] != problem.n_bar:
        raise ValueError(f"{name} has dimension {arr.shape[0]}, expected {problem.n_bar}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_mask(mask, num_edges: int) -> np.ndarray:
    """0/1 vector of length ``num_edges`` as uint8."""
    arr = np.asarray(mask).reshape(-1)
    if arr.shape[0] != num_edges:
        raise ValueError(f"mask has length {arr.shape[0]}, expected {num_edges}")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("mask entries must be 0 or 1")
    return arr.astype(np.uint8)


def check_positive(name: str, value) -> float:
    value = float(value)
    if not value > 0 or not np.isfinite(value):
        raise ValueError(f"{name} must be positive and finite, got {value}")
    return value


def check_iterations(value) -> int:
    if isinstance(value, bool) or int(value) != value or int(value) < 1:
        raise ValueError(f"iterations must be a positive integer, got {value!r}")
    return int(value)
