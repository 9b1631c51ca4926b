"""Exact minimizers of ``F_i(x) + <c, x>`` over a box, one coordinate at a time.

The compiled kernels here are shared by the public solvers below, by
:func:`asyncdual.problem.evaluate_dual` and by the simulation loop, so every
code path minimizes the local Lagrangians with the same arithmetic.

Atoms are encoded as ``(kind, p1, p2, p3)`` rows:

=========  ======================  ==================================
kind       parameters              cost
=========  ======================  ==================================
QUADRATIC  weight, center          ``(w/2)(x - a)^2``
HINGE      slope, knee, offset     ``max(-w(x - a) + b, b)``
ENTROPY    scale                   ``x log(p x)``
LINEAR     coefficient             ``c x``
=========  ======================  ==================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

__all__ = [
    "OracleResult",
    "OracleError",
    "UnboundedBelowError",
    "ConvergenceError",
    "solve_quadratic",
    "solve_hinge",
    "solve_entropy",
    "solve_scalar_fallback",
]

QUADRATIC, HINGE, ENTROPY, LINEAR = 0, 1, 2, 3

# coordinate families with a closed-form solver
FAM_LINEAR, FAM_QUADRATIC, FAM_HINGE, FAM_ENTROPY, FAM_GENERIC = 0, 1, 2, 3, 4

# columns of the per-coordinate parameter table
C_FAM, C_QW, C_QA, C_HW, C_HA, C_HB, C_EP, C_LIN, C_RHO, C_LO, C_HI = range(11)
NUM_COLS = 11

OK, UNBOUNDED, NO_CONVERGENCE, OVERFLOW = 0, 1, 2, 3

MAX_BISECTION_ITERS = 200
BRACKET_LIMIT = 1e15

_STATUS_TEXT = {
    UNBOUNDED: "local problem is unbounded below",
    NO_CONVERGENCE: f"bisection did not reach tolerance in {MAX_BISECTION_ITERS} iterations",
    OVERFLOW: "stationary point overflows; bound the box",
}


class OracleError(RuntimeError):
    """A local minimization failed. ``agent``/``step`` are set when known."""

    def __init__(self, message: str, agent: int | None = None, step: int | None = None):
        self.agent = agent
        self.step = step
        where = []
        if step is not None:
            where.append(f"step {step}")
        if agent is not None:
            where.append(f"agent {agent}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class UnboundedBelowError(OracleError):
    pass


class ConvergenceError(OracleError):
    pass


def raise_for_status(status: int, agent: int | None = None, step: int | None = None) -> None:
    if status == OK:
        return
    cls = UnboundedBelowError if status == UNBOUNDED else ConvergenceError if status == NO_CONVERGENCE else OracleError
    raise cls(_STATUS_TEXT.get(status, f"oracle status {status}"), agent=agent, step=step)


@dataclass(frozen=True)
class OracleResult:
    """Minimizer, optimal value and whether a tie was broken."""

    minimizer: float | np.ndarray
    value: float
    tie_broken: bool = False


# ---------------------------------------------------------------- kernels


@nb.njit(cache=True)
def _clamp(x, lo, hi):
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


@nb.njit(cache=True)
def quadratic_argmin(w, a, lo, hi, c, rho):
    return _clamp((w * a - c) / (w + 2.0 * rho), lo, hi)


@nb.njit(cache=True)
def linear_argmin(lo, hi, c):
    """Minimize ``c x`` on ``[lo, hi]``; returns (x, status, tie)."""
    if c > 0.0:
        if lo == -np.inf:
            return lo, UNBOUNDED, False
        return lo, OK, False
    if c < 0.0:
        if hi == np.inf:
            return hi, UNBOUNDED, False
        return hi, OK, False
    return _clamp(0.0, lo, hi), OK, lo < hi


@nb.njit(cache=True)
def hinge_argmin(w, a, lo, hi, c, rho):
    """Minimize ``max(-w(x-a), 0) + rho x^2 + c x`` on ``[lo, hi]``.

    Returns (x, status, tie). Flat minimizer sets resolve to the knee.
    """
    if rho > 0.0:
        right = -c / (2.0 * rho)
        left = (w - c) / (2.0 * rho)
        if right >= a:
            x = right
        elif left <= a:
            x = left
        else:
            x = a
        return _clamp(x, lo, hi), OK, False
    if c > w:
        if lo == -np.inf:
            return lo, UNBOUNDED, False
        return lo, OK, False
    if c < 0.0:
        if hi == np.inf:
            return hi, UNBOUNDED, False
        return hi, OK, False
    x = _clamp(a, lo, hi)
    if c == 0.0:
        # flat on [a, inf)
        return x, OK, hi > max(a, lo)
    if c == w:
        # flat on (-inf, a]
        return x, OK, lo < min(a, hi)
    return x, OK, False


@nb.njit(cache=True)
def entropy_argmin(p, lo, hi, c):
    """Minimize ``x log(p x) + c x``; stationary point ``exp(-(1+c))/p``."""
    x = math.exp(-(1.0 + c)) / p
    if x == np.inf and hi == np.inf:
        return x, OVERFLOW
    return _clamp(x, lo, hi), OK


@nb.njit(cache=True)
def atoms_value(kind, par, k0, k1, x):
    total = 0.0
    for k in range(k0, k1):
        t = kind[k]
        if t == QUADRATIC:
            d = x - par[k, 1]
            total += 0.5 * par[k, 0] * d * d
        elif t == HINGE:
            total += max(-par[k, 0] * (x - par[k, 1]) + par[k, 2], par[k, 2])
        elif t == ENTROPY:
            total += x * math.log(par[k, 0] * x)
        else:
            total += par[k, 0] * x
    return total


@nb.njit(cache=True)
def atoms_right_derivative(kind, par, k0, k1, x):
    total = 0.0
    for k in range(k0, k1):
        t = kind[k]
        if t == QUADRATIC:
            total += par[k, 0] * (x - par[k, 1])
        elif t == HINGE:
            if x < par[k, 1]:
                total -= par[k, 0]
        elif t == ENTROPY:
            total += math.log(par[k, 0] * x) + 1.0
        else:
            total += par[k, 0]
    return total


@nb.njit(cache=True)
def _strong_convexity(kind, par, k0, k1, rho):
    m = 2.0 * rho
    for k in range(k0, k1):
        if kind[k] == QUADRATIC:
            m += par[k, 0]
    return m


@nb.njit(cache=True)
def fallback_argmin(kind, par, k0, k1, rho, lo, hi, c):
    """Bisection on the right derivative of a convex atom sum plus ``rho x^2 + c x``.

    Finds the smallest point whose right derivative is non-negative, then
    compares it with the bracket ends and any hinge knees inside the final
    bracket. Returns (x, status, tie, iterations).
    """
    L = lo
    R = hi
    if L == -np.inf or R == np.inf:
        x0 = _clamp(0.0, lo, hi)
        d0 = atoms_right_derivative(kind, par, k0, k1, x0) + 2.0 * rho * x0 + c
        m = _strong_convexity(kind, par, k0, k1, rho)
        if m > 0.0:
            r = abs(d0) / m + 1.0
            L = max(lo, x0 - r)
            R = min(hi, x0 + r)
        else:
            s = 1.0
            if R == np.inf:
                while True:
                    R = x0 + s
                    if atoms_right_derivative(kind, par, k0, k1, R) + 2.0 * rho * R + c >= 0.0:
                        break
                    s *= 2.0
                    if s > BRACKET_LIMIT:
                        return R, UNBOUNDED, False, 0
            s = 1.0
            if L == -np.inf:
                while True:
                    L = x0 - s
                    if atoms_right_derivative(kind, par, k0, k1, L) + 2.0 * rho * L + c < 0.0:
                        break
                    s *= 2.0
                    if s > BRACKET_LIMIT:
                        return L, UNBOUNDED, False, 0

    l = L
    r = R
    iters = 0
    if atoms_right_derivative(kind, par, k0, k1, l) + 2.0 * rho * l + c >= 0.0:
        r = l
    else:
        while True:
            tol = max(1e-12, 8.9e-16 * max(abs(l), abs(r)))
            if r - l <= tol:
                break
            if iters >= MAX_BISECTION_ITERS:
                return r, NO_CONVERGENCE, False, iters
            mid = 0.5 * (l + r)
            if atoms_right_derivative(kind, par, k0, k1, mid) + 2.0 * rho * mid + c >= 0.0:
                r = mid
            else:
                l = mid
            iters += 1

    best = r
    best_val = atoms_value(kind, par, k0, k1, r) + rho * r * r + c * r
    cand_val = atoms_value(kind, par, k0, k1, l) + rho * l * l + c * l
    if cand_val < best_val:
        best = l
        best_val = cand_val
    for k in range(k0, k1):
        if kind[k] == HINGE:
            knee = par[k, 1]
            if l <= knee <= r:
                v = atoms_value(kind, par, k0, k1, knee) + rho * knee * knee + c * knee
                if v < best_val:
                    best = knee
                    best_val = v
    dr = atoms_right_derivative(kind, par, k0, k1, best) + 2.0 * rho * best + c
    tie = best < hi and dr == 0.0
    return best, OK, tie, iters


@nb.njit(cache=True)
def coordinate_argmin(cpar, kind, par, atom_ptr, d, c):
    """Dispatch one coordinate to its solver. Returns (x, value, status, tie)."""
    fam = int(cpar[d, C_FAM])
    rho = cpar[d, C_RHO]
    lo = cpar[d, C_LO]
    hi = cpar[d, C_HI]
    ce = c + cpar[d, C_LIN]
    status = OK
    tie = False
    if fam == FAM_QUADRATIC:
        x = quadratic_argmin(cpar[d, C_QW], cpar[d, C_QA], lo, hi, ce, rho)
    elif fam == FAM_LINEAR:
        if rho > 0.0:
            x = quadratic_argmin(0.0, 0.0, lo, hi, ce, rho)
        else:
            x, status, tie = linear_argmin(lo, hi, ce)
    elif fam == FAM_HINGE:
        x, status, tie = hinge_argmin(cpar[d, C_HW], cpar[d, C_HA], lo, hi, ce, rho)
    elif fam == FAM_ENTROPY:
        x, status = entropy_argmin(cpar[d, C_EP], lo, hi, ce)
    else:
        x, status, tie, _ = fallback_argmin(kind, par, atom_ptr[d], atom_ptr[d + 1], rho, lo, hi, c)
    if status != OK:
        return x, np.nan, status, tie
    value = atoms_value(kind, par, atom_ptr[d], atom_ptr[d + 1], x) + rho * x * x + c * x
    return x, value, status, tie


@nb.njit(cache=True)
def minimize_all(cpar, kind, par, atom_ptr, coef, x, values):
    """Solve every coordinate in order, writing ``x`` and ``values`` in place.

    Returns (status, first failing coordinate, tie count).
    """
    ties = 0
    for d in range(cpar.shape[0]):
        xd, vd, st, tie = coordinate_argmin(cpar, kind, par, atom_ptr, d, coef[d])
        if st != OK:
            return st, d, ties
        x[d] = xd
        values[d] = vd
        if tie:
            ties += 1
    return OK, -1, ties


# ---------------------------------------------------------------- public API


def _box(box) -> tuple[float, float]:
    if box is None:
        return -np.inf, np.inf
    lo, hi = box
    lo = -np.inf if lo is None else float(lo)
    hi = np.inf if hi is None else float(hi)
    if lo > hi:
        raise ValueError(f"empty box [{lo}, {hi}]")
    return lo, hi


def solve_quadratic(w: float, a: float, box, c: float, rho: float = 0.0) -> OracleResult:
    """Minimize ``(w/2)(x-a)^2 + rho x^2 + c x`` over ``box``."""
    if w + 2 * rho <= 0:
        raise ValueError("need w + 2*rho > 0")
    lo, hi = _box(box)
    x = float(quadratic_argmin(float(w), float(a), lo, hi, float(c), float(rho)))
    value = 0.5 * w * (x - a) ** 2 + rho * x * x + c * x
    return OracleResult(x, value, False)


def solve_hinge(w: float, a: float, b_s: float, box, c: float, rho: float = 0.0) -> OracleResult:
    """Minimize ``max(-w(x-a) + b_s, b_s) + rho x^2 + c x`` over ``box``.

    With ``rho = 0`` and ``c`` in ``{0, w}`` the minimizer set is an interval;
    the knee (clamped into the box) is returned and ``tie_broken`` is set.

    Raises:
        UnboundedBelowError: if the linear tail decreases into an open box end.
    """
    if w <= 0:
        raise ValueError(f"hinge slope must be positive, got {w}")
    lo, hi = _box(box)
    x, status, tie = hinge_argmin(float(w), float(a), lo, hi, float(c), float(rho))
    raise_for_status(status)
    x = float(x)
    value = max(-w * (x - a) + b_s, b_s) + rho * x * x + c * x
    return OracleResult(x, value, bool(tie))


def solve_entropy(p: float, box, c: float, rho: float = 0.0) -> OracleResult:
    """Minimize ``x log(p x) + rho x^2 + c x`` over a box with positive lower end."""
    if p <= 0:
        raise ValueError(f"entropy scale must be positive, got {p}")
    lo, hi = _box(box)
    if lo <= 0:
        raise ValueError(f"entropy box needs a positive lower bound, got {lo}")
    if rho > 0:
        return solve_scalar_fallback([_entropy_atom(p)], box, c, rho)
    x, status = entropy_argmin(float(p), lo, hi, float(c))
    raise_for_status(status)
    x = float(x)
    return OracleResult(x, x * math.log(p * x) + c * x, False)


def _entropy_atom(p):
    from asyncdual.problem import Entropy

    return Entropy(p)


def encode_atoms(atoms) -> tuple[np.ndarray, np.ndarray]:
    """Pack atom objects into the ``(kind, par)`` arrays used by the kernels."""
    kind = np.zeros(len(atoms), dtype=np.int64)
    par = np.zeros((len(atoms), 3))
    for k, atom in enumerate(atoms):
        kind[k], par[k] = atom.code()
    return kind, par


def solve_scalar_fallback(atoms, box, c: float, rho: float = 0.0) -> OracleResult:
    """Bisection solver for any sum of scalar atoms on a bounded box.

    Unbounded boxes are accepted when the bracket can be recovered (strongly
    convex sums, or a derivative sign change within ``1e15``).

    Raises:
        UnboundedBelowError: no finite minimizer.
        ConvergenceError: tolerance not met within the iteration cap.
    """
    lo, hi = _box(box)
    kind, par = encode_atoms(atoms)
    if np.any(kind == ENTROPY) and lo <= 0:
        raise ValueError("entropy atom needs a positive lower bound")
    x, status, tie, _ = fallback_argmin(kind, par, 0, len(kind), float(rho), lo, hi, float(c))
    raise_for_status(status)
    x = float(x)
    value = float(atoms_value(kind, par, 0, len(kind), x)) + rho * x * x + c * x
    return OracleResult(x, value, bool(tie))
