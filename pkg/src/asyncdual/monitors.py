"""Assumption and bound monitors evaluated on a recorded trace."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from asyncdual import oracles as _orc
from asyncdual.noise import second_moment_bound
from asyncdual.problem import check_constraint_rank
from asyncdual.reference import Reference
from asyncdual.runtime import MissingChannelError, Trace
from asyncdual.scheduler import IidBernoulli, Synchronous

__all__ = [
    "BoundCheck",
    "MonitorReport",
    "RateEstimate",
    "monitor",
    "rate_estimate",
    "consensus_spread",
    "delta_checkpoints",
    "prop6_bound",
]

BOUND_RTOL = 1e-9
GAP_FLOOR = 1e-16


@dataclass(frozen=True)
class BoundCheck:
    """Pathwise check of the best-value bound; ``holds[k]`` per row."""

    holds: np.ndarray = field(repr=False)
    lhs: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    first_violation: int | None
    m1: float
    K: float
    G: float
    R: float

    @property
    def ok(self) -> bool:
        return self.first_violation is None


@dataclass(frozen=True)
class MonitorReport:
    """Empirical constants and verdicts for one trace.

    ``flags`` list assumption violations; ``warnings`` list conditions that
    weaken the guarantees without contradicting a hypothesis.
    """

    delta_hat: float
    delta_grid: tuple[int, ...]
    starved_edges: tuple[int, ...]
    G_hat: float
    c_hat: float | None
    bound_prop6: BoundCheck | None
    rate_prop5: np.ndarray | None = field(repr=False)
    rate_prop5_min: np.ndarray | None = field(repr=False)
    alpha_ratio: np.ndarray = field(repr=False)
    flags: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def violated(self) -> bool:
        return bool(self.flags)

    def to_dict(self) -> dict:
        out = {
            "delta_hat": self.delta_hat,
            "delta_grid": list(self.delta_grid),
            "starved_edges": list(self.starved_edges),
            "G_hat": self.G_hat,
            "c_hat": self.c_hat,
            "alpha_ratio_final": float(self.alpha_ratio[-1]),
            "flags": list(self.flags),
            "warnings": list(self.warnings),
        }
        if self.bound_prop6 is not None:
            b = self.bound_prop6
            out["bound_prop6"] = {
                "holds": b.ok,
                "first_violation": b.first_violation,
                "m1": b.m1,
                "K": b.K,
                "G": b.G,
                "R": b.R,
            }
        else:
            out["bound_prop6"] = None
        if self.rate_prop5_min is not None:
            out["rate_prop5_final_min"] = float(self.rate_prop5_min[-1])
        return out


def delta_checkpoints(num_steps: int) -> tuple[int, ...]:
    """Powers of two in ``[sqrt(K), K]``: the trailing grid for the update-rate liminf."""
    if num_steps < 1:
        return ()
    lo = math.isqrt(num_steps - 1) + 1 if num_steps > 1 else 1
    out = []
    k = 1
    while k <= num_steps:
        if k >= lo:
            out.append(k)
        k *= 2
    return tuple(out)


def _applied_alpha(trace: Trace) -> np.ndarray:
    """Stepsize the next step applies per row (mean over edges)."""
    if trace.alpha.shape[1] == 0:
        return np.zeros(trace.alpha.shape[0])
    return trace.alpha.mean(axis=1)


def _uniform_stepsizes(trace: Trace) -> bool:
    cfg = trace.config
    if cfg.global_clock or isinstance(cfg.scheduler, Synchronous):
        return len(set(cfg.rules)) <= 1
    return False


def _min_probability(trace: Trace) -> float | None:
    sch = trace.config.scheduler
    ne = trace.mask.shape[1]
    if isinstance(sch, Synchronous):
        return 1.0
    if isinstance(sch, IidBernoulli):
        return float(sch.probabilities(ne).min()) if ne else 1.0
    return None


def prop6_bound(best_gap, alpha, m1: float, K: float, G: float, R: float, rtol: float = BOUND_RTOL) -> BoundCheck:
    """Check ``best_gap[k] <= (m1 R^2 + (m1 K + G^2) S2_k) / (2 S1_k)`` per row.

    ``alpha[i]`` is the stepsize applied in step ``i + 1``;
    ``S2_k = sum_{i=1}^k alpha_i^2`` and ``S1_k = sum_{i=0}^k alpha_i``.
    """
    best_gap = np.asarray(best_gap, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    sq = alpha**2
    sq[0] = 0.0
    s2 = np.cumsum(sq)
    s1 = np.cumsum(alpha)
    rhs = (m1 * R**2 + (m1 * K + G**2) * s2) / (2.0 * s1)
    slack = rhs - best_gap
    holds = slack >= -rtol * np.maximum(np.abs(rhs), 1e-300)
    bad = np.flatnonzero(~holds)
    return BoundCheck(holds, best_gap, rhs, int(bad[0]) if bad.size else None, m1, K, G, R)


def monitor(trace: Trace, reference: Reference | None = None) -> MonitorReport:
    """Estimate the constants of the convergence hypotheses along ``trace``.

    ``reference`` defaults to the one stored in the run config. Gap-based
    fields need ``Q*``; distance-based fields need a unique ``lambda*``.

    Raises:
        MissingChannelError: ``lambda*`` is known but neither the distance
            nor the dual iterate channel was recorded.
    """
    cfg = trace.config
    ref = reference if reference is not None else cfg.reference
    K_steps = trace.num_steps
    ne = trace.mask.shape[1]
    flags: list[str] = []
    warnings: list[str] = []

    grid = delta_checkpoints(K_steps)
    if ne and grid:
        delta_hat = float(min((trace.gamma[k] / k).min() for k in grid))
    else:
        delta_hat = 1.0
    half = K_steps // 2
    trailing = trace.mask[half + 1 :].sum(axis=0) if K_steps >= 2 else trace.mask[1:].sum(axis=0)
    starved = tuple(int(q) + 1 for q in np.flatnonzero(trailing == 0)) if ne else ()
    if starved:
        flags.append(f"Assumption 2 violated: edges {list(starved)} idle over the trailing half")
    if cfg.constant_stepsize:
        flags.append("Assumption 3 violated: constant stepsize is not square summable")

    G_hat = float(trace.residual.max())
    dist = None
    if ref is not None and ref.lambda_star is not None:
        lam_star = np.asarray(ref.lambda_star, dtype=float)
        if trace.dist is not None and cfg.reference is ref:
            dist = trace.dist
        elif trace.lam is not None:
            dist = np.linalg.norm(trace.lam - lam_star[None, :], axis=1)
        else:
            raise MissingChannelError("distance to lambda* needs the lambda channel")
    c_hat = float((trace.residual**2 / (1.0 + dist**2)).max()) if dist is not None else None

    alpha = _applied_alpha(trace)
    bound = None
    rate = rate_min = None
    if ref is not None:
        gap = ref.Q_star - trace.Q
        best_gap = ref.Q_star - np.maximum.accumulate(trace.Q)
        rate = trace.k * alpha * gap
        rate_min = np.minimum.accumulate(rate)
        p_min = _min_probability(trace)
        if ref.lambda_star is not None and p_min is not None and _uniform_stepsizes(trace):
            lam0 = cfg.lambda0 if cfg.lambda0 is not None else np.zeros(cfg.problem.n_bar)
            R = float(np.linalg.norm(lam0 - np.asarray(ref.lambda_star, dtype=float)))
            K_noise = second_moment_bound(cfg.noise, cfg.problem.n_bar)
            bound = prop6_bound(best_gap, alpha, 1.0 / p_min, K_noise, G_hat, R)
            if not bound.ok:
                flags.append(f"Proposition 6 bound violated at k={bound.first_violation}")

    if ne:
        alpha_ratio = trace.alpha.max(axis=1) / trace.alpha.min(axis=1)
    else:
        alpha_ratio = np.ones(trace.alpha.shape[0])

    rank = check_constraint_rank(cfg.problem)
    if not rank.full_rank:
        warnings.append(f"constraint matrix has rank {rank.rank} < {rank.n_bar}: dual optimum not unique")
    if not cfg.problem.topology.connected:
        warnings.append("communication graph is disconnected")
    if ref is not None and _box_touch(cfg.problem, ref.x_star):
        warnings.append("reference optimum lies on the box boundary")
    return MonitorReport(
        delta_hat=delta_hat,
        delta_grid=grid,
        starved_edges=starved,
        G_hat=G_hat,
        c_hat=c_hat,
        bound_prop6=bound,
        rate_prop5=rate,
        rate_prop5_min=rate_min,
        alpha_ratio=alpha_ratio,
        flags=tuple(flags),
        warnings=tuple(warnings),
    )


def _box_touch(problem, x) -> bool:
    cpar = problem.compiled[0]
    x = np.asarray(x, dtype=float)
    return bool(np.any(x <= cpar[:, _orc.C_LO]) or np.any(x >= cpar[:, _orc.C_HI]))


@dataclass(frozen=True)
class RateEstimate:
    """Running-min gap ``b_k`` and its scaled and log-log diagnostics (rows ``k >= 1``)."""

    k: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    scaled: np.ndarray = field(repr=False)
    scaled_min: np.ndarray = field(repr=False)
    slope_log: float
    slope_loglog: float
    clipped: int
    nonconvergent: bool


def _fit_slope(xs: np.ndarray, ys: np.ndarray) -> float:
    if xs.shape[0] < 2 or np.ptp(xs) == 0:
        return float("nan")
    return float(np.polyfit(xs, ys, 1)[0])


def rate_estimate(trace_or_gap, reference: Reference | None = None, q: float = 0.51) -> RateEstimate:
    """Rate diagnostics from a trace, or from a raw gap series indexed by ``k``.

    ``b_k = min_{i <= k} gap_i`` with non-positive gaps clipped at 1e-16
    (the count is reported). Slopes are least-squares fits of ``log b_k``
    against ``log k`` and against ``log log k`` on a logarithmic grid.
    ``nonconvergent`` is set when the running min of ``k^(1-q) b_k`` never
    improves on its first value.
    """
    if not 0.5 < q <= 1.0:
        raise ValueError(f"q must lie in (1/2, 1], got {q}")
    if isinstance(trace_or_gap, Trace):
        ref = reference if reference is not None else trace_or_gap.reference
        if ref is None:
            raise MissingChannelError("rate estimates need a reference Q*")
        gap = ref.Q_star - trace_or_gap.Q
    else:
        gap = np.asarray(trace_or_gap, dtype=float)
    if gap.shape[0] < 2:
        raise ValueError("need at least one step")
    clipped = int(np.count_nonzero(gap <= 0))
    gap = np.maximum(gap, GAP_FLOOR)
    b = np.minimum.accumulate(gap)[1:]
    k = np.arange(1, gap.shape[0], dtype=float)
    scaled = k ** (1.0 - q) * b
    scaled_min = np.minimum.accumulate(scaled)
    grid = np.unique(np.geomspace(1, k[-1], num=min(200, k.shape[0])).astype(np.int64))
    slope_log = _fit_slope(np.log(k[grid - 1]), np.log(b[grid - 1]))
    sub = grid[grid >= 3]
    slope_loglog = _fit_slope(np.log(np.log(k[sub - 1])), np.log(b[sub - 1]))
    nonconvergent = bool(scaled_min[-1] >= scaled[0])
    return RateEstimate(k.astype(np.int64), b, scaled, scaled_min, slope_log, slope_loglog, clipped, nonconvergent)


def consensus_spread(trace_or_witness) -> np.ndarray:
    """``max_{i,j} |x_i - x_j|`` per row (largest over shared coordinates).

    Accepts a trace of a consensus problem, or a single witness vector / array
    of witness rows of a scalar consensus problem.

    Raises:
        ValueError: the trace's problem is not in consensus form.
    """
    if isinstance(trace_or_witness, Trace):
        if trace_or_witness.spread is None:
            raise ValueError("spread is only defined for identity-selection consensus problems")
        return trace_or_witness.spread
    w = np.atleast_2d(np.asarray(trace_or_witness, dtype=float))
    return w.max(axis=1) - w.min(axis=1)
