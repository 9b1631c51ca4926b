"""End-to-end simulation of the asynchronous block supergradient method.

One step: draw the activation mask, move the active blocks along the
supergradient at the current dual point, then solve every local problem at
the new point. The loop runs compiled, in blocks of ``BLOCK`` steps, on the
same kernels as the stepwise API in :mod:`asyncdual.dual`.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from asyncdual.dual import (
    Constant,
    DualState,
    OrbitError,
    apply_async,
    next_alpha,
    rule_arrays,
    stepsize_element,
)
from asyncdual.noise import BLOCK, NoiseStream, NoNoise
from asyncdual.oracles import raise_for_status
from asyncdual.problem import ProblemInstance, _check_dual, dual_point
from asyncdual.reference import Reference
from asyncdual.scheduler import mask_core, record_mask, schedule_arrays, scheduler_stream

__all__ = ["RunConfig", "Trace", "run", "CHANNELS", "MissingChannelError"]

CHANNELS = ("lambda", "Q", "gap", "residual", "witness")
DEFAULT_CHANNELS = frozenset({"Q", "gap", "residual"})
_ALIASES = {"λ": "lambda", "lam": "lambda", "x": "witness"}
_ORBIT = -1


class MissingChannelError(ValueError):
    """A metric needs a trace channel that was not recorded."""


def normalize_channels(channels) -> frozenset[str]:
    if isinstance(channels, str):
        channels = [c for c in channels.split(",") if c.strip()]
    out = set()
    for c in channels:
        c = _ALIASES.get(c.strip(), c.strip())
        if c not in CHANNELS:
            raise ValueError(f"unknown trace channel {c!r}; choose from {', '.join(CHANNELS)}")
        out.add(c)
    return frozenset(out)


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a run.

    ``stepsize`` is one rule for all edges or one rule per edge. With
    ``global_clock`` every active block uses the shared stepsize, which
    advances once per global step whether or not anything fires.
    """

    problem: ProblemInstance
    scheduler: object
    stepsize: object
    iterations: int
    noise: object = NoNoise()
    seed: int = 0
    global_clock: bool = False
    lambda0: np.ndarray | None = field(default=None, repr=False)
    channels: frozenset = DEFAULT_CHANNELS
    reference: Reference | None = None

    def __post_init__(self):
        if int(self.iterations) < 1:
            raise ValueError(f"iterations must be at least 1, got {self.iterations}")
        object.__setattr__(self, "iterations", int(self.iterations))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "channels", normalize_channels(self.channels))
        if isinstance(self.stepsize, list):
            object.__setattr__(self, "stepsize", tuple(self.stepsize))
        if self.global_clock and isinstance(self.stepsize, tuple):
            raise ValueError("a global clock needs a single stepsize rule")
        rule_arrays(self.stepsize, self.problem.topology.num_edges)
        schedule_arrays(self.scheduler, self.problem.topology)
        if self.lambda0 is not None:
            object.__setattr__(self, "lambda0", _check_dual(self.problem, self.lambda0).copy())

    @property
    def rules(self) -> tuple:
        ne = self.problem.topology.num_edges
        return self.stepsize if isinstance(self.stepsize, tuple) else (self.stepsize,) * ne

    @property
    def constant_stepsize(self) -> bool:
        return any(isinstance(r, Constant) for r in self.rules)

    def initial_state(self) -> DualState:
        return DualState.initial(self.problem, self.rules, self.lambda0)


@dataclass(frozen=True, eq=False)
class Trace:
    """Per-step record of a run; row ``k`` describes the state after ``k`` steps.

    ``mask[k]`` is the mask of the step that produced row ``k`` (zeros in
    row 0). ``alpha[k]`` holds the stepsizes the next step would use.
    ``avg_weight[k]`` is the primal averaging weight of ``witness[k]``: the
    mean stepsize applied in step ``k + 1``, zero for idle steps and for the
    last row.
    """

    config: RunConfig = field(repr=False)
    mask: np.ndarray = field(repr=False)
    Q: np.ndarray = field(repr=False)
    residual: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)
    noise_norm: np.ndarray = field(repr=False)
    avg_weight: np.ndarray = field(repr=False)
    dist: np.ndarray | None = field(default=None, repr=False)
    spread: np.ndarray | None = field(default=None, repr=False)
    lam: np.ndarray | None = field(default=None, repr=False)
    witness: np.ndarray | None = field(default=None, repr=False)
    primal_average: np.ndarray | None = field(default=None, repr=False)

    @property
    def num_steps(self) -> int:
        return self.Q.shape[0] - 1

    @property
    def k(self) -> np.ndarray:
        return np.arange(self.Q.shape[0])

    @property
    def reference(self) -> Reference | None:
        return self.config.reference

    @property
    def best_Q(self) -> np.ndarray:
        return np.maximum.accumulate(self.Q)

    @property
    def gap(self) -> np.ndarray:
        if self.reference is None:
            raise MissingChannelError("gap needs a reference Q*")
        return self.reference.Q_star - self.Q

    @property
    def best_gap(self) -> np.ndarray:
        return self.reference.Q_star - self.best_Q if self.reference is not None else self.gap

    def to_csv(self, path=None, stride: int = 1) -> str:
        """Write the trace table; returns the text. Floats use ``repr``."""
        if stride < 1:
            raise ValueError("stride must be at least 1")
        ne = self.mask.shape[1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["k", "mask", "Q", "gap", "best_gap", "residual"]
        header += [f"alpha_{q + 1}" for q in range(ne)] + [f"gamma_{q + 1}" for q in range(ne)]
        if self.lam is not None:
            header += [f"lambda_{r + 1}" for r in range(self.lam.shape[1])]
        if self.witness is not None:
            header += [f"x_{r + 1}" for r in range(self.witness.shape[1])]
        w.writerow(header)
        has_ref = self.reference is not None
        gap = self.gap if has_ref else None
        best = self.best_gap if has_ref else None
        rows = range(0, self.Q.shape[0], stride)
        last = self.Q.shape[0] - 1
        if rows[-1] != last:
            rows = list(rows) + [last]
        for k in rows:
            row = [k, "".join("1" if v else "0" for v in self.mask[k]), repr(float(self.Q[k]))]
            row += [repr(float(gap[k])), repr(float(best[k]))] if has_ref else ["", ""]
            row.append(repr(float(self.residual[k])))
            row += [repr(float(v)) for v in self.alpha[k]]
            row += [str(int(v)) for v in self.gamma[k]]
            if self.lam is not None:
                row += [repr(float(v)) for v in self.lam[k]]
            if self.witness is not None:
                row += [repr(float(v)) for v in self.witness[k]]
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def summary(self) -> dict:
        """Final metrics as plain JSON-compatible values."""
        out = {
            "iterations": self.num_steps,
            "seed": self.config.seed,
            "final_Q": float(self.Q[-1]),
            "best_Q": float(self.best_Q[-1]),
            "final_residual": float(self.residual[-1]),
            "updates_per_edge": [int(v) for v in self.gamma[-1]],
        }
        if self.reference is not None:
            out["reference"] = self.reference.to_dict()
            out["final_gap"] = float(self.gap[-1])
            out["best_gap"] = float(self.best_gap[-1])
        if self.dist is not None:
            out["final_dist"] = float(self.dist[-1])
        if self.spread is not None:
            out["final_spread"] = float(self.spread[-1])
        if self.primal_average is not None:
            out["primal_average"] = [float(v) for v in self.primal_average]
        return out

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


# ------------------------------------------------------------------ kernel


@nb.njit(cache=True)
def _eval_row(
    row, ptr, idx, val, cpar, akind, apar, atom_ptr, lam, coef, x, values, g,
    lam_star, cons_dim, num_agents, out_Q, out_res, out_dist, out_spread, wit, lrec,
):
    """Solve all local problems at ``lam`` and record row scalars; returns (status, coord)."""
    q, status, bad, _ = dual_point(ptr, idx, val, cpar, akind, apar, atom_ptr, lam, coef, x, values, g)
    if status != 0:
        return status, bad
    out_Q[row] = q
    s = 0.0
    for r in range(g.shape[0]):
        s += g[r] * g[r]
    out_res[row] = math.sqrt(s)
    if lam_star.shape[0] == lam.shape[0] and out_dist.shape[0] > 0:
        s = 0.0
        for r in range(lam.shape[0]):
            d = lam[r] - lam_star[r]
            s += d * d
        out_dist[row] = math.sqrt(s)
    if cons_dim > 0:
        spread = 0.0
        for c in range(cons_dim):
            lo = x[c]
            hi = x[c]
            for i in range(1, num_agents):
                v = x[i * cons_dim + c]
                lo = min(lo, v)
                hi = max(hi, v)
            spread = max(spread, hi - lo)
        out_spread[row] = spread
    if wit.shape[0] > 0:
        wit[row, :] = x
    if lrec.shape[0] > 0:
        lrec[row, :] = lam
    return 0, -1


@nb.njit(cache=True)
def _run_block(
    k0, U, E,
    ptr, idx, val, cpar, akind, apar, atom_ptr,
    edge_ptr, edge_i, edge_j, num_agents, cons_dim,
    skind, probs, order, window, ptilde, decay, script, repeat,
    last_active, ring, ring_pos, varpi,
    rkind, rp1, rp2, global_clock, gk, gp1, gp2, ag,
    lam, alpha, gamma, g, x, coef, values, mask, lam_star, xsum, wsum,
    out_mask, out_Q, out_res, out_dist, out_spread, out_noise, out_w, out_alpha, out_gamma, wit, lrec,
):
    """Run steps ``k0 .. k0 + len(U) - 1``; returns (status, step, coord)."""
    ne = mask.shape[0]
    for s in range(U.shape[0]):
        k = k0 + s
        mask_core(skind, k, U[s], probs, order, window, last_active, varpi, edge_i, edge_j, ptilde, decay,
                  script, repeat, mask)
        e = E[s]
        nact = 0
        asum = 0.0
        enorm = 0.0
        for q in range(ne):
            if mask[q]:
                nact += 1
                asum += ag[0] if global_clock else alpha[q]
                for r in range(edge_ptr[q], edge_ptr[q + 1]):
                    enorm += e[r] * e[r]
        if global_clock:
            a = ag[0]
            for q in range(ne):
                if mask[q]:
                    for r in range(edge_ptr[q], edge_ptr[q + 1]):
                        lam[r] = lam[r] + a * (g[r] + e[r])
                    gamma[q] += 1
            a_next, ok = next_alpha(gk, gp1, gp2, a)
            if not ok:
                return _ORBIT, k + 1, -1
            ag[0] = a_next
            for q in range(ne):
                alpha[q] = a_next
        else:
            bad = apply_async(lam, alpha, gamma, g, e, mask, edge_ptr, rkind, rp1, rp2)
            if bad >= 0:
                return _ORBIT, k + 1, bad
        w = asum / nact if nact > 0 else 0.0
        out_w[k] = w
        if w > 0.0:
            for r in range(x.shape[0]):
                xsum[r] += w * x[r]
            wsum[0] += w
        ring_pos[0] = record_mask(k, mask, last_active, ring, ring_pos[0], varpi, edge_i, edge_j)
        row = k + 1
        out_noise[row] = math.sqrt(enorm)
        out_mask[row, :] = mask
        out_alpha[row, :] = alpha
        out_gamma[row, :] = gamma
        status, bad = _eval_row(
            row, ptr, idx, val, cpar, akind, apar, atom_ptr, lam, coef, x, values, g,
            lam_star, cons_dim, num_agents, out_Q, out_res, out_dist, out_spread, wit, lrec,
        )
        if status != 0:
            return status, row, bad
    return 0, -1, -1


# ------------------------------------------------------------------ driver


def run(config: RunConfig) -> tuple[Trace, DualState]:
    """Execute ``config.iterations`` steps and record the trace.

    Bitwise deterministic for a given config.

    Raises:
        OracleError: a local problem has no finite minimizer; carries the
            step index and the agent id.
    """
    problem = config.problem
    topo = problem.topology
    ne, n, nbar, na = topo.num_edges, problem.n, problem.n_bar, topo.num_agents
    K = config.iterations
    state = config.initial_state()
    lam, alpha, gamma = state.lam.copy(), state.alpha.copy(), state.gamma.copy()

    sch = schedule_arrays(config.scheduler, topo)
    edge_i, edge_j = topo.edge_arrays()
    rkind, rp1, rp2 = rule_arrays(config.stepsize if not config.global_clock else config.rules, ne)
    if config.global_clock:
        gk, gp1, gp2 = config.stepsize.code()
        ag = np.array([stepsize_element(gk, gp1, gp2, 0.0)])
        alpha[:] = ag[0]
    else:
        gk, gp1, gp2 = 0, 1.0, 1.0
        ag = np.zeros(1)

    ref = config.reference
    lam_star = np.zeros(0)
    if ref is not None and ref.lambda_star is not None:
        lam_star = np.asarray(ref.lambda_star, dtype=float)
    cons_dim = problem.locals[0].dim if problem.is_consensus() or _is_vector_consensus(problem) else 0

    out_mask = np.zeros((K + 1, ne), dtype=np.uint8)
    out_Q = np.empty(K + 1)
    out_res = np.empty(K + 1)
    out_dist = np.empty(K + 1) if lam_star.shape[0] == nbar else np.empty(0)
    out_spread = np.empty(K + 1) if cons_dim else np.empty(0)
    out_noise = np.zeros(K + 1)
    out_w = np.zeros(K + 1)
    out_alpha = np.empty((K + 1, ne))
    out_gamma = np.empty((K + 1, ne), dtype=np.int64)
    wit = np.empty((K + 1, n)) if "witness" in config.channels else np.empty((0, n))
    lrec = np.empty((K + 1, nbar)) if "lambda" in config.channels else np.empty((0, nbar))
    out_alpha[0] = alpha
    out_gamma[0] = gamma

    coef, x, values, g = np.empty(n), np.empty(n), np.empty(n), np.empty(nbar)
    ptr, idx, val = problem.csr
    cpar, akind, apar, atom_ptr = problem.compiled
    status, bad = _eval_row(
        0, ptr, idx, val, cpar, akind, apar, atom_ptr, lam, coef, x, values, g,
        lam_star, cons_dim, na, out_Q, out_res, out_dist, out_spread, wit, lrec,
    )
    if status:
        raise_for_status(status, agent=int(problem.coord_agent[bad]), step=0)

    last_active = np.zeros(ne, dtype=np.int64)
    ring = np.zeros((sch.history_len, na), dtype=np.int64)
    ring_pos = np.zeros(1, dtype=np.int64)
    varpi = np.zeros(na, dtype=np.int64)
    mask = np.zeros(ne, dtype=np.uint8)
    xsum, wsum = np.zeros(n), np.zeros(1)

    rng = scheduler_stream(config.seed)
    noise = NoiseStream(config.noise, config.seed, nbar)
    zeros = np.zeros((BLOCK, nbar))
    for b in range(-(-K // BLOCK)):
        k0 = b * BLOCK
        count = min(BLOCK, K - k0)
        U = rng.random((count, ne + 1))
        E = zeros[:count] if noise.silent else noise.block(b)[:count]
        status, step, bad = _run_block(
            k0, U, E,
            ptr, idx, val, cpar, akind, apar, atom_ptr,
            problem.edge_ptr, edge_i, edge_j, na, cons_dim,
            sch.kind, sch.probs, sch.order, sch.window, sch.ptilde, sch.decay, sch.script, sch.repeat,
            last_active, ring, ring_pos, varpi,
            rkind, rp1, rp2, config.global_clock, gk, gp1, gp2, ag,
            lam, alpha, gamma, g, x, coef, values, mask, lam_star, xsum, wsum,
            out_mask, out_Q, out_res, out_dist, out_spread, out_noise, out_w, out_alpha, out_gamma, wit, lrec,
        )
        if status == _ORBIT:
            raise OrbitError(f"stepsize of edge {bad + 1} left its rule's orbit at step {step}")
        if status:
            raise_for_status(status, agent=int(problem.coord_agent[bad]), step=int(step))

    trace = Trace(
        config=config,
        mask=out_mask,
        Q=out_Q,
        residual=out_res,
        alpha=out_alpha,
        gamma=out_gamma,
        noise_norm=out_noise,
        avg_weight=out_w,
        dist=out_dist if out_dist.shape[0] else None,
        spread=out_spread if out_spread.shape[0] else None,
        lam=lrec if lrec.shape[0] else None,
        witness=wit if wit.shape[0] else None,
        primal_average=xsum / wsum[0] if wsum[0] > 0 else None,
    )
    return trace, DualState(lam, alpha, gamma, K)


def _is_vector_consensus(problem: ProblemInstance) -> bool:
    """Equal local dimensions and identity selections on every edge."""
    dims = {lp.dim for lp in problem.locals}
    if len(dims) != 1:
        return False
    d = dims.pop()
    eye = np.eye(d)
    return all(
        eij.shape == (d, d) and np.array_equal(eij, eye) and np.array_equal(eji, eye)
        for eij, eji in problem.selection.matrices.values()
    )
