"""Activation masks: which dual blocks update at each global step.

Every scheduler consumes the same random input per step, a vector of
``|E| + 1`` uniforms drawn from its own stream, whether or not it uses them.
Stream position therefore depends only on the step index, and the stepwise
:func:`next_mask` reproduces the masks of a full simulation run exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numba as nb
import numpy as np

from asyncdual.topology import Topology

__all__ = [
    "Synchronous",
    "IidBernoulli",
    "Cyclic",
    "PersistentlyExciting",
    "AdaptiveCounter",
    "ScriptedMask",
    "SchedulerSpec",
    "next_mask",
    "empirical_rate",
    "read_mask_file",
    "scheduler_stream",
]

S_SYNC, S_IID, S_CYCLIC, S_PERSISTENT, S_ADAPTIVE, S_SCRIPTED = range(6)


@dataclass(frozen=True)
class Synchronous:
    pass


@dataclass(frozen=True)
class IidBernoulli:
    """Each edge active independently with probability ``p`` (scalar or per edge)."""

    p: float | tuple[float, ...]

    def __post_init__(self):
        if not np.isscalar(self.p):
            object.__setattr__(self, "p", tuple(float(v) for v in self.p))
        vals = np.atleast_1d(np.asarray(self.p, dtype=float))
        if np.any(vals <= 0) or np.any(vals > 1):
            raise ValueError("activation probabilities must lie in (0, 1]")

    def probabilities(self, num_edges: int) -> np.ndarray:
        if np.isscalar(self.p):
            return np.full(num_edges, float(self.p))
        if len(self.p) != num_edges:
            raise ValueError(f"{len(self.p)} probabilities for {num_edges} edges")
        return np.asarray(self.p, dtype=float)


@dataclass(frozen=True)
class Cyclic:
    """Round robin over 1-based edge indices; ``order=None`` means 1..|E|."""

    order: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.order is not None:
            object.__setattr__(self, "order", tuple(int(v) for v in self.order))

    def resolved(self, num_edges: int) -> tuple[int, ...]:
        order = self.order or tuple(range(1, num_edges + 1))
        if sorted(order) != list(range(1, num_edges + 1)):
            raise ValueError(f"cyclic order {order} is not a permutation of 1..{num_edges}")
        return order


@dataclass(frozen=True)
class PersistentlyExciting:
    """Every edge fires at least once in any ``window`` consecutive steps.

    An edge that has been idle for ``window - 1`` steps is forced on; on top
    of that one uniformly drawn non-forced edge fires each step.
    """

    window: int

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be at least 1")


@dataclass(frozen=True)
class AdaptiveCounter:
    """Edge ``(i, j)`` fires with probability ``pt_i pt_j decay^(c_i c_j)``.

    ``c_i`` counts, over the previous ``window`` global steps (the current
    step excluded), the steps in which some edge touching ``i`` fired. The
    counter reads global state, so this scheduler is a simulation device
    rather than a distributed protocol.
    """

    ptilde: tuple[float, ...]
    decay: float = 0.7
    window: int = 10

    def __post_init__(self):
        object.__setattr__(self, "ptilde", tuple(float(v) for v in self.ptilde))
        if any(not 0 < v <= 1 for v in self.ptilde):
            raise ValueError("base probabilities must lie in (0, 1]")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        if self.window < 0:
            raise ValueError("window must be non-negative")


@dataclass(frozen=True)
class ScriptedMask:
    """Replay explicit 0/1 rows (columns in edge order).

    After the last row the schedule idles, or starts over when ``repeat``.
    """

    masks: np.ndarray = field(repr=False)
    repeat: bool = False

    def __post_init__(self):
        arr = np.atleast_2d(np.asarray(self.masks, dtype=np.uint8))
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ValueError("scripted masks must be 0/1")
        object.__setattr__(self, "masks", arr)

    def __eq__(self, other):
        return (
            isinstance(other, ScriptedMask)
            and self.repeat == other.repeat
            and self.masks.shape == other.masks.shape
            and bool(np.array_equal(self.masks, other.masks))
        )

    __hash__ = None


SchedulerSpec = Synchronous | IidBernoulli | Cyclic | PersistentlyExciting | AdaptiveCounter | ScriptedMask


def read_mask_file(path) -> np.ndarray:
    """Rows of 0/1 digits, optionally separated by spaces or commas."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].replace(",", " ").strip()
            if not text:
                continue
            digits = text.split() if " " in text else list(text)
            if any(d not in ("0", "1") for d in digits):
                raise ValueError(f"{path}:{lineno}: expected 0/1 entries, got {line.strip()!r}")
            rows.append([int(d) for d in digits])
    if len({len(r) for r in rows}) > 1:
        raise ValueError(f"{path}: rows have different lengths")
    return np.asarray(rows, dtype=np.uint8)


@dataclass(frozen=True)
class ScheduleArrays:
    kind: int
    probs: np.ndarray
    order: np.ndarray
    window: int
    ptilde: np.ndarray
    decay: float
    script: np.ndarray
    repeat: bool
    history_len: int


def schedule_arrays(spec, topology: Topology) -> ScheduleArrays:
    ne = topology.num_edges
    na = topology.num_agents
    probs = np.ones(ne)
    order = np.arange(ne, dtype=np.int64)
    window = 0
    ptilde = np.ones(na)
    decay = 1.0
    script = np.zeros((0, ne), dtype=np.uint8)
    repeat = False
    if isinstance(spec, Synchronous):
        kind = S_SYNC
    elif isinstance(spec, IidBernoulli):
        kind = S_IID
        probs = spec.probabilities(ne)
    elif isinstance(spec, Cyclic):
        kind = S_CYCLIC
        order = np.asarray(spec.resolved(ne), dtype=np.int64) - 1
    elif isinstance(spec, PersistentlyExciting):
        kind = S_PERSISTENT
        window = spec.window
    elif isinstance(spec, AdaptiveCounter):
        kind = S_ADAPTIVE
        if len(spec.ptilde) != na:
            raise ValueError(f"{len(spec.ptilde)} base probabilities for {na} agents")
        ptilde = np.asarray(spec.ptilde, dtype=float)
        decay = spec.decay
        window = spec.window
    elif isinstance(spec, ScriptedMask):
        kind = S_SCRIPTED
        script = spec.masks if spec.masks.size else np.zeros((0, ne), dtype=np.uint8)
        if script.shape[1] != ne:
            raise ValueError(f"scripted masks have {script.shape[1]} columns for {ne} edges")
        repeat = spec.repeat
    else:
        raise TypeError(f"unknown scheduler spec {spec!r}")
    return ScheduleArrays(
        kind, probs, order, window, ptilde, decay, np.ascontiguousarray(script), repeat,
        history_len=window if kind == S_ADAPTIVE else 0,
    )


# ---------------------------------------------------------------- kernels


@nb.njit(cache=True)
def mask_core(kind, k, u, probs, order, window, last_active, varpi, edge_i, edge_j, ptilde, decay, script, repeat, out):
    """Fill ``out`` with the mask of transition ``k + 1`` (``k`` = steps done)."""
    ne = out.shape[0]
    if kind == S_SYNC:
        out[:] = 1
    elif kind == S_IID:
        for q in range(ne):
            out[q] = 1 if u[q] < probs[q] else 0
    elif kind == S_CYCLIC:
        out[:] = 0
        if ne > 0:
            out[order[k % ne]] = 1
    elif kind == S_PERSISTENT:
        t = k + 1
        free = 0
        for q in range(ne):
            if t - last_active[q] >= window:
                out[q] = 1
            else:
                out[q] = 0
                free += 1
        if free > 0:
            pick = min(int(u[ne] * free), free - 1)
            for q in range(ne):
                if out[q] == 0:
                    if pick == 0:
                        out[q] = 1
                        break
                    pick -= 1
    elif kind == S_ADAPTIVE:
        for q in range(ne):
            i = edge_i[q]
            j = edge_j[q]
            p = ptilde[i] * ptilde[j] * decay ** (varpi[i] * varpi[j])
            out[q] = 1 if u[q] < p else 0
    else:
        n_rows = script.shape[0]
        out[:] = 0
        if n_rows > 0 and (k < n_rows or repeat):
            row = k % n_rows
            for q in range(ne):
                out[q] = script[row, q]


@nb.njit(cache=True)
def record_mask(k, mask, last_active, ring, ring_pos, varpi, edge_i, edge_j):
    """Advance scheduler memory after transition ``k + 1``; returns new ring position."""
    t = k + 1
    for q in range(mask.shape[0]):
        if mask[q]:
            last_active[q] = t
    w = ring.shape[0]
    if w == 0:
        return ring_pos
    for i in range(ring.shape[1]):
        varpi[i] -= ring[ring_pos, i]
        ring[ring_pos, i] = 0
    for q in range(mask.shape[0]):
        if mask[q]:
            ring[ring_pos, edge_i[q]] = 1
            ring[ring_pos, edge_j[q]] = 1
    for i in range(ring.shape[1]):
        varpi[i] += ring[ring_pos, i]
    return (ring_pos + 1) % w


# ---------------------------------------------------------------- public API


def scheduler_stream(seed: int) -> np.random.Generator:
    """The scheduler's uniform stream for a run seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0,)))


def next_mask(spec, topology: Topology, k: int, rng: np.random.Generator, history=None) -> np.ndarray:
    """Mask for the step after ``k`` completed steps.

    ``history`` holds earlier masks, oldest first. Adaptive counters read the
    last ``window`` rows (missing rows count as idle). A persistently exciting
    edge absent from the given rows is taken to have fired just before them,
    so pass at least ``window - 1`` rows, or all ``k`` rows early in a run.
    Draws ``|E| + 1`` uniforms from ``rng``.
    """
    arrs = schedule_arrays(spec, topology)
    ne = topology.num_edges
    u = rng.random(ne + 1)
    hist = np.zeros((0, ne), dtype=np.uint8) if history is None else np.atleast_2d(np.asarray(history, dtype=np.uint8))
    if hist.size == 0:
        hist = np.zeros((0, ne), dtype=np.uint8)
    edge_i, edge_j = topology.edge_arrays()
    t = k + 1
    last_active = np.full(ne, max(0, t - hist.shape[0] - 1), dtype=np.int64)
    for r in range(hist.shape[0]):
        last_active[hist[r] == 1] = t - hist.shape[0] + r
    varpi = np.zeros(topology.num_agents, dtype=np.int64)
    if arrs.kind == S_ADAPTIVE and arrs.window > 0:
        for row in hist[-arrs.window :]:
            touched = np.zeros(topology.num_agents, dtype=bool)
            touched[edge_i[row == 1]] = True
            touched[edge_j[row == 1]] = True
            varpi += touched
    out = np.zeros(ne, dtype=np.uint8)
    mask_core(
        arrs.kind, int(k), u, arrs.probs, arrs.order, arrs.window, last_active, varpi,
        edge_i, edge_j, arrs.ptilde, arrs.decay, arrs.script, arrs.repeat, out,
    )
    return out


def empirical_rate(masks, edge: int, k: int | None = None) -> Fraction:
    """``gamma_edge[k] / k`` from a mask history (rows = steps, 1-based edge)."""
    masks = np.atleast_2d(np.asarray(masks))
    k = masks.shape[0] if k is None else int(k)
    if k < 1:
        raise ValueError("need at least one step")
    return Fraction(int(masks[:k, edge - 1].sum()), k)
