"""Primal problem, selection matrices, Lagrangian and the separable dual.

A :class:`ProblemInstance` couples per-agent :class:`LocalProblem` costs with
per-edge selection matrices ``E_ij``/``E_ji``. Internally all coupling
constraints are stacked into one sparse matrix ``H`` (``n_bar x n``) so that
the residual is ``E(x) = H x`` and the local linear coefficients are the
agent slices of ``H^T lambda``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numba as nb
import numpy as np

from asyncdual import oracles as _orc
from asyncdual.oracles import raise_for_status
from asyncdual.topology import Topology, build_topology, path_graph

__all__ = [
    "Quadratic",
    "Hinge",
    "Entropy",
    "AffineLinear",
    "LocalProblem",
    "SelectionMap",
    "ProblemInstance",
    "RankReport",
    "consensus_problem",
    "single_agent",
    "dual_coefficients",
    "quadratic_consensus",
    "local_linear_coefficient",
    "constraint_residual",
    "objective",
    "evaluate_lagrangian",
    "evaluate_dual",
    "evaluate_dual_batch",
    "check_constraint_rank",
]


# ------------------------------------------------------------------ atoms


@dataclass(frozen=True)
class Quadratic:
    """``(weight/2) (x - center)^2`` on coordinate ``coord``."""

    center: float
    weight: float = 1.0
    coord: int = 0

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError(f"quadratic weight must be positive, got {self.weight}")

    def code(self):
        return _orc.QUADRATIC, (self.weight, self.center, 0.0)

    def value(self, x: float) -> float:
        return 0.5 * self.weight * (x - self.center) ** 2

    def right_slope(self, x: float) -> float:
        return self.weight * (x - self.center)


@dataclass(frozen=True)
class Hinge:
    """``max(-slope (x - knee) + offset, offset)``."""

    slope: float
    knee: float
    offset: float = 0.0
    coord: int = 0

    def __post_init__(self):
        if not self.slope > 0:
            raise ValueError(f"hinge slope must be positive, got {self.slope}")

    def code(self):
        return _orc.HINGE, (self.slope, self.knee, self.offset)

    def value(self, x: float) -> float:
        return max(-self.slope * (x - self.knee) + self.offset, self.offset)

    def right_slope(self, x: float) -> float:
        return -self.slope if x < self.knee else 0.0


@dataclass(frozen=True)
class Entropy:
    """``x log(scale x)``, defined for ``x > 0``."""

    scale: float
    coord: int = 0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"entropy scale must be positive, got {self.scale}")

    def code(self):
        return _orc.ENTROPY, (self.scale, 0.0, 0.0)

    def value(self, x: float) -> float:
        return x * math.log(self.scale * x)

    def right_slope(self, x: float) -> float:
        return math.log(self.scale * x) + 1.0


@dataclass(frozen=True)
class AffineLinear:
    """``coef * x``."""

    coef: float
    coord: int = 0

    def code(self):
        return _orc.LINEAR, (self.coef, 0.0, 0.0)

    def value(self, x: float) -> float:
        return self.coef * x

    def right_slope(self, x: float) -> float:
        return self.coef


CostAtom = Quadratic | Hinge | Entropy | AffineLinear


# --------------------------------------------------------------- problems


def _normalize_box(box, dim: int) -> tuple[tuple[float, float], ...]:
    if box is None:
        return tuple((-math.inf, math.inf) for _ in range(dim))
    box = list(box)
    if len(box) == 2 and not isinstance(box[0], (list, tuple)) and dim == 1:
        box = [box]
    if len(box) != dim:
        raise ValueError(f"box has {len(box)} intervals for dimension {dim}")
    out = []
    for lo, hi in box:
        lo = -math.inf if lo is None else float(lo)
        hi = math.inf if hi is None else float(hi)
        if lo > hi or lo == math.inf or hi == -math.inf:
            raise ValueError(f"invalid interval [{lo}, {hi}]")
        out.append((lo, hi))
    return tuple(out)


@dataclass(frozen=True)
class LocalProblem:
    """One agent's cost (a sum of coordinate atoms), box and regularizer.

    ``rho`` adds ``rho * |x|^2`` to the cost.
    """

    atoms: tuple = ()
    dim: int = 1
    box: tuple = None
    rho: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "box", _normalize_box(self.box, self.dim))
        if self.dim < 1:
            raise ValueError("dimension must be at least 1")
        if self.rho < 0:
            raise ValueError(f"regularizer weight must be non-negative, got {self.rho}")
        for atom in self.atoms:
            if not 0 <= atom.coord < self.dim:
                raise ValueError(f"atom {atom} targets coordinate outside 0..{self.dim - 1}")
            if isinstance(atom, Entropy) and self.box[atom.coord][0] <= 0:
                raise ValueError("entropy atoms need a positive lower bound on their coordinate")

    def cost(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        total = sum(atom.value(float(x[atom.coord])) for atom in self.atoms)
        return float(total + self.rho * float(x @ x))


@dataclass(frozen=True)
class SelectionMap:
    """Per-edge selection matrices.

    ``matrices[(i, j)] = (E_ij, E_ji)``, both with ``n_bar_ij`` rows, acting on
    agent ``i``'s and agent ``j``'s variables respectively.
    """

    matrices: Mapping[tuple[int, int], tuple[np.ndarray, np.ndarray]]

    @classmethod
    def consensus(cls, topology: Topology, dim: int = 1) -> "SelectionMap":
        eye = np.eye(dim)
        return cls({e: (eye, eye) for e in topology.oriented_edges})

    def block_dim(self, edge: tuple[int, int]) -> int:
        return self.matrices[edge][0].shape[0]


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Topology, local problems (agent order) and selection matrices."""

    topology: Topology
    locals: tuple[LocalProblem, ...]
    selection: SelectionMap = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "locals", tuple(self.locals))
        if len(self.locals) != self.topology.num_agents:
            raise ValueError(
                f"{len(self.locals)} local problems for {self.topology.num_agents} agents"
            )
        mats = {}
        for e in self.topology.oriented_edges:
            if e not in self.selection.matrices:
                raise ValueError(f"missing selection matrices for edge {e}")
            i, j = e
            eij, eji = (np.atleast_2d(np.asarray(m, dtype=float)) for m in self.selection.matrices[e])
            if eij.shape[0] != eji.shape[0] or eij.shape[0] < 1:
                raise ValueError(f"edge {e}: E_ij and E_ji need the same positive row count")
            if eij.shape[1] != self.locals[i - 1].dim or eji.shape[1] != self.locals[j - 1].dim:
                raise ValueError(f"edge {e}: selection columns do not match agent dimensions")
            mats[e] = (eij, eji)
        extra = set(self.selection.matrices) - set(self.topology.oriented_edges)
        if extra:
            raise ValueError(f"selection matrices for unknown edges {sorted(extra)}")
        object.__setattr__(self, "selection", SelectionMap(mats))

    # dimension bookkeeping
    @cached_property
    def var_ptr(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([lp.dim for lp in self.locals])]).astype(np.int64)

    @cached_property
    def edge_ptr(self) -> np.ndarray:
        dims = [self.selection.block_dim(e) for e in self.topology.oriented_edges]
        return np.concatenate([[0], np.cumsum(dims)]).astype(np.int64)

    @property
    def n(self) -> int:
        return int(self.var_ptr[-1])

    @property
    def n_bar(self) -> int:
        return int(self.edge_ptr[-1])

    @cached_property
    def coord_agent(self) -> np.ndarray:
        """1-based owning agent of every primal coordinate."""
        return np.repeat(np.arange(1, self.topology.num_agents + 1), np.diff(self.var_ptr))

    @cached_property
    def constraint_matrix(self) -> np.ndarray:
        """Dense ``H`` with ``E(x) = H x``."""
        H = np.zeros((self.n_bar, self.n))
        for k, (i, j) in enumerate(self.topology.oriented_edges):
            eij, eji = self.selection.matrices[(i, j)]
            r0, r1 = self.edge_ptr[k], self.edge_ptr[k + 1]
            H[r0:r1, self.var_ptr[i - 1] : self.var_ptr[i]] += eij
            H[r0:r1, self.var_ptr[j - 1] : self.var_ptr[j]] -= eji
        return H

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        H = self.constraint_matrix
        rows, cols = np.nonzero(H)
        ptr = np.zeros(self.n_bar + 1, dtype=np.int64)
        np.add.at(ptr, rows + 1, 1)
        return np.cumsum(ptr), cols.astype(np.int64), H[rows, cols].astype(float)

    @cached_property
    def compiled(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Kernel tables ``(cpar, atom_kind, atom_par, atom_ptr)`` per coordinate."""
        n = self.n
        cpar = np.zeros((n, _orc.NUM_COLS))
        per_coord: list[list] = [[] for _ in range(n)]
        for a, lp in enumerate(self.locals):
            base = int(self.var_ptr[a])
            for atom in lp.atoms:
                per_coord[base + atom.coord].append(atom)
            for d in range(lp.dim):
                cpar[base + d, _orc.C_RHO] = lp.rho
                cpar[base + d, _orc.C_LO], cpar[base + d, _orc.C_HI] = lp.box[d]
        flat = []
        ptr = [0]
        for d, atoms in enumerate(per_coord):
            flat.extend(atoms)
            ptr.append(len(flat))
            row = cpar[d]
            quads = [t for t in atoms if isinstance(t, Quadratic)]
            hinges = [t for t in atoms if isinstance(t, Hinge)]
            ents = [t for t in atoms if isinstance(t, Entropy)]
            row[_orc.C_LIN] = sum(t.coef for t in atoms if isinstance(t, AffineLinear))
            if not quads and not hinges and not ents:
                row[_orc.C_FAM] = _orc.FAM_LINEAR
            elif quads and not hinges and not ents:
                wsum = sum(t.weight for t in quads)
                row[_orc.C_FAM] = _orc.FAM_QUADRATIC
                row[_orc.C_QW] = wsum
                row[_orc.C_QA] = sum(t.weight * t.center for t in quads) / wsum
            elif len(hinges) == 1 and not quads and not ents:
                row[_orc.C_FAM] = _orc.FAM_HINGE
                h = hinges[0]
                row[_orc.C_HW], row[_orc.C_HA], row[_orc.C_HB] = h.slope, h.knee, h.offset
            elif len(ents) == 1 and not quads and not hinges and row[_orc.C_RHO] == 0:
                row[_orc.C_FAM] = _orc.FAM_ENTROPY
                row[_orc.C_EP] = ents[0].scale
            else:
                row[_orc.C_FAM] = _orc.FAM_GENERIC
        kind, par = _orc.encode_atoms(flat)
        return cpar, kind, par, np.asarray(ptr, dtype=np.int64)

    def agent_slice(self, i: int) -> slice:
        return slice(int(self.var_ptr[i - 1]), int(self.var_ptr[i]))

    def edge_slice(self, edge_index: int) -> slice:
        """Dual block of the 1-based edge index."""
        return slice(int(self.edge_ptr[edge_index - 1]), int(self.edge_ptr[edge_index]))

    def in_box(self, x, atol: float = 0.0) -> bool:
        cpar = self.compiled[0]
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= cpar[:, _orc.C_LO] - atol) and np.all(x <= cpar[:, _orc.C_HI] + atol))

    def is_consensus(self) -> bool:
        """Scalar agents with identity (1x1) selections on every edge."""
        if any(lp.dim != 1 for lp in self.locals):
            return False
        for eij, eji in self.selection.matrices.values():
            if eij.shape != (1, 1) or eij[0, 0] != 1.0 or eji[0, 0] != 1.0:
                return False
        return True


def consensus_problem(topology: Topology, locals: Sequence[LocalProblem]) -> ProblemInstance:
    """Identity-selection consensus problem on a shared vector variable."""
    dims = {lp.dim for lp in locals}
    if len(dims) > 1:
        raise ValueError("consensus needs equal local dimensions")
    return ProblemInstance(topology, tuple(locals), SelectionMap.consensus(topology, dims.pop() if dims else 1))


def quadratic_consensus(
    centers: Sequence[float],
    weights: float | Sequence[float] = 1.0,
    topology: Topology | None = None,
    box=None,
    rho: float = 0.0,
) -> ProblemInstance:
    """Scalar consensus with ``(w_i/2)(x - a_i)^2`` costs (path graph by default)."""
    centers = list(centers)
    if np.isscalar(weights):
        weights = [float(weights)] * len(centers)
    topology = topology or path_graph(len(centers))
    locals_ = [LocalProblem((Quadratic(a, w),), box=box, rho=rho) for a, w in zip(centers, weights)]
    return consensus_problem(topology, locals_)


# -------------------------------------------------------------- kernels


@nb.njit(cache=True)
def csr_matvec(ptr, idx, val, x, out):
    for r in range(ptr.shape[0] - 1):
        s = 0.0
        for k in range(ptr[r], ptr[r + 1]):
            s += val[k] * x[idx[k]]
        out[r] = s


@nb.njit(cache=True)
def csr_rmatvec(ptr, idx, val, y, out):
    out[:] = 0.0
    for r in range(ptr.shape[0] - 1):
        yr = y[r]
        for k in range(ptr[r], ptr[r + 1]):
            out[idx[k]] += val[k] * yr


@nb.njit(cache=True)
def ordered_sum(values):
    s = 0.0
    for v in values:
        s += v
    return s


@nb.njit(cache=True)
def dual_point(ptr, idx, val, cpar, kind, par, atom_ptr, lam, coef, x, values, g):
    """Evaluate ``Q(lam)`` with witness ``x`` and supergradient ``g = H x``.

    Returns (Q, status, failing coordinate, ties); arrays are filled in place.
    """
    csr_rmatvec(ptr, idx, val, lam, coef)
    status, bad, ties = _orc.minimize_all(cpar, kind, par, atom_ptr, coef, x, values)
    if status != 0:
        return np.nan, status, bad, ties
    csr_matvec(ptr, idx, val, x, g)
    return ordered_sum(values), status, bad, ties


@nb.njit(cache=True)
def _dual_batch(ptr, idx, val, cpar, kind, par, atom_ptr, lams, out):
    n = cpar.shape[0]
    coef = np.empty(n)
    x = np.empty(n)
    values = np.empty(n)
    g = np.empty(ptr.shape[0] - 1)
    for b in range(lams.shape[0]):
        q, status, bad, _ = dual_point(ptr, idx, val, cpar, kind, par, atom_ptr, lams[b], coef, x, values, g)
        if status != 0:
            return status, bad, b
        out[b] = q
    return 0, -1, -1


# ------------------------------------------------------------ operations


def _check_dual(problem: ProblemInstance, lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if lam.shape[0] != problem.n_bar:
        raise ValueError(f"dual vector has dimension {lam.shape[0]}, expected {problem.n_bar}")
    return lam


def _check_primal(problem: ProblemInstance, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != problem.n:
        raise ValueError(f"primal vector has dimension {x.shape[0]}, expected {problem.n}")
    return x


def dual_coefficients(problem: ProblemInstance, lam) -> np.ndarray:
    """``H^T lam``: every agent's linear coefficient, stacked."""
    lam = _check_dual(problem, lam)
    out = np.empty(problem.n)
    csr_rmatvec(*problem.csr, lam, out)
    return out


def local_linear_coefficient(problem: ProblemInstance, agent: int, lam) -> np.ndarray:
    """Coefficient ``c_i`` with ``l_i(x_i, lam) = F_i(x_i) + <c_i, x_i>``.

    ``c_i = sum_{(i,j)} E_ij^T lam_(ij) - sum_{(j,i)} E_ij^T lam_(ji)``.
    """
    return dual_coefficients(problem, lam)[problem.agent_slice(agent)]


def constraint_residual(problem: ProblemInstance, x) -> np.ndarray:
    """Stacked blocks ``E_ij x_i - E_ji x_j`` in edge order."""
    x = _check_primal(problem, x)
    out = np.empty(problem.n_bar)
    csr_matvec(*problem.csr, x, out)
    return out


def objective(problem: ProblemInstance, x) -> float:
    """Primal cost ``F(x)`` including regularizers."""
    x = _check_primal(problem, x)
    return float(sum(lp.cost(x[problem.agent_slice(a + 1)]) for a, lp in enumerate(problem.locals)))


def evaluate_lagrangian(problem: ProblemInstance, x, lam) -> float:
    """``L(x, lam) = F(x) + <lam, E(x)>`` for ``x`` inside the box."""
    x = _check_primal(problem, x)
    lam = _check_dual(problem, lam)
    if not problem.in_box(x):
        raise ValueError("x lies outside the box constraints")
    return objective(problem, x) + float(lam @ constraint_residual(problem, x))


def evaluate_dual(problem: ProblemInstance, lam) -> tuple[float, np.ndarray]:
    """Return ``(Q(lam), witness)`` using the exact local oracles.

    Raises:
        OracleError: a local problem has no finite minimizer; the agent is named.
    """
    lam = _check_dual(problem, lam)
    n = problem.n
    coef, x, values, g = np.empty(n), np.empty(n), np.empty(n), np.empty(problem.n_bar)
    q, status, bad, _ = dual_point(*problem.csr, *problem.compiled, lam, coef, x, values, g)
    raise_for_status(status, agent=int(problem.coord_agent[bad]) if status else None)
    return float(q), x


def evaluate_dual_batch(problem: ProblemInstance, lams) -> np.ndarray:
    """``Q`` at each row of ``lams``."""
    lams = np.ascontiguousarray(np.atleast_2d(np.asarray(lams, dtype=float)))
    if lams.shape[1] != problem.n_bar:
        raise ValueError(f"dual vectors have dimension {lams.shape[1]}, expected {problem.n_bar}")
    out = np.empty(lams.shape[0])
    status, bad, _ = _dual_batch(*problem.csr, *problem.compiled, lams, out)
    raise_for_status(status, agent=int(problem.coord_agent[bad]) if status else None)
    return out


@dataclass(frozen=True)
class RankReport:
    full_rank: bool
    rank: int
    n_bar: int


def check_constraint_rank(problem: ProblemInstance) -> RankReport:
    """Row rank of the stacked coupling constraints (relative tolerance 1e-10)."""
    H = problem.constraint_matrix
    if H.size == 0:
        return RankReport(True, 0, problem.n_bar)
    s = np.linalg.svd(H, compute_uv=False)
    rank = int(np.sum(s > 1e-10 * s[0])) if s[0] > 0 else 0
    return RankReport(rank == problem.n_bar, rank, problem.n_bar)


def single_agent(local: LocalProblem) -> ProblemInstance:
    topo = build_topology(1, [])
    return ProblemInstance(topo, (local,), SelectionMap({}))
