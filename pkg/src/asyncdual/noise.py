"""Supergradient error vectors: none, bounded zero-mean, and biased.

Draws are keyed by ``(seed, block)`` where a block covers ``BLOCK`` consecutive
steps, so the error for a given step never depends on how many draws other
steps consumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ["NoNoise", "ZeroMean", "Biased", "NoiseSpec", "NoiseStream", "sample_error", "second_moment_bound"]

BLOCK = 1024
DISTRIBUTIONS = ("uniform", "triangular")


@dataclass(frozen=True)
class NoNoise:
    pass


@dataclass(frozen=True)
class ZeroMean:
    """I.i.d. symmetric draws on ``[-b, b]`` per coordinate.

    ``distribution`` is ``"uniform"`` or ``"triangular"`` (bell-shaped,
    bounded support).
    """

    b: float
    distribution: str = "uniform"

    def __post_init__(self):
        if self.b < 0:
            raise ValueError(f"half-width must be non-negative, got {self.b}")
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"distribution must be one of {DISTRIBUTIONS}, got {self.distribution!r}")


@dataclass(frozen=True)
class Biased:
    """``beta_k + core draw`` with ``beta_k = bias / (1 + k)^decay``.

    ``bias`` is a per-coordinate vector, or a scalar applied to every coordinate.
    """

    bias: float | tuple[float, ...]
    core: NoNoise | ZeroMean = NoNoise()
    decay: float = 0.0

    def __post_init__(self):
        if not np.isscalar(self.bias):
            object.__setattr__(self, "bias", tuple(float(v) for v in self.bias))
        if self.decay < 0:
            raise ValueError("bias decay must be non-negative")
        if isinstance(self.core, Biased):
            raise ValueError("core noise of a biased spec must be unbiased")

    def bias_vector(self, dim: int) -> np.ndarray:
        if np.isscalar(self.bias):
            return np.full(dim, float(self.bias))
        if len(self.bias) != dim:
            raise ValueError(f"bias has {len(self.bias)} entries for dual dimension {dim}")
        return np.asarray(self.bias, dtype=float)

    def bias_norm(self, dim: int) -> float:
        """``eps_e``: the largest ``|beta_k|`` over the run."""
        return float(np.linalg.norm(self.bias_vector(dim)))

    @classmethod
    def with_norm(cls, eps: float, dim: int, core=NoNoise()) -> "Biased":
        """Constant bias along the all-ones direction with ``|beta| = eps``."""
        return cls(tuple([eps / math.sqrt(dim)] * dim), core)


NoiseSpec = NoNoise | ZeroMean | Biased


def second_moment_bound(spec, dim: int) -> float:
    """A certified ``K`` with ``E|e|^2 <= K`` (coordinatewise ``|e| <= b``)."""
    if isinstance(spec, NoNoise):
        return 0.0
    if isinstance(spec, ZeroMean):
        return dim * spec.b**2
    # the core is zero mean, so the cross term vanishes
    return spec.bias_norm(dim) ** 2 + second_moment_bound(spec.core, dim)


def _core_draw(spec, rng: np.random.Generator, shape) -> np.ndarray:
    if isinstance(spec, NoNoise) or spec.b == 0:
        return np.zeros(shape)
    if spec.distribution == "uniform":
        return rng.uniform(-spec.b, spec.b, size=shape)
    return rng.triangular(-spec.b, 0.0, spec.b, size=shape)


class NoiseStream:
    """Counter-keyed error source for one run."""

    def __init__(self, spec, seed: int, dim: int):
        self.spec = spec
        self.seed = int(seed)
        self.dim = int(dim)
        self._cache: tuple[int, np.ndarray] | None = None
        self._bias = spec.bias_vector(dim) if isinstance(spec, Biased) else None

    @property
    def silent(self) -> bool:
        return isinstance(self.spec, NoNoise) or self.dim == 0

    def block(self, index: int) -> np.ndarray:
        """Errors for steps ``index*BLOCK .. (index+1)*BLOCK - 1`` (rows)."""
        if self._cache is not None and self._cache[0] == index:
            return self._cache[1]
        shape = (BLOCK, self.dim)
        if self.silent:
            out = np.zeros(shape)
        else:
            rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(1, int(index))))
            core = self.spec.core if isinstance(self.spec, Biased) else self.spec
            out = _core_draw(core, rng, shape)
            if self._bias is not None:
                k = np.arange(index * BLOCK, (index + 1) * BLOCK, dtype=float)
                out = out + self._bias[None, :] * ((1.0 + k) ** (-self.spec.decay))[:, None]
        self._cache = (index, out)
        return out

    def rows(self, start: int, count: int) -> np.ndarray:
        """Errors for steps ``start .. start + count - 1``."""
        out = np.empty((count, self.dim))
        pos = 0
        while pos < count:
            k = start + pos
            b, off = divmod(k, BLOCK)
            take = min(count - pos, BLOCK - off)
            out[pos : pos + take] = self.block(b)[off : off + take]
            pos += take
        return out

    def at(self, k: int) -> np.ndarray:
        return self.rows(k, 1)[0]


@lru_cache(maxsize=8)
def _stream(spec, seed: int, dim: int) -> NoiseStream:
    return NoiseStream(spec, seed, dim)


def sample_error(spec, k: int, seed: int, dim: int) -> np.ndarray:
    """Error vector applied in step ``k`` (0-based) of a run with ``seed``."""
    return _stream(spec, int(seed), int(dim)).at(int(k)).copy()
