from __future__ import annotations

import math

import numpy as np
import pytest

from asyncdual import Biased, NoNoise, ZeroMean, sample_error
from asyncdual.noise import BLOCK, NoiseStream, second_moment_bound


def test_no_noise_is_zero():
    assert not sample_error(NoNoise(), 17, 0, 3).any()


def test_zero_mean_uniform_moments():
    b, dim = 0.1, 2
    draws = NoiseStream(ZeroMean(b), 0, dim).rows(0, 1_000_000)
    assert np.all(np.abs(draws) <= b)
    width = 4 * (b / math.sqrt(3)) / 1e3
    assert np.all(np.abs(draws.mean(axis=0)) <= width)
    assert (draws**2).sum(axis=1).mean() <= second_moment_bound(ZeroMean(b), dim)


def test_triangular_is_bounded_and_centered():
    draws = NoiseStream(ZeroMean(0.2, "triangular"), 3, 1).rows(0, 200_000)
    assert np.all(np.abs(draws) <= 0.2)
    assert abs(draws.mean()) < 4 * 0.2 / math.sqrt(6) / math.sqrt(200_000)


def test_constant_bias_is_exact():
    beta = (0.05, 0.05, 0.05)
    for k in (0, 5, 5000):
        assert sample_error(Biased(beta), k, 1, 3).tolist() == list(beta)


def test_bias_decay():
    e = sample_error(Biased(1.0, decay=1.0), 3, 0, 1)
    assert e[0] == pytest.approx(0.25)


def test_counter_keyed():
    s = NoiseStream(ZeroMean(1.0), 9, 2)
    rows = s.rows(BLOCK - 3, 10)
    for i in range(10):
        assert np.array_equal(rows[i], sample_error(ZeroMean(1.0), BLOCK - 3 + i, 9, 2))
    assert not np.array_equal(sample_error(ZeroMean(1.0), 0, 9, 2), sample_error(ZeroMean(1.0), 0, 10, 2))


def test_second_moment_bounds():
    assert second_moment_bound(NoNoise(), 4) == 0.0
    assert second_moment_bound(ZeroMean(0.5), 4) == pytest.approx(1.0)
    spec = Biased.with_norm(0.3, 4, ZeroMean(0.5))
    assert spec.bias_norm(4) == pytest.approx(0.3)
    assert second_moment_bound(spec, 4) == pytest.approx(0.09 + 1.0)


def test_validation():
    with pytest.raises(ValueError):
        ZeroMean(-1.0)
    with pytest.raises(ValueError):
        ZeroMean(1.0, "gaussian")
    with pytest.raises(ValueError):
        Biased(0.1, core=Biased(0.1))
    with pytest.raises(ValueError):
        Biased((0.1, 0.2)).bias_vector(3)
