from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asyncdual import Entropy, Hinge, OracleError, Quadratic, solve_entropy, solve_hinge, solve_quadratic, solve_scalar_fallback
from asyncdual.oracles import UnboundedBelowError


def test_quadratic_vertex_and_clamp():
    r = solve_quadratic(1.0, 3.0, None, 0.0)
    assert (r.minimizer, r.value) == (3.0, 0.0)
    assert solve_quadratic(1.0, 0.0, (-10.0, 16.0), -100.0).minimizer == 16.0


def test_quadratic_with_regularizer():
    # (1/2)(x-2)^2 + x^2 -> x = 2/3
    assert solve_quadratic(1.0, 2.0, None, 0.0, rho=1.0).minimizer == pytest.approx(2.0 / 3.0)


def test_hinge_tie_on_flat_piece():
    # c = 0 leaves the flat piece [2, 10] optimal; the knee is returned
    r = solve_hinge(1.0, 2.0, 0.0, (0.0, 10.0), 0.0)
    assert r.minimizer == 2.0 and r.tie_broken and r.value == 0.0


def test_hinge_unbounded():
    with pytest.raises(UnboundedBelowError):
        solve_hinge(1.0, 2.0, 0.0, None, -0.5)
    assert issubclass(UnboundedBelowError, OracleError)


def test_entropy_clamped():
    assert solve_entropy(1.0, (0.5, 10.0), 10.0).minimizer == 0.5


def test_entropy_rejects_nonpositive_box():
    with pytest.raises(ValueError):
        solve_entropy(1.0, (0.0, 1.0), 0.0)


def test_fallback_trivial_cases():
    assert solve_scalar_fallback([Quadratic(3.0)], (0.0, 10.0), 0.0).minimizer == pytest.approx(3.0, abs=1e-10)
    assert solve_scalar_fallback([], (-1.0, 1.0), 1.0).minimizer == -1.0


def test_fallback_unbounded():
    with pytest.raises(OracleError):
        solve_scalar_fallback([], None, 1.0)


def test_entropy_with_regularizer_matches_stationarity():
    r = solve_entropy(2.0, (0.01, 10.0), 0.3, rho=0.5)
    x = r.minimizer
    assert math.log(2.0 * x) + 1.0 + 0.3 + 2 * 0.5 * x == pytest.approx(0.0, abs=1e-9)


finite = st.floats(-20, 20, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 5), finite, finite, st.floats(0, 2))
def test_fallback_agrees_with_quadratic(w, a, c, rho):
    exact = solve_quadratic(w, a, (-30.0, 30.0), c, rho)
    approx = solve_scalar_fallback([Quadratic(a, w)], (-30.0, 30.0), c, rho)
    assert approx.minimizer == pytest.approx(exact.minimizer, abs=1e-9)
    assert approx.value == pytest.approx(exact.value, abs=1e-9 * (1 + abs(exact.value)))


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 5), finite, finite, st.floats(0.01, 2))
def test_fallback_agrees_with_hinge(w, a, c, rho):
    exact = solve_hinge(w, a, 0.0, (-30.0, 30.0), c, rho)
    approx = solve_scalar_fallback([Hinge(w, a)], (-30.0, 30.0), c, rho)
    assert approx.value == pytest.approx(exact.value, abs=1e-9 * (1 + abs(exact.value)))


@settings(max_examples=200, deadline=None)
@given(st.floats(0.5, 5), st.floats(-3, 3))
def test_fallback_agrees_with_entropy(p, c):
    exact = solve_entropy(p, (1e-3, 20.0), c)
    approx = solve_scalar_fallback([Entropy(p)], (1e-3, 20.0), c)
    assert approx.minimizer == pytest.approx(exact.minimizer, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 5), st.floats(-5, 5), st.floats(-3, 3))
def test_hinge_minimizer_beats_grid(w, a, c):
    r = solve_hinge(w, a, 0.0, (-10.0, 10.0), c)
    xs = np.linspace(-10.0, 10.0, 4001)
    vals = np.maximum(-w * (xs - a), 0.0) + c * xs
    assert r.value <= vals.min() + 1e-12
