from __future__ import annotations

import numpy as np
import pytest

from asyncdual.validation import check_dual_vector, check_iterations, check_mask, check_positive, check_problem


def test_check_problem(path3):
    assert check_problem(path3) is path3
    with pytest.raises(TypeError):
        check_problem([1, 2])


def test_check_dual_vector(path3):
    assert check_dual_vector(path3, [[1.0], [2.0]]).tolist() == [1.0, 2.0]
    with pytest.raises(ValueError):
        check_dual_vector(path3, [1.0, np.inf])


def test_check_mask():
    assert check_mask([True, False], 2).dtype == np.uint8
    with pytest.raises(ValueError):
        check_mask([2, 0], 2)
    with pytest.raises(ValueError):
        check_mask([1], 2)


def test_check_positive_and_iterations():
    assert check_positive("a", 2) == 2.0
    for bad in (0, -1, np.inf, np.nan):
        with pytest.raises(ValueError):
            check_positive("a", bad)
    assert check_iterations(5.0) == 5
    for bad in (0, 2.5, True):
        with pytest.raises(ValueError):
            check_iterations(bad)
