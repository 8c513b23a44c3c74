import numpy as np
import pytest
from pydantic import ValidationError

from src.cumulant.grid import GridFunction


def test_points_and_indices(small_grid):
    assert small_grid.points[0] == 0.0 and small_grid.points[-1] == 1.0
    assert small_grid.index_of(0.5) == 10
    assert small_grid.index_of(0.52) == 10
    assert small_grid.upper_index(0.52) == 11
    assert small_grid.upper_index(0.5) == 10
    assert small_grid.is_point(0.35)
    assert not small_grid.is_point(0.33)


def test_step_function_is_left_continuous(small_grid):
    f = GridFunction.step(small_grid, [0.5, 1.0], [2.0, 1.0])
    assert f(0.0) == 3.0
    assert f(0.5) == 3.0
    assert f(0.51) == 1.0
    assert f(1.0) == 1.0
    assert f.is_nonincreasing()


def test_step_levels_must_be_grid_points(small_grid):
    with pytest.raises(ValueError):
        GridFunction.step(small_grid, [0.33], [1.0])


def test_rejects_negative_or_misshaped_values(small_grid):
    with pytest.raises(ValidationError):
        GridFunction(grid=small_grid, values=-np.ones(21))
    with pytest.raises(ValidationError):
        GridFunction(grid=small_grid, values=np.ones(5))


def test_values_are_read_only(small_grid):
    f = GridFunction.from_callable(small_grid, lambda x: x)
    with pytest.raises(ValueError):
        f.values[0] = 1.0
    assert f.at_points([0.25, 1.0]) == pytest.approx([0.25, 1.0])


def test_off_grid_reads_take_the_value_above(small_grid):
    f = GridFunction.from_callable(small_grid, lambda x: x)
    # (0.5, 0.55] carries f(0.55)
    assert f(0.52) == pytest.approx(0.55)
    assert f(0.5) == pytest.approx(0.5)
    assert f(0.0) == 0.0
    assert f.at_points([0.01, 0.99]) == pytest.approx([0.05, 1.0])
