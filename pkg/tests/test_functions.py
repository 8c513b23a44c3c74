import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.config import FunctionSpec
from src.cumulant.grid import UniformGrid
from src.exceptions import GridMismatchError
from src.experiment.functions import TestFunction, functions_from_specs


def test_step_values_and_label():
    f = TestFunction.step([0.5, 1.0], [1.0, 2.0])
    assert f.values([0.25, 0.5, 0.75]) == pytest.approx([3.0, 3.0, 2.0])
    assert f.label == "f=1*1[x<=0.5]+2*1[x<=1]"


def test_smooth_functions():
    assert TestFunction.named("x").values([0.3]) == pytest.approx([0.3])
    assert TestFunction.named("exp(-x)").values([1.0]) == pytest.approx([math.exp(-1.0)])
    assert TestFunction.named("1").label == "f=1"


def test_invalid_functions():
    with pytest.raises(ValidationError):
        TestFunction.step([0.5], [-1.0])
    with pytest.raises(ValidationError):
        TestFunction.step([1.5], [1.0])
    with pytest.raises(ValidationError):
        TestFunction(kind="smooth")
    with pytest.raises(ValueError):
        TestFunction.named("sin")


def test_zero_function(small_grid):
    zero = TestFunction.step([1.0], [0.0])
    assert np.all(zero.grid_function(small_grid).values == 0.0)


def test_grid_function_needs_grid_levels():
    with pytest.raises(GridMismatchError):
        TestFunction.step([0.33], [1.0]).grid_function(UniformGrid(m=20))


def test_projection_onto_levels(small_grid):
    f = TestFunction.named("x")
    projected = f.projected(small_grid, [0.5, 1.0])
    assert projected(0.0) == pytest.approx(0.5)
    assert projected(0.5) == pytest.approx(0.5)
    assert projected(0.55) == pytest.approx(1.0)
    assert projected(1.0) == pytest.approx(1.0)
    with pytest.raises(GridMismatchError):
        f.projected(small_grid, [0.33, 1.0])


def test_projection_of_step_is_the_step(small_grid):
    f = TestFunction.step([0.5, 1.0], [1.0, 1.0])
    assert np.allclose(f.projected(small_grid, [0.5, 1.0]).values, f.grid_function(small_grid).values)


def test_from_specs():
    specs = [
        FunctionSpec(kind="step", levels=[0.5], coefficients=[2.0]),
        FunctionSpec(kind="smooth", name="exp(-x)"),
    ]
    functions = functions_from_specs(specs)
    assert functions[0].levels == (0.5,)
    assert functions[1].smooth.value == "exp(-x)"
