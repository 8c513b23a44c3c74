from typing import Callable, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.config import config


# absorbs float noise in x*M when x is meant to be a grid point
_SNAP = 1e-9


class UniformGrid(BaseModel):
    """Uniform partition 0 = x_0 < ... < x_M = 1 of [0, 1]."""

    model_config = ConfigDict(frozen=True)

    m: int = Field(..., ge=1, description="Number of cells; the grid has m+1 points")

    @property
    def points(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.m + 1)

    @property
    def step(self) -> float:
        return 1.0 / self.m

    def index_of(self, x: float) -> int:
        """Largest j with x_j <= x."""
        if x <= 0.0:
            return 0
        return int(min(np.floor(x * self.m + _SNAP), self.m))

    def upper_index(self, x: float) -> int:
        """Smallest j with x_j >= x."""
        if x <= 0.0:
            return 0
        return int(min(np.ceil(x * self.m - _SNAP), self.m))

    def is_point(self, x: float) -> bool:
        return abs(x * self.m - round(x * self.m)) <= _SNAP


def shared_grid() -> UniformGrid:
    """The configured grid shared by every grid function and θ-quadrature."""
    return UniformGrid(m=config.solver.grid_points)


class GridFunction(BaseModel):
    """Nonnegative function on a UniformGrid, piecewise constant and
    left-continuous between grid points.

    The cell (x_j, x_{j+1}] carries f(x_{j+1}), so a read at an off-grid x
    takes the value at the grid point above it (UniformGrid.upper_index)
    and f(0) = values[0]. Step functions 1{x <= a} with a on the grid are
    represented exactly under this convention.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: UniformGrid
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _as_array(cls, value) -> np.ndarray:
        values = np.array(value, dtype=float).reshape(-1)
        values.setflags(write=False)
        return values

    @model_validator(mode="after")
    def _check_values(self) -> "GridFunction":
        if self.values.size != self.grid.m + 1:
            raise ValueError(
                f"expected {self.grid.m + 1} values, got {self.values.size}"
            )
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("grid function values must be finite and nonnegative")
        return self

    @classmethod
    def constant(cls, grid: UniformGrid, value: float) -> "GridFunction":
        return cls(grid=grid, values=np.full(grid.m + 1, float(value)))

    @classmethod
    def from_callable(cls, grid: UniformGrid, fn: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        return cls(grid=grid, values=np.asarray(fn(grid.points), dtype=float))

    @classmethod
    def step(
        cls, grid: UniformGrid, levels: Sequence[float], coefficients: Sequence[float]
    ) -> "GridFunction":
        """f(x) = Σ λ_i 1{x <= a_i}, so that ⟨μ, f⟩ = Σ λ_i μ[0, a_i].

        Levels must be grid points.
        """
        values = np.zeros(grid.m + 1)
        for level, coefficient in zip(levels, coefficients):
            if not grid.is_point(level):
                raise ValueError(f"level {level} is not a point of the {grid.m}-cell grid")
            values[: grid.index_of(level) + 1] += coefficient
        return cls(grid=grid, values=values)

    def __call__(self, x: float) -> float:
        return float(self.values[self.grid.upper_index(x)])

    def at_points(self, xs: Sequence[float]) -> np.ndarray:
        return np.array([self.values[self.grid.upper_index(x)] for x in xs])

    def is_nonincreasing(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.diff(self.values) <= tol))
