"""Test functions f paired with level measures and fed to the cumulant solver."""

from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.config import FunctionSpec
from src.cumulant.grid import GridFunction, UniformGrid
from src.exceptions import GridMismatchError, InputError
from src.schema import SmoothKind


_SMOOTH = {
    SmoothKind.IDENTITY: lambda x: np.asarray(x, dtype=float),
    SmoothKind.EXP_NEG: lambda x: np.exp(-np.asarray(x, dtype=float)),
    SmoothKind.ONE: lambda x: np.ones_like(np.asarray(x, dtype=float)),
}


class TestFunction(BaseModel):
    """Either a step function Σ λ_i 1{x <= a_i} or a named smooth function."""

    model_config = ConfigDict(frozen=True)

    __test__ = False  # not a pytest class

    kind: str = Field(..., pattern="^(step|smooth)$")
    levels: Tuple[float, ...] = ()
    coefficients: Tuple[float, ...] = ()
    smooth: Optional[SmoothKind] = None

    @model_validator(mode="after")
    def _consistent(self) -> "TestFunction":
        if self.kind == "step":
            if not self.levels or len(self.levels) != len(self.coefficients):
                raise ValueError("step functions need matching levels and coefficients")
            if any(c < 0 for c in self.coefficients):
                raise ValueError("step coefficients must be nonnegative")
            if any(not 0 <= a <= 1 for a in self.levels):
                raise ValueError("step levels must lie in [0, 1]")
        elif self.smooth is None:
            raise ValueError("smooth functions need a name")
        return self

    @classmethod
    def step(cls, levels: Sequence[float], coefficients: Sequence[float]) -> "TestFunction":
        return cls(kind="step", levels=tuple(levels), coefficients=tuple(coefficients))

    @classmethod
    def named(cls, name: str) -> "TestFunction":
        return cls(kind="smooth", smooth=SmoothKind(name))

    @classmethod
    def from_spec(cls, spec: FunctionSpec) -> "TestFunction":
        if spec.kind == "step":
            return cls.step(spec.levels, spec.coefficients)
        return cls.named(spec.name)

    @property
    def label(self) -> str:
        if self.kind == "smooth":
            return f"f={self.smooth.value}"
        terms = "+".join(f"{c:g}*1[x<={a:g}]" for a, c in zip(self.levels, self.coefficients))
        return f"f={terms}"

    def values(self, xs: Sequence[float]) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if self.kind == "smooth":
            return _SMOOTH[self.smooth](xs)
        out = np.zeros_like(xs)
        for level, coefficient in zip(self.levels, self.coefficients):
            out += coefficient * (xs <= level + 1e-12)
        return out

    def level_values(self, levels: Sequence[float]) -> np.ndarray:
        """f(q_j): the values the measure pairing ⟨Y, f⟩ uses."""
        values = self.values(levels)
        if np.any(values < 0):
            raise InputError(f"{self.label} is negative on the levels")
        return values

    def grid_function(self, grid: UniformGrid) -> GridFunction:
        if self.kind == "step":
            try:
                return GridFunction.step(grid, self.levels, self.coefficients)
            except ValueError as e:
                raise GridMismatchError(str(e))
        return GridFunction.from_callable(grid, _SMOOTH[self.smooth])

    def projected(self, grid: UniformGrid, levels: Sequence[float]) -> GridFunction:
        """The grid function equal to f(q_j) on (q_{j-1}, q_j] and 0 above q_n.

        Its pairing with any measure carried by the levels equals the
        level pairing of f; for step functions with levels among the q_j
        it is f itself on the grid.
        """
        levels = np.asarray(levels, dtype=float)
        for q in levels:
            if not grid.is_point(q):
                raise GridMismatchError(f"level {q} is not a point of the {grid.m}-cell grid")
        level_values = self.level_values(levels)
        padded = np.append(level_values, 0.0)

        def fn(xs: np.ndarray) -> np.ndarray:
            return padded[np.searchsorted(levels, xs - 1e-12, side="left")]

        return GridFunction.from_callable(grid, fn)


def functions_from_specs(specs: Sequence[FunctionSpec]) -> List[TestFunction]:
    return [TestFunction.from_spec(spec) for spec in specs]
