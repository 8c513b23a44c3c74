"""
Fixed-step time stepping for autonomous ODEs u' = rhs(u).

Classes
-------

- `ODEConfig` -- step size and horizon limit
- `RK4` -- classical 4th order Runge-Kutta
"""

import math
from typing import Callable, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.config import SolverSettings, config
from src.exceptions import DomainError


class ODEConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    step: float = Field(1e-3, gt=0, description="Time step h")
    method: Literal["rk4"] = "rk4"
    max_time: float = Field(100.0, gt=0)

    @model_validator(mode="after")
    def _step_fits(self) -> "ODEConfig":
        if self.step > self.max_time:
            raise ValueError("step must not exceed max_time")
        return self

    @classmethod
    def from_settings(cls, settings: SolverSettings) -> "ODEConfig":
        return cls(step=settings.step, max_time=settings.max_time)

    @classmethod
    def default(cls) -> "ODEConfig":
        return cls.from_settings(config.solver)

    def halved(self) -> "ODEConfig":
        return self.model_copy(update={"step": self.step / 2})

    def steps_for(self, t: float) -> int:
        """n = ceil(t/h) steps of length t/n."""
        if t < 0 or t > self.max_time:
            raise DomainError(f"time {t} outside [0, {self.max_time}]")
        return max(1, math.ceil(t / self.step - 1e-12)) if t > 0 else 0


class RK4:
    """
    4th order Runge-Kutta time-stepping.

    Parameters
    ----------

    rhs : callable
        Right-hand side, maps the state array to its time derivative
    u0 : array_like
        Initial state
    post_step : callable, optional
        Applied to the state after every step (e.g. clamping); returns the
        adjusted state
    """

    def __init__(
        self,
        rhs: Callable[[np.ndarray], np.ndarray],
        u0,
        post_step: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ):
        self.rhs = rhs
        self.u = np.array(u0, dtype=float)
        self.post_step = post_step
        self.t = 0.0

    def step(self, dt: float) -> np.ndarray:
        u = self.u
        k1 = self.rhs(u)
        k2 = self.rhs(u + 0.5 * dt * k1)
        k3 = self.rhs(u + 0.5 * dt * k2)
        k4 = self.rhs(u + dt * k3)
        u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if self.post_step is not None:
            u = self.post_step(u)
        self.u = u
        self.t += dt
        return u

    def advance(self, t: float, ode: ODEConfig) -> np.ndarray:
        n = ode.steps_for(t)
        if n:
            dt = t / n
            for _ in range(n):
                self.step(dt)
        return self.u
