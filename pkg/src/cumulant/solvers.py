import math
from typing import Optional, Sequence, Union

import numpy as np

from src.cumulant.grid import GridFunction, UniformGrid
from src.cumulant.rk4 import RK4, ODEConfig
from src.exceptions import BlowupError, DomainError, InputError
from src.logger import logger
from src.mechanism.continuum import Mechanism, MechanismFamily, check_shared_grid, nonlocal_operator
from src.mechanism.offspring import OffspringLaw


CLAMP_WARN = 1e-9
BLOWUP = 1e12


class _Clamp:
    """Projects the state onto [lower, upper] and remembers the largest correction."""

    def __init__(self, lower: float = 0.0, upper: Optional[float] = None):
        self.lower = lower
        self.upper = upper
        self.largest = 0.0

    def __call__(self, u: np.ndarray) -> np.ndarray:
        clipped = np.clip(u, self.lower, self.upper)
        self.largest = max(self.largest, float(np.max(np.abs(clipped - u))) if u.size else 0.0)
        return clipped

    def report(self, what: str) -> None:
        if self.largest > CLAMP_WARN:
            logger.warning(f"{what}: clamped a value by {self.largest:.3e}")


def pgf_flow(law: OffspringLaw, sigma: float, t: float, s0, ode: Optional[ODEConfig] = None) -> np.ndarray:
    """F_t(s0) for an array of starting points s0."""
    ode = ode or ODEConfig.default()
    s0 = np.asarray(s0, dtype=float)
    if np.any(s0 < 0) or np.any(s0 > 1):
        raise DomainError("starting points must lie in [0, 1]")
    clamp = _Clamp(0.0, 1.0)
    solver = RK4(lambda f: sigma * (law.pgf(f) - f), s0, post_step=clamp)
    result = solver.advance(t, ode)
    clamp.report("generating-function ODE")
    return np.where(s0 == 1.0, 1.0, result)


def solve_pgf_ode(
    law: OffspringLaw, sigma: float, t: float, s0: float, ode: Optional[ODEConfig] = None
) -> float:
    """F_t(s0) solving F' = σ(g(F) - F), F_0 = s0."""
    if sigma <= 0:
        raise DomainError(f"σ must be positive, got {sigma}")
    if t == 0:
        return float(s0)
    return float(pgf_flow(law, sigma, t, [s0], ode)[0])


def solve_cb_cumulant(
    mech: Union[Mechanism, MechanismFamily],
    lam: float,
    t: float,
    theta: Optional[float] = None,
    ode: Optional[ODEConfig] = None,
) -> float:
    """v_t(λ) solving v' = -φ(v), v_0 = λ; for a family φ = φ_θ (θ = 0 by default)."""
    if lam < 0:
        raise DomainError(f"λ must be nonnegative, got {lam}")
    if lam == 0 or t == 0:
        return float(lam)
    ode = ode or ODEConfig.default()
    if isinstance(mech, MechanismFamily):
        family, at = mech, 0.0 if theta is None else theta
        phi = lambda v: family.phi_theta(at, v)  # noqa: E731
    else:
        phi = mech.phi
    clamp = _Clamp(0.0)
    solver = RK4(lambda v: -phi(v), [lam], post_step=clamp)
    result = float(solver.advance(t, ode)[0])
    clamp.report("CB cumulant ODE")
    return result


def solve_nonlocal_cumulant(
    family: MechanismFamily,
    f: GridFunction,
    t: float,
    ode: Optional[ODEConfig] = None,
    grid: Optional[UniformGrid] = None,
) -> GridFunction:
    """V_t f by the method of lines: dV(x_j)/dt = -φ_0(V(x_j)) + Ψ(x_j, V)."""
    grid = check_shared_grid(f, grid)
    if t == 0:
        return f
    ode = ode or ODEConfig.default()
    operator = nonlocal_operator(family, grid)
    base = family.base

    def rhs(v: np.ndarray) -> np.ndarray:
        return -base.phi(v) + operator(v)

    clamp = _Clamp(0.0)
    solver = RK4(rhs, f.values, post_step=clamp)
    n = ode.steps_for(t)
    for _ in range(n):
        values = solver.step(t / n)
        peak = float(np.max(values))
        if not math.isfinite(peak) or peak > BLOWUP:
            logger.error(f"Nonlocal cumulant left the representable range at t={solver.t:.4g}")
            raise BlowupError(f"V_t f reached {peak:.3e} at t={solver.t:.4g} (limit {BLOWUP:g})")
    clamp.report("nonlocal cumulant equation")
    return GridFunction(grid=grid, values=solver.u)


def laplace_prediction(
    masses: Sequence[float], vtf: GridFunction, points: Optional[Sequence[float]] = None
) -> float:
    """exp(-Σ_j mass_j V_t f(x_j)); masses sit on the grid points unless
    ``points`` gives their locations."""
    masses = np.asarray(masses, dtype=float)
    if np.any(masses < 0):
        raise InputError("initial masses must be nonnegative")
    if points is None:
        if masses.size != vtf.values.size:
            raise InputError(f"need {vtf.values.size} grid masses, got {masses.size}")
        values = vtf.values
    else:
        values = vtf.at_points(points)
        if masses.size != values.size:
            raise InputError("need one mass per point")
    return float(math.exp(-float(np.dot(masses, values))))


def discrete_laplace_oracle(
    law: OffspringLaw, sigma_k: float, t: float, lam: float, k: int, x0: int, ode: Optional[ODEConfig] = None
) -> float:
    """E exp(-λ X_t / k) = F_t(e^{-λ/k})^{x0} for the single-level process."""
    return solve_pgf_ode(law, sigma_k, t, math.exp(-lam / k), ode) ** x0
