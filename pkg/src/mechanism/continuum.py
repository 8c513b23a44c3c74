from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as P
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate

from src.cumulant.grid import GridFunction, UniformGrid, shared_grid
from src.exceptions import DomainError, GridMismatchError


QUAD_TOL = 1e-10
PROFILE_GRID = np.linspace(0.0, 1.0, 1001)


class ThetaProfile(BaseModel):
    """A nonnegative function of θ on [0, 1] with its antiderivative from 0.

    Polynomial profiles integrate in closed form; callables fall back to
    adaptive quadrature.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    coefficients: Optional[Tuple[float, ...]] = None
    func: Optional[Callable[[float], float]] = None

    @model_validator(mode="after")
    def _one_form(self) -> "ThetaProfile":
        if (self.coefficients is None) == (self.func is None):
            raise ValueError("give exactly one of coefficients or func")
        if np.any(self.value(PROFILE_GRID) < -1e-12):
            raise ValueError("θ-profiles must be nonnegative on [0, 1]")
        return self

    @classmethod
    def constant(cls, value: float) -> "ThetaProfile":
        return cls(coefficients=(float(value),))

    @classmethod
    def polynomial(cls, coefficients) -> "ThetaProfile":
        """Coefficients in increasing degree."""
        return cls(coefficients=tuple(float(c) for c in coefficients))

    @classmethod
    def from_callable(cls, func: Callable[[float], float]) -> "ThetaProfile":
        return cls(func=func)

    @property
    def is_polynomial(self) -> bool:
        return self.coefficients is not None

    @property
    def is_zero(self) -> bool:
        return self.is_polynomial and not any(self.coefficients)

    def value(self, theta):
        if self.is_polynomial:
            return P.polyval(np.asarray(theta, dtype=float), self.coefficients)
        if np.ndim(theta) == 0:
            return float(self.func(float(theta)))
        return np.array([self.func(float(t)) for t in np.ravel(theta)]).reshape(np.shape(theta))

    def integral(self, theta):
        """∫_0^θ of the profile."""
        if self.is_polynomial:
            return P.polyval(np.asarray(theta, dtype=float), P.polyint(self.coefficients))
        if np.ndim(theta) == 0:
            return self._quad(float(theta))
        return np.array([self._quad(float(t)) for t in np.ravel(theta)]).reshape(np.shape(theta))

    def _quad(self, theta: float) -> float:
        if theta <= 0.0:
            return 0.0
        result, _ = integrate.quad(self.func, 0.0, theta, epsabs=QUAD_TOL, epsrel=QUAD_TOL)
        return float(result)

    def sup(self) -> float:
        return float(np.max(self.value(PROFILE_GRID)))


ZERO_PROFILE = ThetaProfile.constant(0.0)


class Mechanism(BaseModel):
    """Branching mechanism
    φ(z) = bz + σ²z²/2 + ∫(e^{-zu} - 1 + zu) m(du)
    with m a finite list of atoms plus an exponential density γ_m ρ_m e^{-ρ_m u}.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    b: float = 0.0
    sigma2: float = Field(0.0, ge=0)
    atoms: Tuple[Tuple[float, float], ...] = ()
    gamma_m: float = Field(0.0, ge=0)
    rho_m: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def _check_atoms(self) -> "Mechanism":
        for u, mass in self.atoms:
            if not u > 0 or mass < 0:
                raise ValueError(f"jump atom (u={u}, mass={mass}) needs u > 0 and mass >= 0")
        return self

    @property
    def jump_mean(self) -> float:
        """∫ u m(du)"""
        return sum(mass * u for u, mass in self.atoms) + self.gamma_m / self.rho_m

    def jump_part(self, z):
        z = np.asarray(z, dtype=float)
        out = self.gamma_m * z * z / (self.rho_m * (self.rho_m + z))
        for u, mass in self.atoms:
            out = out + mass * (np.expm1(-z * u) + z * u)
        return out

    def phi(self, z):
        z = np.asarray(z, dtype=float)
        return self.b * z + 0.5 * self.sigma2 * z * z + self.jump_part(z)


class MechanismFamily(BaseModel):
    """θ-indexed mechanisms φ_θ = φ_0 - ∫_0^θ ψ_s ds on θ ∈ [0, 1] with
    ψ_θ(z) = h_θ z + γ_θ z/(ρ + z)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    base: Mechanism
    h: ThetaProfile = ZERO_PROFILE
    gamma: ThetaProfile = ZERO_PROFILE
    rho: float = Field(1.0, gt=0)
    name: str = "custom"

    @model_validator(mode="after")
    def _bounded_derivative(self) -> "MechanismFamily":
        bound = self.derivative_bound()
        if not np.isfinite(bound):
            raise ValueError(f"sup of h_θ + γ_θ/ρ is not finite ({bound})")
        return self

    @property
    def is_local(self) -> bool:
        return self.h.is_zero and self.gamma.is_zero

    def derivative_bound(self) -> float:
        return float(np.max(self.h.value(PROFILE_GRID) + self.gamma.value(PROFILE_GRID) / self.rho))

    def psi(self, theta, z):
        z = np.asarray(z, dtype=float)
        return self.h.value(theta) * z + self.gamma.value(theta) * z / (self.rho + z)

    def phi_theta(self, theta, z):
        z = np.asarray(z, dtype=float)
        return (
            self.base.phi(z)
            - self.h.integral(theta) * z
            - self.gamma.integral(theta) * z / (self.rho + z)
        )


def _check_theta(theta: float) -> None:
    if not 0.0 <= theta <= 1.0:
        raise DomainError(f"θ = {theta!r} outside [0, 1]")


def _check_z(z: float) -> None:
    if z < 0:
        raise DomainError(f"z = {z!r} must be nonnegative")


def eval_phi(mech: Mechanism, z: float) -> float:
    _check_z(z)
    if z == 0:
        return 0.0
    return float(mech.phi(z))


def eval_psi(family: MechanismFamily, theta: float, z: float) -> float:
    _check_theta(theta)
    _check_z(z)
    if z == 0:
        return 0.0
    return float(family.psi(theta, z))


def eval_phi_theta(family: MechanismFamily, theta: float, z: float) -> float:
    _check_theta(theta)
    _check_z(z)
    if z == 0:
        return 0.0
    if theta == 0:
        return float(family.base.phi(z))
    return float(family.phi_theta(theta, z))


class NonlocalOperator:
    """Ψ(x_j, f) = ∫_0^1 f(x_j ∨ θ) h_θ dθ + ∫_0^1 γ_θ f(x_j ∨ θ)/(ρ + f(x_j ∨ θ)) dθ
    at every grid point.

    f is read as f(x_{i+1}) on each cell (x_i, x_{i+1}], which is exact for
    the left-continuous steps 1{x <= a} with a on the grid; the θ-integrals
    then reduce to the cell integrals of h and γ, computed once per grid.
    """

    def __init__(self, family: MechanismFamily, grid: UniformGrid):
        self.family = family
        self.grid = grid
        points = grid.points
        h_prefix = np.asarray(family.h.integral(points), dtype=float)
        g_prefix = np.asarray(family.gamma.integral(points), dtype=float)
        self._h_prefix = h_prefix
        self._g_prefix = g_prefix
        self._h_cells = np.diff(h_prefix)
        self._g_cells = np.diff(g_prefix)
        self.is_zero = family.is_local

    @staticmethod
    def _suffix_sum(a: np.ndarray) -> np.ndarray:
        """Σ_{i >= j} a_i for j = 0..M, with 0 at j = M."""
        return np.append(np.cumsum(a[::-1])[::-1], 0.0)

    def __call__(self, values: np.ndarray) -> np.ndarray:
        if self.is_zero:
            return np.zeros_like(values)
        ratio = values / (self.family.rho + values)
        return (
            values * self._h_prefix
            + self._suffix_sum(values[1:] * self._h_cells)
            + ratio * self._g_prefix
            + self._suffix_sum(ratio[1:] * self._g_cells)
        )


@lru_cache(maxsize=32)
def nonlocal_operator(family: MechanismFamily, grid: UniformGrid) -> NonlocalOperator:
    return NonlocalOperator(family, grid)


def check_shared_grid(f: GridFunction, grid: Optional[UniformGrid] = None) -> UniformGrid:
    expected = grid if grid is not None else shared_grid()
    if f.grid != expected:
        raise GridMismatchError(
            f"grid function lives on a {f.grid.m}-cell grid, expected {expected.m} cells"
        )
    return expected


def eval_big_psi(
    family: MechanismFamily, x: float, f: GridFunction, grid: Optional[UniformGrid] = None
) -> float:
    """Ψ(x, f), read left-continuously like any GridFunction: an off-grid x
    takes the value at the grid point above it."""
    _check_theta(x)
    grid = check_shared_grid(f, grid)
    values = nonlocal_operator(family, grid)(np.asarray(f.values))
    return float(values[grid.upper_index(x)])
