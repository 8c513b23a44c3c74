from typing import Dict, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from src.mechanism.continuum import Mechanism, MechanismFamily
from src.mechanism.discrete import MEAN_BIAS, MONOTONE_TOL, DiscreteFlowFamily


CONVEXITY_TOL = 1e-9


class AdmissibilityCheck(BaseModel):
    """Monotonicity and normalization of a discrete family on a θ-grid."""

    admissible: bool
    worst_violation: float = Field(0.0, description="Most negative monotone increment found")
    worst_index: Optional[int] = None
    worst_theta: Optional[float] = None
    normalization_error: float = 0.0
    mean_step_coarse: float = 0.0
    mean_step_refined: float = 0.0
    mean_continuous: bool = True

    def summary(self) -> str:
        if self.admissible:
            return "admissible"
        return (
            f"increment {self.worst_violation:.3e} at index {self.worst_index}, θ={self.worst_theta}; "
            f"normalization error {self.normalization_error:.1e}; "
            f"mean continuous: {self.mean_continuous}"
        )


def _law_table(fam: DiscreteFlowFamily, thetas: Sequence[float]) -> np.ndarray:
    laws = [fam.law_at(t) for t in thetas]
    width = max(law.probs.size for law in laws)
    table = np.zeros((len(laws), width))
    for row, law in zip(table, laws):
        row[: law.probs.size] = law.probs
    return table


def _max_mean_step(fam: DiscreteFlowFamily, thetas: Sequence[float]) -> float:
    means = np.array([fam.mean_at(t) for t in thetas])
    return float(np.max(np.abs(np.diff(means)))) if means.size > 1 else 0.0


def check_discrete_admissibility(
    fam: DiscreteFlowFamily, thetas: Sequence[float], tol: float = MONOTONE_TOL
) -> AdmissibilityCheck:
    """p_i(θ) nondecreasing for i >= 1, b(θ) = p_0(θ) nonincreasing, Σp = 1,
    and θ ↦ g'_θ(1) continuous.

    Continuity is judged heuristically: halving every θ-step must shrink the
    largest successive difference of the means.
    """
    thetas = sorted(float(t) for t in thetas)
    table = _law_table(fam, thetas)
    normalization = float(np.max(np.abs(table.sum(axis=1) - 1.0)))

    worst, worst_index, worst_theta = 0.0, None, None
    if len(thetas) > 1:
        steps = np.diff(table, axis=0)
        steps[:, 0] = -steps[:, 0]
        flat = int(np.argmin(steps))
        row, col = np.unravel_index(flat, steps.shape)
        if steps[row, col] < 0:
            worst, worst_index, worst_theta = float(steps[row, col]), int(col), thetas[row + 1]

    coarse = _max_mean_step(fam, thetas)
    refined_thetas = sorted(set(thetas) | {0.5 * (a + b) for a, b in zip(thetas, thetas[1:])})
    refined = _max_mean_step(fam, refined_thetas)
    # the fold perturbs each mean by up to MEAN_BIAS
    continuous = coarse <= 1e-9 or refined <= 0.75 * coarse + 2 * MEAN_BIAS

    admissible = worst >= -tol and normalization <= 1e-12 and continuous
    return AdmissibilityCheck(
        admissible=admissible,
        worst_violation=worst,
        worst_index=worst_index,
        worst_theta=worst_theta,
        normalization_error=normalization,
        mean_step_coarse=coarse,
        mean_step_refined=refined,
        mean_continuous=continuous,
    )


class MechanismCheck(BaseModel):
    convex: bool
    min_second_difference: float
    theta_monotone: bool
    max_theta_increase: float
    derivative_constants: Dict[str, float]
    derivative_consistent: bool
    derivative_bound: float

    @property
    def ok(self) -> bool:
        return self.convex and self.theta_monotone and self.derivative_consistent


def min_second_difference(mech: Mechanism, z_max: float = 10.0, step: float = 0.01) -> float:
    z = np.arange(0.0, z_max + 0.5 * step, step)
    values = mech.phi(z)
    return float(np.min(values[2:] - 2.0 * values[1:-1] + values[:-2]))


def max_theta_increase(family: MechanismFamily, n_grid: int = 101, z_max: float = 10.0) -> float:
    """Largest increase of θ ↦ φ_θ(z) over neighbouring grid θ (<= 0 when nonincreasing)."""
    thetas = np.linspace(0.0, 1.0, n_grid)
    z = np.linspace(0.0, z_max, n_grid)
    table = np.array([family.phi_theta(t, z) for t in thetas])
    return float(np.max(np.diff(table, axis=0)))


def derivative_constants(
    family: MechanismFamily,
    deltas: Sequence[float] = (1e-3, 1e-4),
    n_grid: int = 21,
    z_max: float = 5.0,
) -> Dict[str, float]:
    """C_δ = max |(φ_θ(z) - φ_{θ+δ}(z))/δ - ψ_θ(z)| / δ over a (θ, z) grid."""
    z = np.linspace(0.0, z_max, n_grid)
    constants = {}
    for delta in deltas:
        thetas = np.linspace(0.0, 1.0 - delta, n_grid)
        worst = 0.0
        for t in thetas:
            quotient = (family.phi_theta(t, z) - family.phi_theta(t + delta, z)) / delta
            worst = max(worst, float(np.max(np.abs(quotient - family.psi(t, z)))))
        constants[f"{delta:g}"] = worst / delta
    return constants


def check_mechanism_family(family: MechanismFamily, n_grid: int = 101) -> MechanismCheck:
    second = min_second_difference(family.base)
    increase = max_theta_increase(family, n_grid)
    constants = derivative_constants(family)
    values = list(constants.values())
    # C must stay bounded when δ shrinks; rounding adds O(1e-16/δ²)
    consistent = all(np.isfinite(values)) and values[-1] <= 2.0 * values[0] + 1e-4
    return MechanismCheck(
        convex=second >= -CONVEXITY_TOL,
        min_second_difference=second,
        theta_monotone=increase <= MONOTONE_TOL,
        max_theta_increase=increase,
        derivative_constants=constants,
        derivative_consistent=bool(consistent),
        derivative_bound=family.derivative_bound(),
    )
