from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from src.exceptions import InputError
from src.logger import logger
from src.mechanism.continuum import MechanismFamily
from src.mechanism.discrete import build_discrete_family, discrete_mechanism_grid
from src.schema import Verdict


RATIO_BAND = (1.5, 2.5)
SCALED_BAND = (0.75, 1.25)


class ConditionRow(BaseModel):
    k: int
    sigma_k: float
    sup_error: float
    lipschitz: float
    worst_theta: float
    worst_z: float
    truncation_tail: float
    mean_bias: float


class ConditionReport(BaseModel):
    """Uniform distance between discrete and continuum mechanisms per k."""

    family: str
    grid_bound: float
    n_grid: int
    rows: List[ConditionRow] = Field(default_factory=list)
    ratios: List[Optional[float]] = Field(default_factory=list)
    nonincreasing: bool = True
    verdict: Verdict = Verdict.PASS

    def records(self) -> List[dict]:
        return [
            {"k": r.k, "sup_error": r.sup_error, "lipschitz": r.lipschitz, "pass": self.verdict.value}
            for r in self.rows
        ]


class KillingReport(BaseModel):
    k_list: List[int]
    values: List[float]
    growing: bool


def condition_row(target: MechanismFamily, k: int, grid_bound: float, n_grid: int) -> ConditionRow:
    fam, sigma_k = build_discrete_family(target, k)
    thetas = np.linspace(0.0, 1.0, n_grid)
    z = np.linspace(0.0, grid_bound, n_grid)
    sup_error, lipschitz = 0.0, 0.0
    worst_theta, worst_z = 0.0, 0.0
    for theta in thetas:
        approx = discrete_mechanism_grid(k, fam, theta, z)
        error = np.abs(approx - target.phi_theta(theta, z))
        idx = int(np.argmax(error))
        if error[idx] > sup_error:
            sup_error, worst_theta, worst_z = float(error[idx]), float(theta), float(z[idx])
        lipschitz = max(lipschitz, float(np.max(np.abs(np.diff(approx)) / np.diff(z))))
    diagnostics = fam.diagnostics
    return ConditionRow(
        k=k,
        sigma_k=sigma_k,
        sup_error=sup_error,
        lipschitz=lipschitz,
        worst_theta=worst_theta,
        worst_z=worst_z,
        truncation_tail=diagnostics.truncation_tail if diagnostics else 0.0,
        mean_bias=diagnostics.mean_bias if diagnostics else 0.0,
    )


def _pair_ok(k_a: int, err_a: float, k_b: int, err_b: float) -> Tuple[bool, Optional[float]]:
    if err_b == 0.0:
        return err_a == 0.0, None
    if k_b == 2 * k_a:
        ratio = err_a / err_b
        return RATIO_BAND[0] <= ratio <= RATIO_BAND[1], ratio
    # other spacings: k·error should stay roughly constant under O(1/k) decay
    ratio = (err_a * k_a) / (err_b * k_b)
    return SCALED_BAND[0] <= ratio <= SCALED_BAND[1], ratio


def check_condition_5A(
    target: MechanismFamily, k_list: Sequence[int], grid_bound: float = 5.0, n_grid: int = 101
) -> ConditionReport:
    """sup over (θ, z) ∈ [0,1] × [0,l] of |φ^{(k)}_θ(z) - φ_θ(z)| for each k.

    PASS iff the errors are nonincreasing in k and every k → 2k ratio lies in
    [1.5, 2.5].
    """
    if not k_list:
        raise InputError("k_list must not be empty")
    if grid_bound <= 0:
        raise InputError("grid_bound must be positive")
    k_sorted = sorted(int(k) for k in k_list)
    rows = []
    for k in k_sorted:
        row = condition_row(target, k, grid_bound, n_grid)
        logger.debug(f"Condition check {target.name} k={k}: sup error {row.sup_error:.6g}")
        rows.append(row)

    nonincreasing = all(b.sup_error <= a.sup_error + 1e-12 for a, b in zip(rows, rows[1:]))
    ratios, ok = [], nonincreasing
    for a, b in zip(rows, rows[1:]):
        pair_ok, ratio = _pair_ok(a.k, a.sup_error, b.k, b.sup_error)
        ratios.append(ratio)
        ok = ok and pair_ok
    report = ConditionReport(
        family=target.name,
        grid_bound=grid_bound,
        n_grid=n_grid,
        rows=rows,
        ratios=ratios,
        nonincreasing=nonincreasing,
        verdict=Verdict.of(ok),
    )
    if report.verdict is not Verdict.PASS:
        logger.warning(f"Condition check for {target.name} did not pass: ratios {ratios}")
    return report


def bounded_killing_check(target: MechanismFamily, k_list: Sequence[int]) -> KillingReport:
    """σ_k b_k(0) = φ_0(k)/k for the recipe family; flags a sequence that
    keeps growing over k."""
    k_sorted = sorted(int(k) for k in k_list)
    values = []
    for k in k_sorted:
        fam, sigma_k = build_discrete_family(target, k, n_theta=2)
        values.append(sigma_k * fam.b(0.0))
    growing = len(values) > 1 and all(b > a * (1 + 1e-9) for a, b in zip(values, values[1:]))
    if growing:
        logger.warning(
            f"σ_k b_k(0) grows with k for {target.name} ({values[0]:.4g} -> {values[-1]:.4g}); "
            "the bounded-killing assumption of the scaling limit is not met"
        )
    return KillingReport(k_list=k_sorted, values=values, growing=growing)
