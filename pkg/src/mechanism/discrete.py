import math
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats

from src.exceptions import AdmissibilityError, DomainError
from src.logger import logger
from src.mechanism.continuum import MechanismFamily
from src.mechanism.offspring import OffspringLaw, eval_pgf


TAIL_MASS = 1e-12
MEAN_BIAS = 1e-10
SIGMA_CAP_FACTOR = 1e6
MONOTONE_TOL = 1e-12
DEFAULT_THETA_POINTS = 101
EXPAND_CACHE = 4096


class ConstantLaw:
    """θ-independent law."""

    def __init__(self, law: OffspringLaw):
        self.law = law

    def __call__(self, theta: float) -> OffspringLaw:
        return self.law


class RecipeDiagnostics(BaseModel):
    """What build_discrete_family observed while constructing a family."""

    model_config = ConfigDict(frozen=True)

    k: int
    sigma_k: float
    sigma_star: float
    sigma_base: float
    truncation_tail: float = Field(0.0, description="Largest folded tail mass")
    mean_bias: float = Field(0.0, description="Largest g'(1) bias caused by the fold")
    support_bound: int = 0
    validation_thetas: Tuple[float, ...] = ()


class RecipeLaw:
    """g_θ(s) = s + φ_{θ/k}(k(1-s)) / (kσ) expanded as a power series in s.

    φ_{θ/k}(k(1-s)) splits into a quadratic polynomial in s, geometric series
    from the exponential jump densities and Poisson-shaped series from the
    jump atoms, so every coefficient is available in closed form.
    """

    def __init__(self, target: MechanismFamily, k: int, sigma: float):
        self.target = target
        self.k = int(k)
        self.sigma = float(sigma)
        self._expand = lru_cache(maxsize=EXPAND_CACHE)(self._build)

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_expand"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._expand = lru_cache(maxsize=EXPAND_CACHE)(self._build)

    def __call__(self, theta: float) -> OffspringLaw:
        return self.expand(theta)[0]

    def expand(self, theta: float) -> Tuple[OffspringLaw, float, float]:
        """Law at θ plus the folded tail mass and the g'(1) bias of the fold."""
        return self._expand(float(theta))

    def _components(self, theta_unit: float):
        target, k = self.target, self.k
        base = target.base
        geometric = []
        if base.gamma_m > 0:
            geometric.append((base.gamma_m * base.rho_m / (base.rho_m + k), k / (base.rho_m + k)))
        big_gamma = float(target.gamma.integral(theta_unit))
        if big_gamma > 0:
            geometric.append((big_gamma * target.rho / (target.rho + k), k / (target.rho + k)))
        poisson = [(mass, k * u) for u, mass in base.atoms if mass > 0]
        return geometric, poisson

    @staticmethod
    def _tails(n: np.ndarray, geometric, poisson) -> Tuple[np.ndarray, np.ndarray]:
        """Σ_{i>n} A_i and Σ_{i>n} (i-n) A_i of the series part."""
        tail = np.zeros(n.shape)
        bias = np.zeros(n.shape)
        for amp, ratio in geometric:
            head = amp * ratio ** (n + 1)
            tail += head / (1.0 - ratio)
            bias += head / (1.0 - ratio) ** 2
        for mass, lam in poisson:
            sf_n = stats.poisson.sf(n, lam)
            tail += mass * sf_n
            bias += mass * np.maximum(lam * stats.poisson.sf(n - 1, lam) - n * sf_n, 0.0)
        return tail, bias

    def _support_bound(self, geometric, poisson) -> int:
        if not geometric and not poisson:
            return 2
        ks = self.k * self.sigma
        tail_target = TAIL_MASS * ks / max(1.0, ks)
        bias_target = MEAN_BIAS * ks
        hi = 64
        while True:
            n = np.arange(2, hi + 1)
            tail, bias = self._tails(n, geometric, poisson)
            ok = np.nonzero((tail <= tail_target) & (bias <= bias_target))[0]
            if ok.size:
                return int(n[ok[0]])
            hi *= 2

    def _build(self, theta: float) -> Tuple[OffspringLaw, float, float]:
        target, k, sigma = self.target, self.k, self.sigma
        ks = k * sigma
        theta_unit = min(max(theta / k, 0.0), 1.0)
        base = target.base
        geometric, poisson = self._components(theta_unit)
        support = self._support_bound(geometric, poisson)

        n = np.arange(support + 1)
        series = np.zeros(support + 1)
        for amp, ratio in geometric:
            series += amp * ratio ** n
        for mass, lam in poisson:
            series += mass * stats.poisson.pmf(n, lam)

        probs = series / ks
        probs[0] = float(target.phi_theta(theta_unit, k)) / ks
        probs[2] += 0.5 * base.sigma2 * k * k / ks
        tail, bias = self._tails(np.array([support]), geometric, poisson)
        tail_mass, mean_bias = float(tail[0]) / ks, float(bias[0]) / ks
        probs[support] += tail_mass

        if probs[0] < 0:
            raise AdmissibilityError(
                f"p_0 = φ_θ(k)/(kσ) = {probs[0]:.3e} < 0 at θ = {theta}",
                coefficient=float(probs[0]),
                index=0,
                theta=theta,
            )
        # p_1 = 1 + A_1/(kσ); taking the complement keeps Σp = 1 to rounding
        p1 = 1.0 - (float(np.sum(probs)) - probs[1])
        if p1 < 0:
            if p1 < -MONOTONE_TOL:
                raise AdmissibilityError(
                    f"p_1 = {p1:.3e} < 0 at θ = {theta} (σ_k = {sigma})",
                    coefficient=p1,
                    index=1,
                    theta=theta,
                )
            p1 = 0.0
        probs[1] = p1
        return OffspringLaw(probs=probs), tail_mass, mean_bias

    def first_coefficient_ratio(self, theta: float) -> float:
        """-A_1(θ)/k, the smallest σ keeping p_1(θ) nonnegative."""
        k = self.k
        theta_unit = min(max(theta / k, 0.0), 1.0)
        base = self.target.base
        geometric, poisson = self._components(theta_unit)
        beta = base.b + base.jump_mean - float(self.target.h.integral(theta_unit))
        first = sum(amp * ratio for amp, ratio in geometric)
        first += sum(mass * lam * math.exp(-lam) for mass, lam in poisson)
        return beta + base.sigma2 * k - first / k


class DiscreteFlowFamily(BaseModel):
    """θ-indexed offspring laws π_θ, θ ∈ [0, theta_max], with event rate σ."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sigma: float = Field(..., gt=0)
    theta_max: float = Field(..., gt=0)
    law_fn: Callable[[float], OffspringLaw]
    name: str = "custom"
    diagnostics: Optional[RecipeDiagnostics] = None

    @classmethod
    def constant(cls, law: OffspringLaw, sigma: float, theta_max: float = 1.0, name: str = "constant"):
        return cls(sigma=sigma, theta_max=theta_max, law_fn=ConstantLaw(law), name=name)

    def law_at(self, theta: float) -> OffspringLaw:
        if theta < 0 or theta > self.theta_max * (1 + 1e-12):
            raise DomainError(f"θ = {theta!r} outside [0, {self.theta_max}]")
        return self.law_fn(min(theta, self.theta_max))

    def b(self, theta: float) -> float:
        """Killing probability b(θ) = p_0(θ)."""
        return self.law_at(theta).p0

    def mean_at(self, theta: float) -> float:
        return self.law_at(theta).mean


def discrete_mechanism(k: int, sigma_k: float, fam: DiscreteFlowFamily, theta: float, z: float) -> float:
    """kσ_k [g_{kθ}(e^{-z/k}) - e^{-z/k}]"""
    if k * theta > fam.theta_max * (1 + 1e-12):
        raise DomainError(f"kθ = {k * theta} exceeds theta_max = {fam.theta_max}")
    if z < 0:
        raise DomainError(f"z = {z!r} must be nonnegative")
    s = math.exp(-z / k)
    law = fam.law_at(k * theta)
    return k * sigma_k * (eval_pgf(law, s) - s)


def discrete_mechanism_grid(k: int, fam: DiscreteFlowFamily, theta: float, z: np.ndarray) -> np.ndarray:
    """Vectorised discrete_mechanism over z at one θ (rate taken from the family)."""
    s = np.exp(-np.asarray(z, dtype=float) / k)
    return k * fam.sigma * (fam.law_at(k * theta).pgf(s) - s)


def select_sigma(target: MechanismFamily, k: int, thetas: Sequence[float]) -> Tuple[float, float, float]:
    """Smallest σ in {c·k + b0⁺ + sup γ/ρ + j : j = 0, 1, ...} with all
    first coefficients nonnegative; returns (σ_k, σ*, base)."""
    unit_rate = RecipeLaw(target, k, 1.0)
    sigma_star = max(unit_rate.first_coefficient_ratio(t) for t in thetas)
    base = target.base.sigma2 * k + max(target.base.b, 0.0) + target.gamma.sup() / target.rho
    j = max(0, math.ceil(sigma_star - base - 1e-9))
    while base + j <= 0:
        j += 1
    return base + j, sigma_star, base


def build_discrete_family(
    target: MechanismFamily,
    k: int,
    n_theta: int = DEFAULT_THETA_POINTS,
    extra_thetas: Sequence[float] = (),
) -> Tuple[DiscreteFlowFamily, float]:
    """Build the admissible discrete family g^{(k)}_θ(s) = s + φ_{θ/k}(k(1-s))/(kσ_k)
    on θ ∈ [0, k].

    Args:
        target: Continuum family to approximate
        k: Scaling index
        n_theta: Points of the uniform θ validation grid
        extra_thetas: Additional θ values (e.g. scaled levels) to validate

    Returns:
        The family and σ_k
    """
    if k < 1:
        raise DomainError(f"k must be a positive integer, got {k}")
    from src.mechanism.validation import check_discrete_admissibility

    thetas = sorted(set(np.linspace(0.0, float(k), n_theta).tolist()) | {float(t) for t in extra_thetas})
    sigma_k, sigma_star, sigma_base = select_sigma(target, k, thetas)
    if sigma_k > SIGMA_CAP_FACTOR * k:
        worst = min(
            1.0 - RecipeLaw(target, k, SIGMA_CAP_FACTOR * k).first_coefficient_ratio(t) / (SIGMA_CAP_FACTOR * k)
            for t in thetas
        )
        logger.error(f"No σ_k <= {SIGMA_CAP_FACTOR:g}·k keeps the recipe nonnegative for {target.name}")
        raise AdmissibilityError(
            f"σ_k would exceed {SIGMA_CAP_FACTOR:g}·k; most negative p_1 = {worst:.3e}",
            coefficient=worst,
            index=1,
        )

    recipe = RecipeLaw(target, k, sigma_k)
    tails, biases, supports = [], [], []
    for t in thetas:
        law, tail, bias = recipe.expand(t)
        tails.append(tail)
        biases.append(bias)
        supports.append(law.support_bound)

    diagnostics = RecipeDiagnostics(
        k=k,
        sigma_k=sigma_k,
        sigma_star=sigma_star,
        sigma_base=sigma_base,
        truncation_tail=max(tails),
        mean_bias=max(biases),
        support_bound=max(supports),
        validation_thetas=tuple(thetas),
    )
    fam = DiscreteFlowFamily(
        sigma=sigma_k, theta_max=float(k), law_fn=recipe, name=f"{target.name}@k={k}", diagnostics=diagnostics
    )
    check = check_discrete_admissibility(fam, thetas)
    if not check.admissible:
        raise AdmissibilityError(
            f"constructed family violates monotonicity: {check.summary()}",
            coefficient=check.worst_violation,
            index=check.worst_index,
            theta=check.worst_theta,
        )
    logger.debug(
        f"Built {fam.name}: σ_k={sigma_k:g} (σ*={sigma_star:.6g}), "
        f"support<={diagnostics.support_bound}, tail<={diagnostics.truncation_tail:.1e}"
    )
    return fam, sigma_k
