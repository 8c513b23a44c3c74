"""
Residual of the exponential martingale problem on prelimit paths.

For G(x) = e^{-x} the generator applied to G(⟨μ, f⟩) collapses to

    e^{-⟨μ, f⟩} ⟨μ, φ_0(f) - Ψ(·, f)⟩

(the h_θ drift and the n_θ jump integral make up Ψ; the b_0 drift, the
diffusion and the m_0 jump integral make up φ_0), so the residual is

    E e^{-⟨Y_t, f⟩} - e^{-⟨Y_0, f⟩} - E ∫_0^t e^{-⟨Y_s, f⟩} ⟨Y_s, φ_0(f) - Ψ(·, f)⟩ ds,

with the time integral exact along the piecewise-constant path.
"""

import math
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from src.cumulant.grid import UniformGrid, shared_grid
from src.exceptions import InputError
from src.experiment.functions import TestFunction
from src.experiment.replicas import ReplicaSet
from src.flow.rescale import pair_counts
from src.flow.state import FlowPath
from src.logger import logger
from src.mechanism.continuum import MechanismFamily, nonlocal_operator
from src.schema import Verdict


MIN_REPLICAS = 10_000
Z_95 = 1.959963984540054


def martingale_terms(
    family: MechanismFamily, f: TestFunction, levels: Sequence[float], grid: Optional[UniformGrid] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """(f(q_j), φ_0(f(q_j)) - Ψ(q_j, f)) on the levels."""
    grid = grid or shared_grid()
    projected = f.projected(grid, levels)
    psi = nonlocal_operator(family, grid)(projected.values)
    f_levels = f.level_values(levels)
    index = [grid.index_of(q) for q in levels]
    g_levels = np.asarray(family.base.phi(f_levels), dtype=float) - psi[index]
    return f_levels, g_levels


class MartingaleCompensator:
    """∫_0^t e^{-⟨Y_s, f⟩}⟨Y_s, g⟩ ds along one path, per observation time."""

    def __init__(self, f_levels: np.ndarray, g_levels: np.ndarray, k: int):
        self.f_levels = np.asarray(f_levels, dtype=float)
        self.g_levels = np.asarray(g_levels, dtype=float)
        self.k = int(k)

    def __call__(self, path: FlowPath, times: Sequence[float]) -> np.ndarray:
        jump_times, states = path.trajectory()
        integrand = np.exp(-pair_counts(states, self.f_levels, self.k)) * pair_counts(states, self.g_levels, self.k)
        ends = np.append(jump_times[1:], np.inf)
        out = []
        for t in times:
            held = np.clip(np.minimum(ends, t) - jump_times, 0.0, None)
            out.append(float(np.dot(integrand, held)))
        return np.array(out)


class MartingaleResidual(BaseModel):
    t: float
    residual: float
    std_error: float
    half_width: float
    replicas: int
    slack: float = 0.0
    verdict: Verdict = Verdict.PASS


def martingale_residual(
    replica_set: ReplicaSet,
    f_levels: np.ndarray,
    t: float,
    slack: float = 0.0,
) -> MartingaleResidual:
    """Residual with a 95% half-width; PASS iff |residual| <= 3 half-widths + slack.

    The replica set must have been simulated with a MartingaleCompensator built
    from the same f.
    """
    if replica_set.compensator is None:
        raise InputError("replica set carries no martingale integrals")
    if replica_set.n_replicas < MIN_REPLICAS:
        logger.warning(f"Martingale residual from {replica_set.n_replicas} replicas (< {MIN_REPLICAS})")
    i = replica_set.time_index(t)
    k = replica_set.scale
    if t == 0:
        samples = np.zeros(replica_set.n_replicas)
    else:
        start = np.exp(-pair_counts(replica_set.counts_at(0.0), f_levels, k))
        now = np.exp(-pair_counts(replica_set.counts[:, i, :], f_levels, k))
        samples = now - start - replica_set.compensator[:, i]
    n = samples.size
    residual = float(np.mean(samples))
    std_error = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 and np.any(samples != samples[0]) else 0.0
    half_width = Z_95 * std_error
    ok = abs(residual) <= 3 * half_width + slack
    return MartingaleResidual(
        t=t, residual=residual, std_error=std_error, half_width=half_width, replicas=n, slack=slack, verdict=Verdict.of(ok)
    )
