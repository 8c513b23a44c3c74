import math
from typing import Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field

from src.cumulant.grid import GridFunction
from src.exceptions import InsufficientReplicasError
from src.experiment.functions import TestFunction
from src.experiment.replicas import ReplicaSet
from src.flow.rescale import pair_counts
from src.flow.state import FlowPath


MIN_REPLICAS = 100

Observable = Union[TestFunction, GridFunction, float]


class LaplaceEstimate(BaseModel):
    point_estimate: float = Field(..., ge=0, le=1)
    std_error: float = Field(..., ge=0)
    replicas: int = Field(..., gt=0)

    def gap(self, prediction: float) -> float:
        return abs(self.point_estimate - prediction)

    def z_score(self, prediction: float) -> float:
        diff = self.point_estimate - prediction
        if self.std_error == 0:
            return 0.0 if diff == 0 else math.copysign(math.inf, diff)
        return diff / self.std_error


def level_values(f: Observable, levels: Sequence[float], level: Optional[int] = None) -> np.ndarray:
    """Values on the levels whose measure pairing gives ⟨Y, f⟩.

    A scalar λ stands for λ·Y(q) at one level: the step function λ·1{x <= q}.
    """
    levels = np.asarray(levels, dtype=float)
    if isinstance(f, TestFunction):
        return f.level_values(levels)
    if isinstance(f, GridFunction):
        return f.at_points(levels)
    at = levels.size - 1 if level is None else level % levels.size
    return np.where(np.arange(levels.size) <= at, float(f), 0.0)


def pairings(replica_set: ReplicaSet, f: Observable, t: float, level: Optional[int] = None) -> np.ndarray:
    """⟨Y_t, f⟩ per replica."""
    values = level_values(f, replica_set.levels, level)
    return pair_counts(replica_set.counts_at(t), values, replica_set.scale)


def estimate_laplace(
    paths: Union[ReplicaSet, Sequence[FlowPath]],
    f: Observable,
    t: float,
    level: Optional[int] = None,
    k: Optional[int] = None,
    min_replicas: int = MIN_REPLICAS,
) -> LaplaceEstimate:
    """Mean of exp(-⟨Y_t, f⟩) over replicas with its standard error."""
    replica_set = paths if isinstance(paths, ReplicaSet) else ReplicaSet.from_paths(paths, [t], k)
    if replica_set.n_replicas < min_replicas:
        raise InsufficientReplicasError(
            f"Laplace estimates need at least {min_replicas} replicas, got {replica_set.n_replicas}"
        )
    samples = np.exp(-pairings(replica_set, f, t, level))
    n = samples.size
    if np.all(samples == samples[0]):
        return LaplaceEstimate(point_estimate=float(samples[0]), std_error=0.0, replicas=n)
    std_error = float(np.std(samples, ddof=1) / math.sqrt(n))
    return LaplaceEstimate(point_estimate=float(np.clip(np.mean(samples), 0.0, 1.0)), std_error=std_error, replicas=n)
