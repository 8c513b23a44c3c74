from typing import List, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, PrivateAttr, field_validator, model_validator

from src.exceptions import DomainError


NORMALIZATION_TOL = 1e-12


class OffspringLaw(BaseModel):
    """A probability law p_0..p_M on the nonnegative integers.

    The law is the unit of discrete reproduction: an individual that
    branches is replaced by ``z`` children with probability ``probs[z]``.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    probs: np.ndarray

    _mean: float = PrivateAttr(default=0.0)
    _cdf: np.ndarray = PrivateAttr(default=None)

    @field_validator("probs", mode="before")
    @classmethod
    def _as_array(cls, value) -> np.ndarray:
        probs = np.array(value, dtype=float).reshape(-1)
        if probs.size == 0:
            raise ValueError("an offspring law needs at least p_0")
        probs.setflags(write=False)
        return probs

    @model_validator(mode="after")
    def _normalized(self) -> "OffspringLaw":
        if not np.all(np.isfinite(self.probs)) or np.any(self.probs < 0):
            raise ValueError("offspring probabilities must be finite and nonnegative")
        total = float(np.sum(self.probs))
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"offspring probabilities sum to {total!r}, not 1")
        self._mean = self.recompute_mean()
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        cdf.setflags(write=False)
        self._cdf = cdf
        return self

    @classmethod
    def from_probs(cls, probs: Sequence[float]) -> "OffspringLaw":
        return cls(probs=probs)

    @classmethod
    def binary(cls, p_death: float = 0.5) -> "OffspringLaw":
        """Law with p_0 = p_death and p_2 = 1 - p_death"""
        return cls(probs=[p_death, 0.0, 1.0 - p_death])

    @property
    def support_bound(self) -> int:
        return int(self.probs.size - 1)

    @property
    def mean(self) -> float:
        """g'(1), cached at construction"""
        return self._mean

    @property
    def p0(self) -> float:
        return float(self.probs[0])

    @property
    def cdf(self) -> np.ndarray:
        return self._cdf

    def recompute_mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size, dtype=float), self.probs))

    def pgf(self, s) -> np.ndarray:
        """Vectorised Σ p_i s^i without domain checks (Horner)."""
        s = np.asarray(s, dtype=float)
        result = np.zeros_like(s)
        for p in self.probs[::-1]:
            result = result * s + p
        return np.where(s == 1.0, 1.0, result)

    def sample(self, rng: np.random.Generator) -> int:
        return int(np.searchsorted(self._cdf, rng.random(), side="right"))

    def to_list(self) -> List[float]:
        return [float(p) for p in self.probs]


def eval_pgf(law: OffspringLaw, s: float) -> float:
    """Evaluate g(s) = Σ p_i s^i for s in [0, 1]; exactly 1 at s = 1."""
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"pgf argument {s!r} outside [0, 1]")
    if s == 1.0:
        return 1.0
    return float(law.pgf(s))
