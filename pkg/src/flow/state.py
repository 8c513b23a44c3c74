from typing import Iterator, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.exceptions import InputError
from src.schema import EventKind


class LevelGrid(BaseModel):
    """Levels 0 < q_1 < ... < q_n <= 1."""

    model_config = ConfigDict(frozen=True)

    levels: Tuple[float, ...]

    @field_validator("levels")
    @classmethod
    def _increasing(cls, levels: Tuple[float, ...]) -> Tuple[float, ...]:
        if not levels:
            raise ValueError("a level grid needs at least one level")
        if any(not 0.0 < q <= 1.0 for q in levels):
            raise ValueError(f"levels must lie in (0, 1], got {levels}")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError(f"levels must be strictly increasing, got {levels}")
        return levels

    @classmethod
    def of(cls, levels: Sequence[float]) -> "LevelGrid":
        try:
            return cls(levels=tuple(float(q) for q in levels))
        except ValidationError as e:
            raise InputError(f"Malformed level grid: {e}")

    @property
    def n(self) -> int:
        return len(self.levels)

    @property
    def ends_at_one(self) -> bool:
        return self.levels[-1] == 1.0

    def scaled(self, kappa: float) -> np.ndarray:
        return kappa * np.asarray(self.levels)


class FlowState(BaseModel):
    """Staircase of counts X(q_1) <= ... <= X(q_n) at a time."""

    model_config = ConfigDict(frozen=True)

    time: float = Field(0.0, ge=0)
    counts: Tuple[int, ...]

    @field_validator("counts")
    @classmethod
    def _staircase(cls, counts: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(c < 0 for c in counts):
            raise ValueError(f"counts must be nonnegative, got {counts}")
        if any(b < a for a, b in zip(counts, counts[1:])):
            raise ValueError(f"counts must be nondecreasing across levels, got {counts}")
        return counts

    @classmethod
    def of(cls, counts: Sequence[int], time: float = 0.0) -> "FlowState":
        if any(int(c) != c for c in counts):
            raise InputError(f"counts must be integers, got {list(counts)}")
        try:
            return cls(time=time, counts=tuple(int(c) for c in counts))
        except ValidationError as e:
            raise InputError(f"Initial staircase is not admissible: {e}")

    @property
    def top(self) -> int:
        return self.counts[-1]


class FlowEvent(NamedTuple):
    time: float
    kind: EventKind
    theta: float
    u: float
    z: int
    j0: int
    j1: int

    @property
    def increment(self) -> int:
        return self.z - 1 if self.kind is EventKind.BIRTH else -1


class SeedSpec(BaseModel):
    """Identifies one replica's random stream."""

    model_config = ConfigDict(frozen=True)

    master_seed: int = Field(..., ge=0, lt=2**64)
    replica_index: int = Field(..., ge=0)
    stream: int = Field(0, ge=0, description="Separates populations drawn from one master seed")

    def rng(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream, self.replica_index))
        return np.random.default_rng(sequence)


class FlowPath(BaseModel):
    """Initial staircase plus the time-ordered accepted events, stored column-wise."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: LevelGrid
    kappa: float = 1.0
    sigma: float
    level_b: Tuple[float, ...]
    initial: FlowState
    horizon: float
    times: np.ndarray
    kinds: np.ndarray
    thetas: np.ndarray
    us: np.ndarray
    zs: np.ndarray
    j0: np.ndarray
    j1: np.ndarray
    terminal: Tuple[int, ...]
    no_ops: int = 0
    extinction_time: Optional[float] = None
    seed: Optional[SeedSpec] = None
    family_id: str = "custom"

    @model_validator(mode="after")
    def _columns(self) -> "FlowPath":
        sizes = {a.size for a in (self.times, self.kinds, self.thetas, self.us, self.zs, self.j0, self.j1)}
        if len(sizes) != 1:
            raise ValueError("event columns must have equal length")
        return self

    @classmethod
    def from_columns(cls, columns: dict, **fields) -> "FlowPath":
        return cls(
            times=np.asarray(columns["times"], dtype=float),
            kinds=np.asarray(columns["kinds"], dtype=np.int8),
            thetas=np.asarray(columns["thetas"], dtype=float),
            us=np.asarray(columns["us"], dtype=float),
            zs=np.asarray(columns["zs"], dtype=np.int64),
            j0=np.asarray(columns["j0"], dtype=np.int64),
            j1=np.asarray(columns["j1"], dtype=np.int64),
            **fields,
        )

    @property
    def n_events(self) -> int:
        return int(self.times.size)

    @property
    def level_thetas(self) -> np.ndarray:
        return self.grid.scaled(self.kappa)

    def events(self) -> Iterator[FlowEvent]:
        for i in range(self.n_events):
            yield FlowEvent(
                time=float(self.times[i]),
                kind=EventKind.from_code(self.kinds[i]),
                theta=float(self.thetas[i]),
                u=float(self.us[i]),
                z=int(self.zs[i]),
                j0=int(self.j0[i]),
                j1=int(self.j1[i]),
            )

    def increments(self) -> np.ndarray:
        return np.where(self.kinds == EventKind.BIRTH.code, self.zs - 1, -1).astype(np.int64)

    def trajectory(self) -> Tuple[np.ndarray, np.ndarray]:
        """Jump times (0 first) and the staircase after each jump, shape (E+1, n)."""
        n, count = self.grid.n, self.n_events
        steps = np.zeros((count, n + 1), dtype=np.int64)
        rows = np.arange(count)
        delta = self.increments()
        steps[rows, self.j0] = delta
        steps[rows, self.j1 + 1] -= delta
        per_event = np.cumsum(steps, axis=1)[:, :n]
        states = np.vstack([np.asarray(self.initial.counts, dtype=np.int64), per_event])
        states = np.cumsum(states, axis=0)
        return np.concatenate([[0.0], self.times]), states

    def replay(self) -> Tuple[int, ...]:
        _, states = self.trajectory()
        return tuple(int(c) for c in states[-1])

    def _index(self, times: Sequence[float]) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        if np.any(times > self.horizon * (1 + 1e-12)) or np.any(times < 0):
            raise InputError(f"sample times must lie in [0, {self.horizon}]")
        return np.searchsorted(self.times, times, side="right")

    def sample(self, times: Sequence[float]) -> np.ndarray:
        """Right-continuous staircase at each time, shape (len(times), n)."""
        _, states = self.trajectory()
        return states[self._index(times)]

    def running_sup(self, times: Sequence[float]) -> np.ndarray:
        """sup_{s <= t} X_s(q_j) per time and level."""
        _, states = self.trajectory()
        return np.maximum.accumulate(states, axis=0)[self._index(times)]

    def increment_sups(self, times: Sequence[float]) -> np.ndarray:
        """sup_{s <= t} [X_s(q_n) - X_s(q_j)] per time, for j < n - 1."""
        _, states = self.trajectory()
        return np.maximum.accumulate(states[:, -1:] - states[:, :-1], axis=0)[self._index(times)]
