"""
Replica dispatch.

Each replica owns the stream SeedSequence(master_seed, spawn_key=(stream, index)),
so the records do not depend on how replicas are split across workers.
Workers return compact per-replica records (staircases at the observation
times, running sups, counters) instead of whole paths.
"""

import asyncio
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Any, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.exceptions import InputError
from src.flow.coupled import simulate_flow
from src.flow.single import SINGLE_GRID, simulate_single
from src.flow.state import FlowPath, LevelGrid, SeedSpec
from src.logger import logger
from src.mechanism.discrete import DiscreteFlowFamily
from src.mechanism.offspring import OffspringLaw


class ReplicaTask(BaseModel):
    """Everything a worker needs to simulate and observe replicas."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: Literal["flow", "single"] = "flow"
    fam: Optional[DiscreteFlowFamily] = None
    grid: LevelGrid = SINGLE_GRID
    kappa: float = Field(1.0, gt=0)
    law: Optional[OffspringLaw] = None
    sigma: Optional[float] = Field(None, gt=0)
    x0: Tuple[int, ...]
    horizon: float = Field(..., gt=0)
    times: Tuple[float, ...] = Field(..., min_length=1, description="Observation times")
    scale: int = Field(1, ge=1, description="k in Y = X/k")
    master_seed: int = Field(..., ge=0)
    stream: int = Field(0, ge=0)
    max_events: Optional[int] = None
    compensator: Optional[Any] = Field(None, description="Picklable callable (path, times) -> array per time")
    keep_paths: int = Field(0, ge=0, description="Return whole paths for the first replicas")

    @model_validator(mode="after")
    def _complete(self) -> "ReplicaTask":
        if self.kind == "flow" and self.fam is None:
            raise ValueError("flow tasks need a discrete family")
        if self.kind == "single" and (self.law is None or self.sigma is None or len(self.x0) != 1):
            raise ValueError("single tasks need a law, σ and one initial count")
        if len(self.x0) != self.grid.n:
            raise ValueError(f"x0 has {len(self.x0)} levels, grid has {self.grid.n}")
        if any(t < 0 or t > self.horizon for t in self.times):
            raise ValueError("observation times must lie in [0, horizon]")
        return self

    def seed(self, index: int) -> SeedSpec:
        return SeedSpec(master_seed=self.master_seed, replica_index=index, stream=self.stream)

    def simulate(self, index: int) -> FlowPath:
        if self.kind == "single":
            return simulate_single(self.law, self.sigma, self.x0[0], self.horizon, self.seed(index), self.max_events)
        return simulate_flow(
            self.fam, self.grid, self.x0, self.horizon, self.seed(index), kappa=self.kappa, max_events=self.max_events
        )

    def observe(self, index: int) -> "ReplicaRecord":
        path = self.simulate(index)
        record = ReplicaRecord.of(path, self.times, index)
        if self.compensator is not None:
            values = np.asarray(self.compensator(path, self.times), dtype=float)
            record = record.model_copy(update={"compensator": values})
        if index < self.keep_paths:
            record = record.model_copy(update={"path": path})
        return record


class ReplicaRecord(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    index: int
    counts: np.ndarray
    sups: np.ndarray
    increment_sups: np.ndarray
    no_ops: int
    events: int
    extinction_time: Optional[float] = None
    compensator: Optional[np.ndarray] = None
    path: Optional[FlowPath] = None

    @classmethod
    def of(cls, path: FlowPath, times: Sequence[float], index: int) -> "ReplicaRecord":
        return cls(
            index=index,
            counts=path.sample(times),
            sups=path.running_sup(times),
            increment_sups=path.increment_sups(times),
            no_ops=path.no_ops,
            events=path.n_events,
            extinction_time=path.extinction_time,
        )


def run_chunk(task: ReplicaTask, start: int, stop: int) -> List[ReplicaRecord]:
    """Simulate replicas [start, stop) of a task; runs inside worker processes."""
    return [task.observe(index) for index in range(start, stop)]


class ReplicaSet(BaseModel):
    """Per-replica observations stacked in replica-index order.

    counts, sups: (R, T, n); increment_sups: (R, T, n-1); compensator: (R, T).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    times: np.ndarray
    levels: Tuple[float, ...]
    scale: int = 1
    indices: np.ndarray
    counts: np.ndarray
    sups: np.ndarray
    increment_sups: np.ndarray
    no_ops: np.ndarray
    events: np.ndarray
    extinction_times: np.ndarray
    compensator: Optional[np.ndarray] = None
    paths: List[FlowPath] = Field(default_factory=list)
    master_seed: Optional[int] = None
    stream: int = 0

    @classmethod
    def from_records(
        cls,
        records: Sequence[ReplicaRecord],
        times: Sequence[float],
        levels: Sequence[float],
        scale: int = 1,
        master_seed: Optional[int] = None,
        stream: int = 0,
    ) -> "ReplicaSet":
        if not records:
            raise InputError("no replica records")
        records = sorted(records, key=lambda r: r.index)
        compensators = [r.compensator for r in records]
        return cls(
            times=np.asarray(times, dtype=float),
            levels=tuple(float(q) for q in levels),
            scale=scale,
            indices=np.array([r.index for r in records]),
            counts=np.stack([r.counts for r in records]),
            sups=np.stack([r.sups for r in records]),
            increment_sups=np.stack([r.increment_sups for r in records]),
            no_ops=np.array([r.no_ops for r in records]),
            events=np.array([r.events for r in records]),
            extinction_times=np.array([np.nan if r.extinction_time is None else r.extinction_time for r in records]),
            compensator=None if any(p is None for p in compensators) else np.stack(compensators),
            paths=[r.path for r in records if r.path is not None],
            master_seed=master_seed,
            stream=stream,
        )

    @classmethod
    def from_paths(cls, paths: Sequence[FlowPath], times: Sequence[float], k: Optional[int] = None) -> "ReplicaSet":
        """Observe already simulated paths; all must share the level grid."""
        if not paths:
            raise InputError("no paths given")
        grid = paths[0].grid
        if any(p.grid != grid for p in paths):
            raise InputError("paths do not share one level grid")
        if any(max(times) > p.horizon * (1 + 1e-12) for p in paths):
            raise InputError("a path ends before the requested time")
        scale = k if k is not None else max(1, int(round(paths[0].kappa)))
        records = [
            ReplicaRecord.of(p, times, p.seed.replica_index if p.seed else i) for i, p in enumerate(paths)
        ]
        seed = paths[0].seed
        return cls.from_records(
            records, times, grid.levels, scale, seed.master_seed if seed else None, seed.stream if seed else 0
        )

    @property
    def n_replicas(self) -> int:
        return int(self.indices.size)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def time_index(self, t: float) -> int:
        hits = np.flatnonzero(np.abs(self.times - t) <= 1e-12 * max(1.0, abs(t)))
        if hits.size == 0:
            raise InputError(f"t = {t} is not an observation time of this replica set ({self.times.tolist()})")
        return int(hits[0])

    def level_index(self, level: int) -> int:
        if not -self.n_levels <= level < self.n_levels:
            raise InputError(f"level index {level} outside a {self.n_levels}-level grid")
        return level % self.n_levels

    def counts_at(self, t: float) -> np.ndarray:
        """(R, n) staircases at time t."""
        return self.counts[:, self.time_index(t), :]

    def level_counts(self, t: float, level: int = -1) -> np.ndarray:
        return self.counts_at(t)[:, self.level_index(level)]

    def level_sups(self, t: float, level: int = -1) -> np.ndarray:
        return self.sups[:, self.time_index(t), self.level_index(level)]

    def extinct_fraction(self, t: float) -> float:
        return float(np.mean(self.level_counts(t, -1) == 0))

    def summary(self) -> dict:
        return {
            "replicas": self.n_replicas,
            "levels": list(self.levels),
            "scale": self.scale,
            "mean_events": float(np.mean(self.events)),
            "total_no_ops": int(np.sum(self.no_ops)),
            "extinct_at_horizon": float(np.mean(self.counts[:, -1, -1] == 0)),
        }


class ReplicaRunner:
    """Runs replica tasks inline or on a process pool.

    Chunks are gathered in submission order, so the resulting ReplicaSet is
    identical for every worker count.
    """

    def __init__(self, workers: int = 1, chunk_size: Optional[int] = None):
        if workers < 1:
            raise InputError(f"workers must be positive, got {workers}")
        self.workers = workers
        self.chunk_size = chunk_size

    def _chunks(self, start: int, n_replicas: int) -> List[Tuple[int, int]]:
        size = self.chunk_size or max(1, math.ceil(n_replicas / (4 * self.workers)))
        return [(lo, min(lo + size, start + n_replicas)) for lo in range(start, start + n_replicas, size)]

    async def run(self, task: ReplicaTask, n_replicas: int, start: int = 0) -> ReplicaSet:
        if n_replicas < 1:
            raise InputError(f"need at least one replica, got {n_replicas}")
        chunks = self._chunks(start, n_replicas)
        logger.info(
            f"Simulating {n_replicas} {task.kind} replicas (stream {task.stream}) "
            f"in {len(chunks)} chunks on {self.workers} worker(s)"
        )
        if self.workers == 1:
            parts = [run_chunk(task, lo, hi) for lo, hi in chunks]
        else:
            loop = asyncio.get_running_loop()
            with ProcessPoolExecutor(max_workers=self.workers) as pool:
                futures = [loop.run_in_executor(pool, run_chunk, task, lo, hi) for lo, hi in chunks]
                parts = await asyncio.gather(*futures)
        records = [record for part in parts for record in part]
        replica_set = ReplicaSet.from_records(
            records, task.times, task.grid.levels, task.scale, task.master_seed, task.stream
        )
        logger.info(
            f"Finished {n_replicas} replicas: mean events {np.mean(replica_set.events):.1f}, "
            f"no-ops {int(np.sum(replica_set.no_ops))}"
        )
        return replica_set
