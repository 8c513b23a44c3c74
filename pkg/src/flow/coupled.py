import math
from bisect import bisect_left, bisect_right
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.exceptions import InputError, MonotonicityError, ResourceError
from src.flow.single import default_event_cap
from src.flow.state import FlowEvent, FlowPath, FlowState, LevelGrid, SeedSpec
from src.logger import logger
from src.mechanism.discrete import DiscreteFlowFamily
from src.schema import EventKind


DEFAULT_CELLS = 100
_UNIFORM_BLOCK = 4096


def affected_range(
    kind: EventKind,
    theta: float,
    u: float,
    counts: Sequence[int],
    level_thetas: Sequence[float],
    level_b: Sequence[float],
) -> Optional[Tuple[int, int]]:
    """Contiguous level range [j0, j1] hit by a driving-measure point, or None.

    Births hit the suffix {j : κq_j >= θ and X(q_j) >= u}; deaths hit
    {j : θ <= b(κq_j) and u <= X(q_j)}. Both rely on counts and level
    thetas being nondecreasing and on b being nonincreasing across levels.
    """
    return _affected(kind, theta, u, counts, level_thetas, [-b for b in level_b])


def _affected(kind, theta, u, counts, level_thetas, neg_b) -> Optional[Tuple[int, int]]:
    n = len(counts)
    by_count = bisect_left(counts, u)
    if kind is EventKind.BIRTH:
        j0 = max(bisect_left(level_thetas, theta), by_count)
        return (j0, n - 1) if j0 < n else None
    # number of levels with b(κq_j) >= θ
    reach = bisect_right(neg_b, -theta)
    if by_count >= reach:
        return None
    return by_count, reach - 1


class _Uniforms:
    """Block-buffered uniforms on [0, 1) from one generator."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self._buffer = rng.random(_UNIFORM_BLOCK)
        self._pos = 0

    def next(self) -> float:
        if self._pos == _UNIFORM_BLOCK:
            self._buffer = self.rng.random(_UNIFORM_BLOCK)
            self._pos = 0
        value = self._buffer[self._pos]
        self._pos += 1
        return float(value)


class FlowSampler:
    """Driving-measure sampler of the coupled flow on a level grid.

    Offspring laws are tabulated on a θ-grid made of uniform cells on
    [0, κq_n] plus the scaled levels. Birth marks (θ, z) come from the atom
    of π̄ at θ = 0 (mass 1 - b(0)) or from a cell (θ_{g-1}, θ_g] of mass
    b(θ_{g-1}) - b(θ_g), with z drawn from the increments of p_z across the
    cell; death marks are uniform on (0, b(κq_1)].
    """

    def __init__(self, fam: DiscreteFlowFamily, grid: LevelGrid, kappa: float = 1.0, n_cells: int = DEFAULT_CELLS):
        level_thetas = grid.scaled(kappa)
        if level_thetas[-1] > fam.theta_max * (1 + 1e-12):
            raise InputError(f"κ·q_n = {level_thetas[-1]} exceeds theta_max = {fam.theta_max}")
        self.fam = fam
        self.grid = grid
        self.kappa = float(kappa)
        self.sigma = fam.sigma
        self.level_thetas: List[float] = [float(t) for t in level_thetas]
        self.level_b: List[float] = [fam.b(t) for t in self.level_thetas]
        self.level_means: List[float] = [fam.mean_at(t) for t in self.level_thetas]
        if any(b > a + 1e-12 for a, b in zip(self.level_b, self.level_b[1:])):
            raise MonotonicityError(f"b(κq) increases across levels: {self.level_b}")

        top = self.level_thetas[-1]
        cells = np.linspace(0.0, top, n_cells + 1).tolist()
        self.theta_grid: List[float] = sorted(set(cells) | {0.0} | set(self.level_thetas))
        laws = [fam.law_at(t) for t in self.theta_grid]
        width = max(law.probs.size for law in laws)
        table = np.zeros((len(laws), width))
        for row, law in zip(table, laws):
            row[: law.probs.size] = law.probs

        # cell 0 is the atom at θ = 0, cell g the interval (θ_{g-1}, θ_g]
        masses = [1.0 - table[0, 0]]
        z_tables = [table[0, 1:].copy()]
        for g in range(1, len(self.theta_grid)):
            masses.append(max(table[g - 1, 0] - table[g, 0], 0.0))
            weights = np.maximum(table[g, 1:] - table[g - 1, 1:], 0.0)
            if weights.sum() <= 0.0:
                weights = table[g, 1:].copy()
            z_tables.append(weights)
        self.cell_masses = np.array(masses)
        self._cell_cdf = np.cumsum(self.cell_masses)
        self._z_cdfs = []
        for weights in z_tables:
            total = weights.sum()
            cdf = np.cumsum(weights) / total if total > 0 else np.ones_like(weights)
            cdf[-1] = 1.0
            self._z_cdfs.append(cdf)

        self.birth_mass = 1.0 - self.level_b[-1]
        self.death_mass = self.level_b[0]
        self.total_mass = self.birth_mass + self.death_mass
        self._neg_b = [-b for b in self.level_b]

    def candidate_rate(self, counts: Sequence[int]) -> float:
        return self.sigma * counts[-1] * self.total_mass

    def staircase_rate(self, counts: Sequence[int]) -> float:
        """Rate of candidates that hit at least one level."""
        deaths, previous = 0.0, 0
        for count, b in zip(counts, self.level_b):
            deaths += (count - previous) * b
            previous = count
        return self.sigma * (counts[-1] * self.birth_mass + deaths)

    def _draw_birth(self, draw) -> Tuple[float, int]:
        cell = int(np.searchsorted(self._cell_cdf, draw() * self._cell_cdf[-1], side="right"))
        cell = min(cell, len(self.theta_grid) - 1)
        z = int(np.searchsorted(self._z_cdfs[cell], draw(), side="right")) + 1
        if cell == 0:
            return 0.0, z
        lo, hi = self.theta_grid[cell - 1], self.theta_grid[cell]
        theta = hi - (hi - lo) * draw()
        return max(theta, math.nextafter(lo, math.inf)), z

    def sample_candidate(self, counts: Sequence[int], draw) -> Tuple[EventKind, float, float, int]:
        """Marks (kind, θ, u, z) of the next candidate; ``draw`` yields uniforms on [0, 1).

        A birth θ follows the θ-marginal of π̄: an atom of mass 1 - b(0) at
        θ = 0 plus the density -db/dθ on (0, κq_n]. A θ-independent family
        therefore puts every birth at θ = 0, and a family with b linear in θ
        gives births off the atom a uniform θ on (0, κq_n].
        """
        top = counts[-1]
        if draw() * self.total_mass < self.birth_mass:
            theta, z = self._draw_birth(draw)
            kind = EventKind.BIRTH
        else:
            theta = self.death_mass * (1.0 - draw())
            kind, z = EventKind.DEATH, 0
        u = top * (1.0 - draw())
        return kind, theta, u, z

    def affected(self, kind: EventKind, theta: float, u: float, counts: Sequence[int]) -> Optional[Tuple[int, int]]:
        return _affected(kind, theta, u, counts, self.level_thetas, self._neg_b)


@lru_cache(maxsize=16)
def _cached_sampler(fam: DiscreteFlowFamily, grid: LevelGrid, kappa: float) -> FlowSampler:
    return FlowSampler(fam, grid, kappa)


def sampler_for(fam: DiscreteFlowFamily, grid: LevelGrid, kappa: float = 1.0) -> FlowSampler:
    return _cached_sampler(fam, grid, float(kappa))


def candidate_rate(fam: DiscreteFlowFamily, grid: LevelGrid, state: FlowState, kappa: float = 1.0) -> float:
    """σ·X(q_n)·[(1 - b(κq_n)) + b(κq_1)]"""
    return sampler_for(fam, grid, kappa).candidate_rate(state.counts)


def staircase_rate(sampler: FlowSampler, counts: Sequence[int]) -> float:
    return sampler.staircase_rate(counts)


def sample_candidate(
    fam: DiscreteFlowFamily,
    grid: LevelGrid,
    state: FlowState,
    rng: np.random.Generator,
    kappa: float = 1.0,
) -> Optional[FlowEvent]:
    """Draw one candidate at ``state.time``; None when it hits no level.

    Birth marks come from the θ-marginal of π̄ (see FlowSampler.sample_candidate),
    so a θ-independent family draws every birth at θ = 0.
    """
    if state.top == 0:
        raise InputError("candidate sampling needs X(q_n) > 0")
    sampler = sampler_for(fam, grid, kappa)
    kind, theta, u, z = sampler.sample_candidate(state.counts, rng.random)
    hit = sampler.affected(kind, theta, u, state.counts)
    if hit is None:
        return None
    return FlowEvent(time=state.time, kind=kind, theta=theta, u=u, z=z, j0=hit[0], j1=hit[1])


def _check_order(counts: List[int], j0: int, j1: int, replica: int) -> None:
    for j in (j0 - 1, j1):
        if 0 <= j < len(counts) - 1 and counts[j] > counts[j + 1]:
            raise MonotonicityError(f"replica {replica}: level order broken between {j} and {j + 1}: {counts}")


def simulate_flow(
    fam: DiscreteFlowFamily,
    grid: LevelGrid,
    x0: Sequence[int],
    horizon: float,
    seed: SeedSpec,
    kappa: float = 1.0,
    sampler: Optional[FlowSampler] = None,
    max_events: Optional[int] = None,
) -> FlowPath:
    """Exact realization of the coupled flow by thinning.

    Candidates arrive at rate σ·X(q_n)·[(1 - b(κq_n)) + b(κq_1)]; a birth
    adds z - 1 on its level suffix, a death removes one individual on its
    level range, and candidates that hit no level are counted as no-ops.
    """
    initial = FlowState.of(x0)
    if len(initial.counts) != grid.n:
        raise InputError(f"x0 has {len(initial.counts)} levels, grid has {grid.n}")
    if not math.isfinite(horizon) or horizon <= 0:
        raise InputError(f"horizon must be finite and positive, got {horizon}")
    if sampler is None:
        sampler = sampler_for(fam, grid, kappa)
    cap = max_events if max_events is not None else default_event_cap()
    replica = seed.replica_index
    uniforms = _Uniforms(seed.rng())
    draw = uniforms.next

    counts = list(initial.counts)
    columns = {name: [] for name in ("times", "kinds", "thetas", "us", "zs", "j0", "j1")}
    t, no_ops = 0.0, 0
    extinction_time = None
    candidates = 0
    while counts[-1] > 0:
        rate = sampler.candidate_rate(counts)
        t += -math.log1p(-draw()) / rate
        if t > horizon:
            break
        candidates += 1
        if candidates > cap:
            logger.error(f"Replica {replica} hit the event cap {cap} at t={t:.4g}")
            raise ResourceError(f"replica {replica} exceeded {cap} events before t={horizon}", replica_index=replica)
        kind, theta, u, z = sampler.sample_candidate(counts, draw)
        hit = sampler.affected(kind, theta, u, counts)
        if hit is None:
            no_ops += 1
            continue
        j0, j1 = hit
        if kind is EventKind.BIRTH:
            for j in range(j0, j1 + 1):
                counts[j] += z - 1
        else:
            if j0 > 0 and counts[j0] < counts[j0 - 1] + 1:
                raise MonotonicityError(f"replica {replica}: death at level {j0} would break the order: {counts}")
            for j in range(j0, j1 + 1):
                counts[j] -= 1
        _check_order(counts, j0, j1, replica)
        for name, value in zip(columns, (t, kind.code, theta, u, z, j0, j1)):
            columns[name].append(value)
        if counts[-1] == 0:
            extinction_time = t

    return FlowPath.from_columns(
        columns,
        grid=grid,
        kappa=kappa,
        sigma=fam.sigma,
        level_b=tuple(sampler.level_b),
        initial=initial,
        horizon=horizon,
        terminal=tuple(counts),
        no_ops=no_ops,
        extinction_time=extinction_time,
        seed=seed,
        family_id=fam.name,
    )
