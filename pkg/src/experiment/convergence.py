"""
Rescaled flows against the superprocess oracle.

For every k the target family is discretised, flows are simulated from the
rounded staircase ⌊kY_0⌋/k, and Laplace functionals of the rescaled flow are
compared with exp(-⟨Y_0, V_t f⟩) from the grid solver.
"""

import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy import stats

from src.cumulant.grid import UniformGrid, shared_grid
from src.cumulant.rk4 import ODEConfig
from src.cumulant.solvers import laplace_prediction, solve_nonlocal_cumulant
from src.exceptions import InputError
from src.experiment.audit import TREND_SE, ZScoreCalibration, zscore_calibration
from src.experiment.functions import TestFunction
from src.experiment.laplace import LaplaceEstimate, estimate_laplace
from src.experiment.martingale import MartingaleCompensator, MartingaleResidual, martingale_residual, martingale_terms
from src.experiment.replicas import ReplicaRunner, ReplicaSet, ReplicaTask
from src.flow.state import LevelGrid
from src.logger import logger
from src.mechanism.condition import bounded_killing_check
from src.mechanism.continuum import MechanismFamily
from src.mechanism.discrete import build_discrete_family
from src.schema import Verdict, all_pass


CI_SE = 3.0
PILOT_STREAM_OFFSET = 1_000_000


def initial_staircase(y0: Sequence[float], k: int) -> Tuple[int, ...]:
    """⌊k·Y_0(q_j)⌋ per level."""
    counts = tuple(int(math.floor(k * y + 1e-9)) for y in y0)
    if any(b < a for a, b in zip(counts, counts[1:])) or any(c < 0 for c in counts):
        raise InputError(f"Y_0 must be a nonnegative nondecreasing staircase, got {list(y0)}")
    return counts


def rounding_bound(f_levels: np.ndarray, k: int) -> float:
    """‖f‖·n/k bounds the t = 0 gap caused by rounding Y_0 to ⌊kY_0⌋/k."""
    return float(np.max(np.abs(f_levels))) * f_levels.size / k if f_levels.size else 0.0


class ConvergenceCell(BaseModel):
    k: int
    t: float
    f_id: str
    estimate: float
    std_error: float
    replicas: int
    prediction: float
    gap: float
    z_score: float
    slack: float
    verdict: Verdict


class TrendRow(BaseModel):
    t: float
    f_id: str
    k_list: List[int]
    gaps: List[float]
    spearman_rho: Optional[float] = None
    nonincreasing: bool
    verdict: Verdict


class MartingaleRow(BaseModel):
    k: int
    residual: MartingaleResidual


class ConvergenceReport(BaseModel):
    family: str
    levels: List[float]
    y0: List[float]
    k_list: List[int]
    t_list: List[float]
    sigma_k: Dict[int, float] = Field(default_factory=dict)
    killing: List[float] = Field(default_factory=list)
    killing_growing: bool = False
    slack_constant: float
    slack_calibrated: bool = False
    cells: List[ConvergenceCell] = Field(default_factory=list)
    trends: List[TrendRow] = Field(default_factory=list)
    martingale: List[MartingaleRow] = Field(default_factory=list)
    calibration: Optional[ZScoreCalibration] = None
    master_seed: int
    config_hash: str = ""
    verdict: Verdict = Verdict.PASS

    def records(self) -> List[dict]:
        return [cell.model_dump(mode="json") for cell in self.cells]


def calibrate_slack_constant(cells: Sequence[ConvergenceCell], safety: float = 1.5) -> float:
    """safety · max over cells of k·max(0, gap - 3 SE)."""
    excess = [cell.k * max(0.0, cell.gap - CI_SE * cell.std_error) for cell in cells if cell.t > 0]
    return safety * max(excess, default=0.0)


def _cell(k: int, t: float, f: TestFunction, estimate: LaplaceEstimate, prediction: float, slack: float) -> ConvergenceCell:
    gap = estimate.gap(prediction)
    return ConvergenceCell(
        k=k,
        t=t,
        f_id=f.label,
        estimate=estimate.point_estimate,
        std_error=estimate.std_error,
        replicas=estimate.replicas,
        prediction=prediction,
        gap=gap,
        z_score=estimate.z_score(prediction),
        slack=slack,
        verdict=Verdict.of(gap <= CI_SE * estimate.std_error + slack),
    )


def _trend(t: float, f_id: str, cells: List[ConvergenceCell]) -> TrendRow:
    cells = sorted(cells, key=lambda c: c.k)
    gaps = [c.gap for c in cells]
    nonincreasing = all(
        b.gap <= a.gap + TREND_SE * max(a.std_error, b.std_error) for a, b in zip(cells, cells[1:])
    )
    rho = None
    if len(cells) >= 3 and len(set(gaps)) > 1:
        rho = float(stats.spearmanr([c.k for c in cells], gaps)[0])
    return TrendRow(
        t=t,
        f_id=f_id,
        k_list=[c.k for c in cells],
        gaps=gaps,
        spearman_rho=rho,
        nonincreasing=nonincreasing,
        verdict=Verdict.of(nonincreasing),
    )


class _Oracle:
    """exp(-⟨Y_0, V_t f⟩) per (t, f), solved once and shared across k."""

    def __init__(self, target: MechanismFamily, levels, y0, grid: UniformGrid, ode: Optional[ODEConfig]):
        self.target = target
        self.levels = list(levels)
        self.masses = np.diff(np.asarray(y0, dtype=float), prepend=0.0)
        self.grid = grid
        self.ode = ode
        self._cache: Dict[Tuple[float, str], float] = {}

    def __call__(self, t: float, f: TestFunction) -> float:
        key = (t, f.label)
        if key not in self._cache:
            projected = f.projected(self.grid, self.levels)
            vtf = solve_nonlocal_cumulant(self.target, projected, t, ode=self.ode, grid=self.grid)
            self._cache[key] = laplace_prediction(self.masses, vtf, points=self.levels)
        return self._cache[key]


async def convergence_experiment(
    target: MechanismFamily,
    k_list: Sequence[int],
    grid: LevelGrid,
    t_list: Sequence[float],
    f_list: Sequence[TestFunction],
    replicas: int,
    master_seed: int,
    y0: Sequence[float],
    runner: Optional[ReplicaRunner] = None,
    slack_constant: float = 2.0,
    pilot_replicas: int = 0,
    martingale_f: Optional[TestFunction] = None,
    solver_grid: Optional[UniformGrid] = None,
    ode: Optional[ODEConfig] = None,
    max_events: Optional[int] = None,
    config_hash: str = "",
) -> ConvergenceReport:
    """Laplace functionals of Y^{(k)}_t against the superprocess oracle.

    Each k uses its own random stream (stream = k), the pilot run (if any)
    the stream k + PILOT_STREAM_OFFSET. Cells pass iff gap <= 3 SE + C/k;
    trends pass iff gaps over increasing k are nonincreasing within 2 SE.
    """
    if not k_list:
        raise InputError("k_list must not be empty")
    if not grid.ends_at_one:
        raise InputError("the level grid must end at q_n = 1")
    if len(y0) != grid.n:
        raise InputError(f"Y_0 has {len(y0)} values, grid has {grid.n} levels")
    runner = runner or ReplicaRunner()
    solver_grid = solver_grid or shared_grid()
    k_sorted = sorted(int(k) for k in k_list)
    times = tuple(sorted({0.0, *map(float, t_list)}))
    horizon = max(times[-1], 1e-12)
    oracle = _Oracle(target, grid.levels, y0, solver_grid, ode)
    for f in f_list:
        f.projected(solver_grid, grid.levels)

    killing = bounded_killing_check(target, k_sorted)
    integrand_levels = None
    if martingale_f is not None:
        integrand_levels = martingale_terms(target, martingale_f, grid.levels, solver_grid)

    families = {}
    for k in k_sorted:
        levels_theta = [k * q for q in grid.levels]
        families[k] = build_discrete_family(target, k, extra_thetas=levels_theta)

    def task_for(k: int, stream: int, with_compensator: bool) -> ReplicaTask:
        fam, _ = families[k]
        compensator = (
            MartingaleCompensator(*integrand_levels, k) if with_compensator and integrand_levels is not None else None
        )
        return ReplicaTask(
            kind="flow",
            fam=fam,
            grid=grid,
            kappa=float(k),
            x0=initial_staircase(y0, k),
            horizon=horizon,
            times=times,
            scale=k,
            master_seed=master_seed,
            stream=stream,
            max_events=max_events,
            compensator=compensator,
        )

    def cells_for(k: int, replica_set: ReplicaSet, slack: float) -> List[ConvergenceCell]:
        out = []
        for t in t_list:
            for f in f_list:
                estimate = estimate_laplace(replica_set, f, t)
                if t == 0:
                    # deterministic start: compare against the rounding bound
                    bound = rounding_bound(f.level_values(grid.levels), k)
                    cell = _cell(k, t, f, estimate, oracle(t, f), bound)
                else:
                    cell = _cell(k, t, f, estimate, oracle(t, f), slack)
                out.append(cell)
        return out

    calibrated = False
    if pilot_replicas > 0:
        pilot_cells = []
        for k in k_sorted:
            pilot = await runner.run(task_for(k, k + PILOT_STREAM_OFFSET, False), pilot_replicas)
            pilot_cells.extend(cells_for(k, pilot, 0.0))
        slack_constant = calibrate_slack_constant(pilot_cells)
        calibrated = True
        logger.info(f"Calibrated slack constant C = {slack_constant:.4g} from {pilot_replicas} pilot replicas")

    report = ConvergenceReport(
        family=target.name,
        levels=list(grid.levels),
        y0=list(y0),
        k_list=k_sorted,
        t_list=list(t_list),
        sigma_k={k: families[k][1] for k in k_sorted},
        killing=killing.values,
        killing_growing=killing.growing,
        slack_constant=slack_constant,
        slack_calibrated=calibrated,
        master_seed=master_seed,
        config_hash=config_hash,
    )
    for k in k_sorted:
        replica_set = await runner.run(task_for(k, k, martingale_f is not None), replicas)
        k_cells = cells_for(k, replica_set, slack_constant / k)
        report.cells.extend(k_cells)
        if martingale_f is not None:
            for t in t_list:
                residual = martingale_residual(replica_set, integrand_levels[0], t, slack=slack_constant / k)
                report.martingale.append(MartingaleRow(k=k, residual=residual))
        worst = max(k_cells, key=lambda c: c.gap)
        logger.info(f"k={k}: largest gap {worst.gap:.4g} ({worst.f_id}, t={worst.t:g}, {worst.verdict.value})")

    for t in t_list:
        if t == 0:
            continue
        for f in f_list:
            rows = [c for c in report.cells if c.t == t and c.f_id == f.label]
            report.trends.append(_trend(t, f.label, rows))

    positive = [c for c in report.cells if c.t > 0]
    report.calibration = zscore_calibration([c.z_score for c in positive], [c.verdict for c in positive])
    report.verdict = all_pass(
        [c.verdict for c in report.cells]
        + [row.verdict for row in report.trends]
        + [row.residual.verdict for row in report.martingale]
    )
    if report.verdict is not Verdict.PASS:
        logger.warning(f"Convergence experiment for {target.name} did not pass")
    return report

