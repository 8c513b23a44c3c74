import asyncio
import math

import numpy as np
import pytest

from src.cumulant.grid import UniformGrid
from src.cumulant.rk4 import ODEConfig
from src.exceptions import GridMismatchError, InputError
from src.experiment.convergence import (
    ConvergenceCell,
    _trend,
    calibrate_slack_constant,
    convergence_experiment,
    initial_staircase,
    rounding_bound,
)
from src.experiment.functions import TestFunction
from src.flow.rescale import pair_counts
from src.flow.state import LevelGrid
from src.schema import Verdict


def _cell(k, gap, se, t=1.0):
    return ConvergenceCell(
        k=k, t=t, f_id="f", estimate=0.5, std_error=se, replicas=100, prediction=0.5 + gap,
        gap=gap, z_score=0.0, slack=0.0, verdict=Verdict.PASS,
    )


def test_initial_rounding():
    assert initial_staircase([0.5, 1.0], 25) == (12, 25)
    assert initial_staircase([0.3, 0.7], 10) == (3, 7)
    with pytest.raises(InputError):
        initial_staircase([1.0, 0.5], 10)
    assert rounding_bound(np.array([1.0, 2.0]), 25) == pytest.approx(2.0 * 2 / 25)


def test_rounding_bound_covers_initial_pairing():
    f = TestFunction.step([0.5, 1.0], [1.0, 1.0])
    values = f.level_values([0.5, 1.0])
    exact = float(np.dot(np.diff([0.5, 1.0], prepend=0.0), values))
    rounded = float(pair_counts(np.array(initial_staircase([0.5, 1.0], 25)), values, 25))
    assert exact == pytest.approx(1.5)
    assert rounded == pytest.approx(12 / 25 + 1.0)
    assert abs(exact - rounded) <= rounding_bound(f.level_values([0.5, 1.0]), 25)


def test_calibrate_slack_constant():
    cells = [_cell(10, 0.05, 0.01), _cell(20, 0.01, 0.01), _cell(10, 0.5, 0.01, t=0.0)]
    # only t > 0 cells count: 1.5 · 10 · (0.05 - 0.03)
    assert calibrate_slack_constant(cells) == pytest.approx(0.3)
    assert calibrate_slack_constant([_cell(10, 0.01, 0.01)]) == 0.0


def test_trend():
    shrinking = _trend(1.0, "f", [_cell(40, 0.01, 0.005), _cell(10, 0.08, 0.005), _cell(20, 0.04, 0.005)])
    assert shrinking.k_list == [10, 20, 40]
    assert shrinking.verdict is Verdict.PASS
    assert shrinking.spearman_rho == pytest.approx(-1.0)
    growing = _trend(1.0, "f", [_cell(10, 0.01, 0.001), _cell(20, 0.05, 0.001)])
    assert growing.verdict is Verdict.FAIL


def test_rejects_bad_inputs(nonlocal_family):
    grid = LevelGrid.of([0.5, 1.0])
    f = [TestFunction.step([0.5, 1.0], [1.0, 1.0])]
    with pytest.raises(InputError):
        asyncio.run(convergence_experiment(nonlocal_family, [], grid, [1.0], f, 100, 1, [0.5, 1.0]))
    with pytest.raises(InputError):
        asyncio.run(convergence_experiment(nonlocal_family, [10], LevelGrid.of([0.5]), [1.0], f, 100, 1, [0.5]))
    with pytest.raises(InputError):
        asyncio.run(convergence_experiment(nonlocal_family, [10], grid, [1.0], f, 100, 1, [1.0]))
    with pytest.raises(GridMismatchError):
        asyncio.run(
            convergence_experiment(
                nonlocal_family, [10], LevelGrid.of([0.33, 1.0]), [1.0], f, 100, 1, [0.5, 1.0],
                solver_grid=UniformGrid(m=20),
            )
        )


def test_small_experiment(nonlocal_family):
    levels = [0.5, 1.0]
    f = TestFunction.step(levels, [1.0, 1.0])
    report = asyncio.run(
        convergence_experiment(
            nonlocal_family,
            [10, 20],
            LevelGrid.of(levels),
            [0.0, 0.5],
            [f],
            replicas=400,
            master_seed=2024,
            y0=[0.5, 1.0],
            solver_grid=UniformGrid(m=20),
            ode=ODEConfig(step=1e-2),
        )
    )
    assert len(report.cells) == 4
    assert set(report.sigma_k) == {10, 20}
    start = [c for c in report.cells if c.t == 0.0]
    for cell in start:
        # deterministic start: no spread and the prediction is exp(-⟨Y_0, f⟩)
        assert cell.std_error == 0.0
        assert cell.prediction == pytest.approx(math.exp(-1.5), abs=1e-12)
        assert cell.verdict is Verdict.PASS
    later = [c for c in report.cells if c.t == 0.5]
    assert all(c.verdict is Verdict.PASS for c in later)
    assert len(report.trends) == 1
    assert report.killing_growing
