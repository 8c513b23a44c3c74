import asyncio
import math

import numpy as np
import pytest

from src.cumulant.grid import UniformGrid
from src.exceptions import InputError
from src.experiment.functions import TestFunction
from src.experiment.martingale import MartingaleCompensator, martingale_residual, martingale_terms
from src.experiment.replicas import ReplicaRunner, ReplicaSet, ReplicaTask
from src.flow.state import LevelGrid
from src.mechanism.discrete import build_discrete_family
from src.schema import Verdict


def test_compensator_integrates_exactly(two_level_path):
    compensator = MartingaleCompensator([1.0, 1.0], [1.0, 0.0], 10)
    values = compensator(two_level_path, [0.0, 0.5, 1.0])
    expected = (
        math.exp(-1.0) * 0.5 * 0.2
        + math.exp(-1.2) * 0.5 * 0.4
        + math.exp(-1.1) * 0.4 * 0.4
    )
    assert values[0] == 0.0
    assert values[1] == pytest.approx(math.exp(-1.0) * 0.5 * 0.2 + math.exp(-1.2) * 0.5 * 0.3)
    assert values[2] == pytest.approx(expected)


def test_terms_for_local_family(feller):
    grid = UniformGrid(m=20)
    f_levels, g_levels = martingale_terms(feller, TestFunction.step([0.5, 1.0], [1.0, 1.0]), [0.5, 1.0], grid)
    assert f_levels.tolist() == [2.0, 1.0]
    # φ_0(z) = z²/2 and Ψ ≡ 0
    assert g_levels == pytest.approx([2.0, 0.5])


def test_terms_for_nonlocal_family(nonlocal_family):
    grid = UniformGrid(m=20)
    f_levels, g_levels = martingale_terms(nonlocal_family, TestFunction.named("1"), [0.5, 1.0], grid)
    # f ≡ 1 on the levels: Ψ = 0.5 + 0.5·1/2 at both levels
    assert g_levels == pytest.approx([0.5 - 0.75, 0.5 - 0.75])


def test_needs_compensator(two_level_path):
    replica_set = ReplicaSet.from_paths([two_level_path], [0.0, 1.0])
    with pytest.raises(InputError):
        martingale_residual(replica_set, np.array([1.0, 1.0]), 1.0)


def test_residual_small_for_prelimit_flow(nonlocal_family):
    k = 10
    levels = [0.5, 1.0]
    grid = UniformGrid(m=20)
    fam, _ = build_discrete_family(nonlocal_family, k, n_theta=11, extra_thetas=[5.0, 10.0])
    f = TestFunction.named("x")
    f_levels, g_levels = martingale_terms(nonlocal_family, f, levels, grid)
    task = ReplicaTask(
        fam=fam,
        grid=LevelGrid.of(levels),
        kappa=float(k),
        x0=(5, 10),
        horizon=0.5,
        times=(0.0, 0.5),
        scale=k,
        master_seed=31,
        compensator=MartingaleCompensator(f_levels, g_levels, k),
    )
    replica_set = asyncio.run(ReplicaRunner().run(task, 1000))
    assert martingale_residual(replica_set, f_levels, 0.0).residual == 0.0
    result = martingale_residual(replica_set, f_levels, 0.5, slack=2.0 / k)
    assert result.verdict is Verdict.PASS
    assert result.replicas == 1000
