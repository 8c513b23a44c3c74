import numpy as np
import pytest

from src.cumulant.grid import UniformGrid
from src.cumulant.rk4 import ODEConfig
from src.flow.state import FlowPath, FlowState, LevelGrid, SeedSpec
from src.mechanism.catalog import family_from_spec
from src.mechanism.discrete import DiscreteFlowFamily
from src.mechanism.offspring import OffspringLaw
from src.schema import EventKind


@pytest.fixture
def binary_law():
    """Critical binary splitting p_0 = p_2 = 1/2."""
    return OffspringLaw.binary(0.5)


@pytest.fixture
def feller():
    return family_from_spec("feller")


@pytest.fixture
def nonlocal_family():
    return family_from_spec("nonlocal")


@pytest.fixture
def small_grid():
    return UniformGrid(m=20)


@pytest.fixture
def fine_ode():
    return ODEConfig(step=1e-3)


@pytest.fixture
def coarse_ode():
    return ODEConfig(step=1e-2)


@pytest.fixture
def constant_family(binary_law):
    return DiscreteFlowFamily.constant(binary_law, sigma=1.0, theta_max=10.0)


@pytest.fixture
def two_level_path():
    """Staircase (5, 10) at κ = 10; a birth of 3 on level 2 at t = 0.2 and
    a death on both levels at t = 0.6."""
    columns = {
        "times": [0.2, 0.6],
        "kinds": [EventKind.BIRTH.code, EventKind.DEATH.code],
        "thetas": [6.0, 0.3],
        "us": [7.0, 2.0],
        "zs": [3, 0],
        "j0": [1, 0],
        "j1": [1, 1],
    }
    return FlowPath.from_columns(
        columns,
        grid=LevelGrid(levels=(0.5, 1.0)),
        kappa=10.0,
        sigma=1.0,
        level_b=(0.5, 0.5),
        initial=FlowState(counts=(5, 10)),
        horizon=1.0,
        terminal=(4, 11),
        seed=SeedSpec(master_seed=7, replica_index=0),
        family_id="handmade",
    )


def closed_form_pgf(s0: float, t: float) -> float:
    """F_t(s0) for critical binary splitting at rate 1."""
    return 1.0 - 1.0 / (1.0 / (1.0 - s0) + t / 2.0)


@pytest.fixture
def pgf_closed_form():
    return closed_form_pgf


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
