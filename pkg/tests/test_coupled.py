import asyncio
import math

import numpy as np
import pytest
from scipy import stats

from src.exceptions import InputError
from src.experiment.audit import distribution_tests
from src.experiment.replicas import ReplicaRunner, ReplicaTask
from src.flow.codec import verify_path
from src.flow.coupled import (
    _cached_sampler,
    affected_range,
    candidate_rate,
    sample_candidate,
    sampler_for,
    simulate_flow,
)
from src.flow.state import FlowState, LevelGrid, SeedSpec
from src.mechanism.catalog import family_from_spec
from src.mechanism.discrete import DiscreteFlowFamily, build_discrete_family
from src.mechanism.offspring import OffspringLaw
from src.schema import EventKind, Verdict


COUNTS = [2, 4, 6]
THETAS = [0.5, 1.0, 1.5]
KILLING = [0.4, 0.3, 0.2]


@pytest.mark.parametrize(
    "kind,theta,u,expected",
    [
        (EventKind.BIRTH, 0.7, 3.0, (1, 2)),
        (EventKind.BIRTH, 0.2, 1.5, (0, 2)),
        (EventKind.BIRTH, 1.6, 5.5, None),
        (EventKind.DEATH, 0.35, 1.0, (0, 0)),
        (EventKind.DEATH, 0.1, 3.0, (1, 2)),
        (EventKind.DEATH, 0.35, 3.0, None),
    ],
)
def test_affected_range(kind, theta, u, expected):
    assert affected_range(kind, theta, u, COUNTS, THETAS, KILLING) == expected


@pytest.fixture(scope="module")
def nonlocal_k10():
    fam, _ = build_discrete_family(family_from_spec("nonlocal"), 10, extra_thetas=[5.0, 10.0])
    return fam


def test_candidate_rate(constant_family):
    grid = LevelGrid.of([0.5, 1.0])
    # σ·X(q_n)·[(1 - b) + b] with constant b
    assert candidate_rate(constant_family, grid, FlowState.of([2, 7])) == pytest.approx(7.0)
    sampler = sampler_for(constant_family, grid)
    assert sampler.staircase_rate([2, 7]) <= sampler.candidate_rate([2, 7]) + 1e-12


def test_equal_levels_move_together(constant_family):
    grid = LevelGrid.of([0.25, 0.5, 1.0])
    path = simulate_flow(constant_family, grid, [3, 3, 3], 2.0, SeedSpec(master_seed=5, replica_index=0))
    _, states = path.trajectory()
    assert np.all(states == states[:, :1])
    assert path.no_ops == 0


def test_level_order_holds(nonlocal_k10):
    grid = LevelGrid.of([0.5, 1.0])
    for index in range(20):
        path = simulate_flow(nonlocal_k10, grid, [5, 10], 0.5, SeedSpec(master_seed=3, replica_index=index), kappa=10.0)
        report = verify_path(path)
        assert report.verdict is Verdict.PASS, report.problems
        _, states = path.trajectory()
        assert np.all(np.diff(states, axis=1) >= 0)
        assert np.all(states >= 0)


def test_same_seed_same_flow(nonlocal_k10):
    grid = LevelGrid.of([0.5, 1.0])
    seed = SeedSpec(master_seed=8, replica_index=2)
    a = simulate_flow(nonlocal_k10, grid, [5, 10], 0.5, seed, kappa=10.0)
    b = simulate_flow(nonlocal_k10, grid, [5, 10], 0.5, seed, kappa=10.0)
    assert np.array_equal(a.times, b.times)
    assert a.terminal == b.terminal
    assert a.no_ops == b.no_ops


def test_top_level_is_galton_watson(constant_family):
    grid = LevelGrid.of([0.5, 1.0])
    tops = np.array(
        [
            simulate_flow(constant_family, grid, [2, 4], 1.0, SeedSpec(master_seed=21, replica_index=i)).terminal[-1]
            for i in range(3000)
        ]
    )
    se = tops.std(ddof=1) / math.sqrt(tops.size)
    assert abs(tops.mean() - 4.0) <= 4 * se


def test_sample_candidate(constant_family, rng):
    grid = LevelGrid.of([0.5, 1.0])
    event = sample_candidate(constant_family, grid, FlowState.of([1, 3]), rng)
    assert event is not None and 0 <= event.j0 <= event.j1 <= 1
    with pytest.raises(InputError):
        sample_candidate(constant_family, grid, FlowState.of([0, 0]), rng)


def test_flow_input_checks(constant_family):
    grid = LevelGrid.of([0.5, 1.0])
    seed = SeedSpec(master_seed=1, replica_index=0)
    with pytest.raises(InputError):
        simulate_flow(constant_family, grid, [1, 2, 3], 1.0, seed)
    with pytest.raises(InputError):
        simulate_flow(constant_family, grid, [2, 1], 1.0, seed)
    with pytest.raises(InputError):
        simulate_flow(constant_family, grid, [1, 2], math.inf, seed)
    with pytest.raises(InputError):
        simulate_flow(constant_family, grid, [1, 2], 1.0, seed, kappa=20.0)


def test_lower_level_is_galton_watson_at_its_theta(nonlocal_k10):
    # level q_1 = 0.5 at κ = 10 evolves with π_5 on its own
    flow = ReplicaTask(
        fam=nonlocal_k10,
        grid=LevelGrid.of([0.5, 1.0]),
        kappa=10.0,
        x0=(5, 10),
        horizon=0.5,
        times=(0.5,),
        master_seed=31,
        stream=1,
    )
    single = ReplicaTask(
        kind="single",
        law=nonlocal_k10.law_at(5.0),
        sigma=nonlocal_k10.sigma,
        x0=(5,),
        horizon=0.5,
        times=(0.5,),
        master_seed=31,
        stream=2,
    )
    runner = ReplicaRunner()
    flows = asyncio.run(runner.run(flow, 1500))
    singles = asyncio.run(runner.run(single, 1500))
    report = distribution_tests(flows, singles, [0.3, 0.6, 0.9], 0.5, level_a=0)
    assert report.verdict is Verdict.PASS, report.records()
    assert report.replicas_a == report.replicas_b == 1500


def test_accepted_fraction_matches_staircase_rate(nonlocal_k10, rng):
    sampler = sampler_for(nonlocal_k10, LevelGrid.of([0.5, 1.0]), 10.0)
    counts = [5, 10]
    n = 20000
    accepted = 0
    for _ in range(n):
        kind, theta, u, _ = sampler.sample_candidate(counts, rng.random)
        if sampler.affected(kind, theta, u, counts) is not None:
            accepted += 1
    expected = sampler.staircase_rate(counts) / sampler.candidate_rate(counts)
    assert 0.0 < expected < 1.0
    se = math.sqrt(expected * (1.0 - expected) / n)
    assert abs(accepted / n - expected) <= 3 * se


def test_single_level_flow_has_no_idle_candidates(nonlocal_k10):
    grid = LevelGrid.of([1.0])
    sampler = sampler_for(nonlocal_k10, grid, 10.0)
    assert sampler.staircase_rate([10]) == pytest.approx(sampler.candidate_rate([10]))
    for index in range(10):
        path = simulate_flow(nonlocal_k10, grid, [10], 0.5, SeedSpec(master_seed=4, replica_index=index), kappa=10.0)
        assert path.no_ops == 0


def _birth_marks(sampler, counts, rng, n):
    marks = []
    while len(marks) < n:
        kind, theta, _, z = sampler.sample_candidate(counts, rng.random)
        if kind is EventKind.BIRTH:
            marks.append((theta, z))
    return np.array(marks)


def test_births_of_a_linear_family(rng):
    # b(θ) = 0.5 - 0.04θ: atom 0.5 at θ = 0, uniform density 0.04 on (0, 10]
    fam = DiscreteFlowFamily(
        sigma=1.0, theta_max=10.0, law_fn=lambda theta: OffspringLaw.binary(0.5 - 0.04 * theta), name="linear"
    )
    sampler = sampler_for(fam, LevelGrid.of([0.5, 1.0]), 10.0)
    assert sampler.birth_mass == pytest.approx(0.9)
    assert sampler.cell_masses[0] == pytest.approx(0.5)

    marks = _birth_marks(sampler, [5, 10], rng, 9000)
    thetas, zs = marks[:, 0], marks[:, 1]
    assert np.all(zs == 2)
    on_atom = np.mean(thetas == 0.0)
    assert abs(on_atom - 5.0 / 9.0) <= 4 * math.sqrt((5.0 / 9.0) * (4.0 / 9.0) / thetas.size)

    off_atom = thetas[thetas > 0.0]
    assert off_atom.max() <= 10.0
    observed, _ = np.histogram(off_atom, bins=10, range=(0.0, 10.0))
    assert stats.chisquare(observed).pvalue > 1e-3


def test_theta_free_family_births_at_zero(constant_family, rng):
    sampler = sampler_for(constant_family, LevelGrid.of([0.5, 1.0]), 10.0)
    assert np.all(sampler.cell_masses[1:] == 0.0)
    marks = _birth_marks(sampler, [2, 4], rng, 500)
    assert np.all(marks[:, 0] == 0.0)
    assert np.all(marks[:, 1] == 2)


def test_sampler_cache_is_bounded_and_keyed_on_the_family(constant_family, binary_law):
    grid = LevelGrid.of([0.5, 1.0])
    assert sampler_for(constant_family, grid, 10) is sampler_for(constant_family, grid, 10.0)
    other = DiscreteFlowFamily.constant(binary_law, sigma=2.0, theta_max=10.0)
    assert sampler_for(other, grid, 10.0) is not sampler_for(constant_family, grid, 10.0)
    assert _cached_sampler.cache_info().maxsize == 16
    for kappa in range(1, 20):
        sampler_for(constant_family, grid, kappa / 2)
    assert _cached_sampler.cache_info().currsize <= 16
