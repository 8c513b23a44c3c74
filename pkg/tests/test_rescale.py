import numpy as np
import pytest

from src.cumulant.grid import GridFunction, UniformGrid
from src.exceptions import InputError
from src.flow.rescale import pair_counts, pairing_check, rescale
from src.flow.state import LevelGrid


def test_values_and_masses(two_level_path):
    view = rescale(two_level_path, 10)
    assert view.values(0.0) == pytest.approx([0.5, 1.0])
    assert view.masses(0.0) == pytest.approx([0.5, 0.5])
    assert view.total_mass(0.3) == pytest.approx(1.2)
    assert view.at(0.7, 0.0) == pytest.approx(0.5)
    assert view.at(0.2, 0.0) == 0.0


def test_pairings_agree(two_level_path):
    view = rescale(two_level_path, 10)
    identity = lambda q: np.asarray(q, dtype=float)  # noqa: E731
    assert view.pairing(identity, 0.0) == pytest.approx(0.75)
    assert view.pair_by_parts(lambda q: q, lambda q: 1.0, 0.0) == pytest.approx(0.75)
    assert view.pairing([2.0, 1.0], 0.0) == pytest.approx(1.5)
    step = GridFunction.step(UniformGrid(m=20), [0.5], [1.0])
    assert view.pairing(step, 0.0) == pytest.approx(0.5)


def test_scale_must_match_kappa(two_level_path):
    with pytest.raises(InputError):
        rescale(two_level_path, 20)
    with pytest.raises(InputError):
        rescale(two_level_path, 0)


def test_pair_counts_broadcasts():
    counts = np.array([[5, 10], [5, 12], [4, 11]])
    assert pair_counts(counts, np.array([1.0, 1.0]), 10) == pytest.approx([1.0, 1.2, 1.1])
    assert pair_counts(counts, np.array([1.0, 0.0]), 10) == pytest.approx([0.5, 0.5, 0.4])


def test_pairing_check_agrees_with_by_parts(two_level_path):
    rows = pairing_check(two_level_path, 10, [0.0, 0.3, 1.0])
    assert len(rows) == 6
    assert all(row["pass"] == "PASS" for row in rows)
    by_name = {(row["t"], row["f"]): row for row in rows}
    # terminal staircase (4, 11): masses 0.4 at q = 0.5 and 0.7 at q = 1
    assert by_name[(1.0, "x")]["pairing"] == pytest.approx(0.9)
    assert by_name[(1.0, "exp(-x)")]["by_parts"] == pytest.approx(0.4 * np.exp(-0.5) + 0.7 * np.exp(-1.0), abs=1e-7)


def test_pairing_check_needs_grid_ending_at_one(two_level_path):
    path = two_level_path.model_copy(update={"grid": LevelGrid.of([0.25, 0.5])})
    with pytest.raises(InputError):
        pairing_check(path, 10, [0.0])
