import pytest

from src.exceptions import InputError
from src.mechanism.condition import bounded_killing_check, check_condition_5A
from src.mechanism.continuum import Mechanism, MechanismFamily
from src.schema import Verdict


def test_feller_errors_halve_with_k(feller):
    report = check_condition_5A(feller, [10, 20, 40], grid_bound=5.0, n_grid=21)
    assert report.verdict is Verdict.PASS
    assert report.nonincreasing
    errors = [row.sup_error for row in report.rows]
    assert errors == sorted(errors, reverse=True)
    # at z = 5 the error is k²(1 - e^{-5/k})²/2 - 12.5 in absolute value
    assert errors[0] == pytest.approx(4.759, abs=1e-3)
    assert all(1.5 <= ratio <= 2.5 for ratio in report.ratios)


def test_unsorted_k_list_is_sorted(feller):
    report = check_condition_5A(feller, [20, 10], grid_bound=2.0, n_grid=11)
    assert [row.k for row in report.rows] == [10, 20]


def test_condition_inputs(feller):
    with pytest.raises(InputError):
        check_condition_5A(feller, [])
    with pytest.raises(InputError):
        check_condition_5A(feller, [10], grid_bound=0.0)


def test_killing_grows_with_diffusion(feller):
    report = bounded_killing_check(feller, [5, 10, 20])
    assert report.values == pytest.approx([2.5, 5.0, 10.0])
    assert report.growing


def test_pure_drift_killing_is_bounded():
    target = MechanismFamily(base=Mechanism(b=1.0))
    report = bounded_killing_check(target, [5, 10, 20])
    assert report.values == pytest.approx([1.0, 1.0, 1.0])
    assert not report.growing
