import math
import pickle

import numpy as np
import pytest

from src.exceptions import AdmissibilityError, DomainError
from src.mechanism.continuum import Mechanism, MechanismFamily
from src.mechanism.discrete import (
    EXPAND_CACHE,
    build_discrete_family,
    discrete_mechanism,
    discrete_mechanism_grid,
)


def test_feller_recipe_is_binary_splitting(feller):
    fam, sigma_k = build_discrete_family(feller, 10, n_theta=11)
    assert sigma_k == pytest.approx(10.0)
    law = fam.law_at(3.0)
    assert law.probs[:3] == pytest.approx([0.5, 0.0, 0.5])
    assert law.mean == pytest.approx(1.0)


def test_feller_discrete_mechanism_closed_form(feller):
    k = 20
    fam, sigma_k = build_discrete_family(feller, k, n_theta=11)
    z = 2.0
    expected = k * k * (1.0 - math.exp(-z / k)) ** 2 / 2.0
    assert discrete_mechanism(k, sigma_k, fam, 0.5, z) == pytest.approx(expected, rel=1e-10)


def test_nonlocal_recipe_is_admissible(nonlocal_family):
    fam, sigma_k = build_discrete_family(nonlocal_family, 10, n_theta=21)
    assert sigma_k > 0
    thetas = np.linspace(0.0, 10.0, 21)
    for theta in thetas:
        law = fam.law_at(theta)
        assert law.probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(law.probs >= 0)
    b = [fam.b(t) for t in thetas]
    assert all(later <= earlier + 1e-12 for earlier, later in zip(b, b[1:]))
    diagnostics = fam.diagnostics
    assert diagnostics is not None and diagnostics.truncation_tail <= 1e-12


def test_recipe_approaches_target(nonlocal_family):
    z = np.linspace(0.0, 3.0, 7)
    errors = []
    for k in (10, 40):
        fam, _ = build_discrete_family(nonlocal_family, k, n_theta=11)
        approx = discrete_mechanism_grid(k, fam, 0.5, z)
        errors.append(float(np.max(np.abs(approx - nonlocal_family.phi_theta(0.5, z)))))
    assert errors[1] < errors[0]


def test_discrete_mechanism_domain(feller):
    fam, sigma_k = build_discrete_family(feller, 5, n_theta=6)
    with pytest.raises(DomainError):
        discrete_mechanism(5, sigma_k, fam, 2.0, 1.0)
    with pytest.raises(DomainError):
        discrete_mechanism(5, sigma_k, fam, 0.5, -1.0)
    with pytest.raises(DomainError):
        build_discrete_family(feller, 0)


def test_law_outside_theta_range(constant_family):
    with pytest.raises(DomainError):
        constant_family.law_at(11.0)
    with pytest.raises(DomainError):
        constant_family.law_at(-0.5)


def test_recipe_expansion_cache_is_bounded_and_survives_pickling(feller):
    fam, _ = build_discrete_family(feller, 10, n_theta=11)
    recipe = fam.law_fn
    assert recipe.expand(2.0) is recipe.expand(2)
    info = recipe._expand.cache_info()
    assert info.maxsize == EXPAND_CACHE
    assert info.hits >= 1

    clone = pickle.loads(pickle.dumps(fam))
    assert clone.law_fn._expand.cache_info().currsize == 0
    assert np.allclose(clone.law_at(2.0).probs, fam.law_at(2.0).probs)
    assert isinstance(fam.diagnostics.validation_thetas, tuple)
    assert hash(fam) == hash(fam)


def test_negative_killing_is_not_admissible():
    # φ_0(k) < 0 forces p_0 < 0
    target = MechanismFamily(base=Mechanism(b=-5.0, sigma2=0.01))
    with pytest.raises(AdmissibilityError) as info:
        build_discrete_family(target, 10, n_theta=3)
    assert info.value.index == 0
