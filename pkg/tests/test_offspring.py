import numpy as np
import pytest
from pydantic import ValidationError

from src.exceptions import DomainError
from src.mechanism.offspring import OffspringLaw, eval_pgf


def test_binary_law_moments(binary_law):
    assert binary_law.mean == pytest.approx(1.0)
    assert binary_law.p0 == 0.5
    assert binary_law.support_bound == 2


def test_rejects_unnormalized_and_negative():
    with pytest.raises(ValidationError):
        OffspringLaw.from_probs([0.5, 0.4])
    with pytest.raises(ValidationError):
        OffspringLaw.from_probs([1.2, -0.2])
    with pytest.raises(ValidationError):
        OffspringLaw.from_probs([])


def test_pgf_values(binary_law):
    assert eval_pgf(binary_law, 0.0) == 0.5
    assert eval_pgf(binary_law, 1.0) == 1.0
    assert eval_pgf(binary_law, 0.5) == pytest.approx(0.5 + 0.5 * 0.25)


def test_pgf_domain(binary_law):
    with pytest.raises(DomainError):
        eval_pgf(binary_law, 1.5)
    with pytest.raises(DomainError):
        eval_pgf(binary_law, -0.1)


def test_sampling_frequencies(rng):
    law = OffspringLaw.from_probs([0.2, 0.3, 0.5])
    draws = np.array([law.sample(rng) for _ in range(20000)])
    freq = np.bincount(draws, minlength=3) / draws.size
    assert np.allclose(freq, law.probs, atol=0.02)
