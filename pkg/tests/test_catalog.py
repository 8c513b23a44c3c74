import pytest

from src.config import FamilySettings
from src.exceptions import ConfigError
from src.mechanism.catalog import CATALOG, family_from_settings, family_from_spec


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_every_catalog_entry_builds(name):
    family = family_from_spec(name)
    assert family.name == name
    assert family.derivative_bound() >= 0


def test_overrides():
    family = family_from_spec("nonlocal", h=0.2, atoms=[[0.5, 0.1]])
    assert family.h.value(0.3) == pytest.approx(0.2)
    assert family.base.atoms == ((0.5, 0.1),)


def test_local_entries():
    assert family_from_spec("feller").is_local
    assert not family_from_spec("nonlocal").is_local


def test_unknown_name_and_parameter():
    with pytest.raises(ConfigError):
        family_from_spec("brownian")
    with pytest.raises(ConfigError):
        family_from_spec("feller", drift=1.0)


def test_invalid_values():
    with pytest.raises(ConfigError):
        family_from_spec("feller", rho=-1.0)


def test_from_settings():
    family = family_from_settings(FamilySettings(name="subcritical_feller", b0=0.25))
    assert family.base.b == 0.25
    assert family.base.sigma2 == 1.0
