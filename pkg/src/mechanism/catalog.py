"""Named parametric mechanism families.

Every entry is φ_θ(z) = b0 z + (c/2) z² + γ_m z²/(ρ_m(ρ_m + z)) + Σ atoms
- θ (h z + γ z/(ρ + z)), i.e. constant h_θ ≡ h and γ_θ ≡ γ.
"""

from typing import Dict

from src.config import FamilySettings
from src.exceptions import ConfigError
from src.mechanism.continuum import Mechanism, MechanismFamily, ThetaProfile


CATALOG: Dict[str, Dict[str, object]] = {
    "feller": {"b0": 0.0, "c": 1.0, "gamma_m": 0.0, "rho_m": 1.0, "h": 0.0, "gamma": 0.0, "rho": 1.0},
    "subcritical_feller": {"b0": 0.5, "c": 1.0, "gamma_m": 0.0, "rho_m": 1.0, "h": 0.0, "gamma": 0.0, "rho": 1.0},
    "nonlocal": {"b0": 0.0, "c": 1.0, "gamma_m": 0.0, "rho_m": 1.0, "h": 0.5, "gamma": 0.5, "rho": 1.0},
    "nonlocal_jump": {"b0": 0.0, "c": 0.5, "gamma_m": 1.0, "rho_m": 1.0, "h": 0.2, "gamma": 0.3, "rho": 2.0},
}


def family_from_spec(name: str, **overrides) -> MechanismFamily:
    """Build a catalog family, numeric fields overridden by keyword."""
    if name not in CATALOG:
        raise ConfigError(f"Unknown mechanism family '{name}', choose from {sorted(CATALOG)}")
    params = {**CATALOG[name], "atoms": ()}
    unknown = set(overrides) - set(params)
    if unknown:
        raise ConfigError(f"Unknown family parameters: {sorted(unknown)}")
    params.update({key: value for key, value in overrides.items() if value is not None})
    try:
        base = Mechanism(
            b=params["b0"],
            sigma2=params["c"],
            gamma_m=params["gamma_m"],
            rho_m=params["rho_m"],
            atoms=tuple(tuple(atom) for atom in params["atoms"]),
        )
        return MechanismFamily(
            base=base,
            h=ThetaProfile.constant(params["h"]),
            gamma=ThetaProfile.constant(params["gamma"]),
            rho=params["rho"],
            name=name,
        )
    except ValueError as e:
        raise ConfigError(f"Invalid parameters for family '{name}': {e}")


def family_from_settings(settings: FamilySettings) -> MechanismFamily:
    return family_from_spec(settings.name, **settings.overrides())
