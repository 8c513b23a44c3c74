from src.mechanism.catalog import CATALOG, family_from_settings, family_from_spec
from src.mechanism.condition import bounded_killing_check, check_condition_5A
from src.mechanism.continuum import (
    Mechanism,
    MechanismFamily,
    ThetaProfile,
    eval_big_psi,
    eval_phi,
    eval_phi_theta,
    eval_psi,
)
from src.mechanism.discrete import DiscreteFlowFamily, build_discrete_family, discrete_mechanism
from src.mechanism.offspring import OffspringLaw, eval_pgf


__all__ = [
    "CATALOG",
    "DiscreteFlowFamily",
    "Mechanism",
    "MechanismFamily",
    "OffspringLaw",
    "ThetaProfile",
    "bounded_killing_check",
    "build_discrete_family",
    "check_condition_5A",
    "discrete_mechanism",
    "eval_big_psi",
    "eval_pgf",
    "eval_phi",
    "eval_phi_theta",
    "eval_psi",
    "family_from_settings",
    "family_from_spec",
]
