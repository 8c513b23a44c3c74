from src.experiment.audit import (
    distribution_tests,
    increment_audit,
    moment_audit,
    stability_audit,
    zscore_calibration,
)
from src.experiment.convergence import (
    ConvergenceReport,
    calibrate_slack_constant,
    convergence_experiment,
    initial_staircase,
)
from src.experiment.functions import TestFunction
from src.experiment.laplace import LaplaceEstimate, estimate_laplace
from src.experiment.martingale import MartingaleCompensator, martingale_residual, martingale_terms
from src.experiment.replicas import ReplicaRunner, ReplicaSet, ReplicaTask


__all__ = [
    "ConvergenceReport",
    "LaplaceEstimate",
    "MartingaleCompensator",
    "ReplicaRunner",
    "ReplicaSet",
    "ReplicaTask",
    "TestFunction",
    "calibrate_slack_constant",
    "convergence_experiment",
    "distribution_tests",
    "estimate_laplace",
    "increment_audit",
    "initial_staircase",
    "martingale_residual",
    "martingale_terms",
    "moment_audit",
    "stability_audit",
    "zscore_calibration",
]
