from typing import Optional


class BranchFlowError(Exception):
    """Base class for every error raised by the library."""

    def __init__(self, message):
        self.message = message
        super().__init__(message)


class DomainError(BranchFlowError):
    """Raised when an argument lies outside the domain of an operation."""


class GridMismatchError(BranchFlowError):
    """Raised when a grid function does not live on the expected shared grid."""


class AdmissibilityError(BranchFlowError):
    """Raised when no admissible discrete family can be built for a target."""

    def __init__(
        self,
        message,
        coefficient: Optional[float] = None,
        index: Optional[int] = None,
        theta: Optional[float] = None,
    ):
        super().__init__(message)
        self.coefficient = coefficient
        self.index = index
        self.theta = theta


class ResourceError(BranchFlowError):
    """Raised when a simulation exceeds its event cap."""

    def __init__(self, message, replica_index: Optional[int] = None):
        super().__init__(message)
        self.replica_index = replica_index


class InputError(BranchFlowError):
    """Raised on malformed inputs (initial states, level grids, path files)."""


class BlowupError(BranchFlowError):
    """Raised when a cumulant solution leaves the representable range."""


class InsufficientReplicasError(BranchFlowError):
    """Raised when an estimator receives fewer replicas than it needs"""


class MonotonicityError(BranchFlowError):
    """Raised when the level ordering of a flow state is violated."""


class ConfigError(BranchFlowError):
    """Raised when an experiment config cannot be loaded or validated."""
