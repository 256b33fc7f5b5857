"""Secrecy-outage bounds, pencil eigenvalue counting, projection operators,
tabular actor-critic learning and possibilistic semi-Markov simulation."""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    ConfigError,
    ContourTouchesSpectrumError,
    DegenerateGapError,
    DegenerateGeometryError,
    DomainError,
    InvalidDimensionError,
    MGFOverflowError,
    NumericalError,
    SingularPencilError,
    SopToolsError,
    UndefinedBoundError,
    UnreliableCountError,
)
from .pencil import Circle, Keyhole, MatrixPencil, count_eigs_contour, direct_eig_oracle  # noqa: E402
from .policy import NaturalActorCritic, train  # noqa: E402
from .projection import ProjectionOperator, proj  # noqa: E402
from .volume import EmpiricalDistribution, EntropyVolumeEstimator, GreedyThresholdSearch  # noqa: E402

__all__ = [
    "Circle",
    "ConfigError",
    "ContourTouchesSpectrumError",
    "DegenerateGapError",
    "DegenerateGeometryError",
    "DomainError",
    "EmpiricalDistribution",
    "EntropyVolumeEstimator",
    "GreedyThresholdSearch",
    "InvalidDimensionError",
    "Keyhole",
    "MGFOverflowError",
    "MatrixPencil",
    "NaturalActorCritic",
    "NumericalError",
    "ProjectionOperator",
    "SingularPencilError",
    "SopToolsError",
    "UndefinedBoundError",
    "UnreliableCountError",
    "count_eigs_contour",
    "direct_eig_oracle",
    "proj",
    "train",
]
