"""Two-user erasure interference channel with delayed, spatially correlated CSIT."""

from __future__ import annotations

from ._backend import backend_name
from .errors import (
    BudgetExceeded,
    DegenerateP,
    DimensionMismatch,
    DomainError,
    EmptyGrid,
    ErasureICError,
    InconsistentSystem,
    InfeasiblePair,
)
from .region import (
    CapacityRegion,
    beta,
    boundary_polyline,
    capacity_region,
    feasible_set,
    max_symmetric_rate,
    solve_joint_distribution,
    sum_rate_curve,
    total_time_factor,
)

__version__ = "0.1.0"

__all__ = [
    "BudgetExceeded",
    "CapacityRegion",
    "DegenerateP",
    "DimensionMismatch",
    "DomainError",
    "EmptyGrid",
    "ErasureICError",
    "InconsistentSystem",
    "InfeasiblePair",
    "__version__",
    "backend_name",
    "beta",
    "boundary_polyline",
    "capacity_region",
    "feasible_set",
    "max_symmetric_rate",
    "solve_joint_distribution",
    "sum_rate_curve",
    "total_time_factor",
]
