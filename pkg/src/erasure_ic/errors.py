"""Exception types shared across the package."""


class ErasureICError(Exception):
    """Base class for all package errors."""


class DomainError(ErasureICError, ValueError):
    """Correlation coefficient outside [-1, 1]."""


class InfeasiblePair(ErasureICError, ValueError):
    """(p, rho) pair for which no valid joint link law exists."""


class DegenerateP(ErasureICError, ValueError):
    """p = 0, where the region collapses to the origin and beta is undefined."""


class EmptyGrid(ErasureICError, ValueError):
    pass


class DimensionMismatch(ErasureICError, ValueError):
    pass


class InconsistentSystem(ErasureICError):
    """0 = 1 was derived from the equations."""


class BudgetExceeded(ErasureICError, ValueError):
    """Exhaustive entropy enumeration requested beyond its size budget."""
