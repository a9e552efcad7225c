"""Exception types raised across the package."""


class EnvforgeError(Exception):
    """Base class for all package errors."""


class NetworkError(EnvforgeError, ValueError):
    """Invalid network description (schema, topology or references)."""


class PowerFlowError(EnvforgeError, RuntimeError):
    """The exact power flow did not converge."""


class InfeasibleRegionError(EnvforgeError, ValueError):
    """The base operating point violates a feasible-region row."""

    def __init__(self, message, label=None):
        super().__init__(message)
        self.label = label


class SolverError(EnvforgeError, RuntimeError):
    """A solve ended without an optimal point.

    ``status`` carries the backend-independent status string
    (``infeasible``, ``unbounded`` or ``numerical-limit``).
    """

    def __init__(self, message, status="numerical-limit"):
        super().__init__(message)
        self.status = status


class TooManyCustomersError(EnvforgeError, ValueError):
    """Vertex enumeration requested beyond the configured customer cap."""
