"""Exception hierarchy shared across the package."""


class GridShedError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(GridShedError):
    """Input data violates a model invariant or precondition."""


class ParseError(ValidationError):
    """A file could not be parsed; message carries location context."""


class CapacityError(ValidationError):
    """A size guard was exceeded (player count, factorial enumeration)."""


class InfeasiblePlanError(GridShedError):
    """Requested shedding cannot be met by the candidate loads."""
