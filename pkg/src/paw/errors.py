"""Exception hierarchy shared by the solvers and the command line."""


class PawError(Exception):
    """Base class for every error raised by this package."""


class StructureError(PawError, ValueError):
    """Malformed objects: wrong shapes, indices out of range, inconsistent quotas."""


class InputError(PawError, ValueError):
    """A file or flag could not be parsed; the message names the offending field."""


class ContractViolation(PawError, ValueError):
    """A documented precondition of an operation does not hold."""


class InfeasibleBudget(PawError):
    """No quota vector fits the budget (the budget is below ``m * c_min``)."""


class CapExceeded(PawError):
    """The requested enumeration is larger than the configured cap."""


class InvariantFailure(PawError, AssertionError):
    """An internal guarantee was violated; indicates a bug, not bad input."""
