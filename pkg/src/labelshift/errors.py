"""Exception hierarchy shared across the toolkit."""


class LabelShiftError(Exception):
    """Base class for all toolkit errors."""


class IdentifiabilityError(LabelShiftError):
    """The problem instance does not pin down a unique weight vector."""


class ConvergenceError(LabelShiftError):
    """An iterative solver stopped without meeting its tolerance."""


class InputError(LabelShiftError):
    """Malformed input data or configuration."""
