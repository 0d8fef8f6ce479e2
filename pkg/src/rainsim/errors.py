"""Exception hierarchy shared by every rainsim module."""


class RainSimError(Exception):
    """Base class for all rainsim errors."""


class FormatError(RainSimError, ValueError):
    """A point-cloud or config file does not match its declared layout."""


class ArgumentError(RainSimError, ValueError):
    """An argument violates an operation's precondition."""


class ValidationError(RainSimError, ValueError):
    """Input data violates a domain invariant (NaN coordinate, negative intensity, ...)."""


class DegeneratePointError(ValidationError):
    """A point coincides with the LiDAR origin, so range-dependent math is undefined."""


class DomainError(ValidationError):
    """A physical quantity is outside the domain of a formula."""


class LabelError(ValidationError):
    """An operation that needs noise labels met an unlabeled point."""
