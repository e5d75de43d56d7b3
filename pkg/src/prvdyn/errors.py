"""Exception types raised across the package."""


class PrvError(Exception):
    """Base class for all package errors."""


class DomainError(PrvError, ValueError):
    """An argument lies outside the domain where a relation is defined."""


class ConfigError(PrvError, ValueError):
    """A configuration document failed validation."""


class TransversalityError(PrvError, ArithmeticError):
    """The sliding projection is undefined because C·J·B vanishes."""


class AssemblyError(PrvError, ArithmeticError):
    """The reduced-order mass matrix could not be inverted."""


class NotApplicableError(PrvError):
    """The requested analysis does not apply at this operating point."""


class StepSizeError(PrvError, ValueError):
    """A time step violates the stability limit of an explicit scheme."""

    def __init__(self, msg, dt_max):
        super().__init__(msg)
        self.dt_max = dt_max


class FlowReversal(PrvError, ArithmeticError):
    """The pipe state left the region where the flow model is valid."""
