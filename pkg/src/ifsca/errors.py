class IfscaError(Exception):
    """Base class for toolkit errors."""


class InputError(IfscaError, ValueError):
    pass


class DomainError(IfscaError, ValueError):
    """A point lies outside the space."""


class ConfigurationError(IfscaError, ValueError):
    pass


class CapExceededError(InputError):
    """Exact enumeration would exceed the word cap."""


class BreakpointError(IfscaError, ValueError):
    """Derivative undefined at a breakpoint of a piecewise map."""
