"""Exception types raised across the package."""


class LqgError(Exception):
    """Base class for every error raised by lqglab."""


class ParameterError(LqgError, ValueError):
    """Input outside the admissible parameter range."""


class NumericalError(LqgError, RuntimeError):
    """A numerical routine failed (root not bracketed, blow-up, ...)."""


class BoundaryError(LqgError, ValueError):
    """A boundary quantity was requested on a surface without boundary."""


class InfiniteMeasureError(LqgError, ValueError):
    """The requested law is not normalizable in this parameter regime."""


class NoClosedFormError(LqgError, ValueError):
    """No closed form is known for the requested weight."""


class InsufficientSamplesError(LqgError, ValueError):
    """Too few (effective) samples for the requested statistic."""


class ComponentError(LqgError, RuntimeError):
    """Complementary-component detection failed in the multiple SLE sampler."""


class UnknownCheckError(LqgError, KeyError):
    """A check name that is not in the registry."""
