"""Exception types raised by the adaptive KMPC package."""


class KmpcError(Exception):
    """Base class for all package errors."""


class ConfigurationError(KmpcError, ValueError):
    """Unsupported or inconsistent configuration (scenario files, dictionaries)."""


class InputError(KmpcError, ValueError):
    """Invalid arguments: wrong dimensions, non-finite data, bad ordering."""


class IdentificationError(KmpcError, RuntimeError):
    """Not enough usable data to identify a model."""


class NumericalError(KmpcError, ArithmeticError):
    """A numerical routine failed or produced non-finite values."""


class GenerationError(KmpcError, RuntimeError):
    """Reference trajectory generation diverged."""


class ControllerError(KmpcError, RuntimeError):
    """The controller cannot produce a control (e.g. an infeasible QP)."""
