"""Exception types raised across the package."""


class CegrlError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(CegrlError, ValueError):
    pass


class OutOfBounds(CegrlError, ValueError):
    def __init__(self, coordinates, message=None):
        self.coordinates = list(coordinates)
        super().__init__(message or f"config coordinates out of bounds: {self.coordinates}")


class NumericalOverflow(CegrlError, ArithmeticError):
    pass


class NotPositiveDefinite(CegrlError, ArithmeticError):
    pass


class BudgetTooSmall(CegrlError, ValueError):
    pass


class EmptyCounterexampleSet(CegrlError, ValueError):
    pass


class InsufficientIterations(CegrlError, ValueError):
    pass


class DegenerateTrace(CegrlError, ValueError):
    pass


class InvalidPerturbation(CegrlError, ValueError):
    pass


class EnumerationTooLarge(CegrlError, ValueError):
    pass


class ConfigError(CegrlError, ValueError):
    """Malformed scenario/config file; ``field`` names the offending key."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class IncompleteRun(CegrlError, FileNotFoundError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__(f"run directory is missing: {', '.join(self.missing)}")
