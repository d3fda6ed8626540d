"""Exception types shared across the package."""


class GansslError(Exception):
    """Base class for all package errors."""


class ShapeError(GansslError, ValueError):
    """Inputs have incompatible shapes or grids."""


class DomainError(GansslError, ValueError):
    """An argument lies outside the domain of the operation."""


class SupportViolation(DomainError):
    """``p - eps * q`` dropped below the density floor where ``p`` has mass."""

    def __init__(self, message, cells=()):
        super().__init__(message)
        self.cells = tuple(cells)


class NumericError(GansslError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


class ContractError(GansslError, ValueError):
    """A caller broke an operation's precondition."""


class ConfigError(GansslError, ValueError):
    """Invalid experiment configuration."""


class TrainingFailure(GansslError, RuntimeError):
    """Training could not proceed to a meaningful result."""
