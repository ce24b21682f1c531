"""Exception types shared across the package."""


class ModelError(Exception):
    """Base class for all capreg errors."""


class DomainError(ModelError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class DegenerateModelError(ModelError):
    """A parameter combination makes the model singular (e.g. a vanishing
    cost determinant or a singular payment system)."""

    def __init__(self, message: str, condition_number: float | None = None):
        if condition_number is not None:
            message = f"{message} (condition number {condition_number:.3e})"
        super().__init__(message)
        self.condition_number = condition_number


class UnsupportedCaseError(ModelError):
    """The operation is only defined for a restricted parameter family."""


class ConvergenceError(ModelError):
    """The fixed-point iteration did not reach the target residual."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class ConfigError(ModelError):
    """A scenario configuration is malformed; ``field`` names the offender."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = ""
        if line is not None:
            where = f" (line {line})"
        if field is not None:
            message = f"field '{field}': {message}"
        super().__init__(message + where)
        self.field = field
        self.line = line
