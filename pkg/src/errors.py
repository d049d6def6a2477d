class CogallocError(Exception):
    """Base class for all library errors."""


class DomainError(CogallocError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConstraintViolation(CogallocError, ValueError):
    """A model constraint such as k <= L does not hold."""


class PreconditionError(CogallocError):
    """An operation was called in a state it is not defined for."""


class NumericError(CogallocError, ArithmeticError):
    """A numerical routine failed to reach its tolerance."""

    def __init__(self, message: str, **diagnostics: float):
        self.diagnostics = diagnostics
        if diagnostics:
            details = ", ".join(f"{key}={value:.6g}" for key, value in diagnostics.items())
            message = f"{message} ({details})"
        super().__init__(message)


class OracleCapExceeded(CogallocError):
    """Exhaustive search refused because the instance is too large."""


class ConfigError(CogallocError):
    """Run configuration could not be parsed or validated."""

    def __init__(self, message: str, problems: list[str] | None = None):
        self.problems = problems or []
        if self.problems:
            message = message + "\n" + "\n".join(f"  - {p}" for p in self.problems)
        super().__init__(message)
