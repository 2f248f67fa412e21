"""Exception types shared across modules."""


class DomainError(ValueError):
    """Argument outside the domain where a function is defined."""


class ConvergenceError(ArithmeticError):
    """An iterative solver or quadrature did not reach its tolerance."""


class MemoryBudgetError(MemoryError):
    """A sampled tree would exceed the configured node cap."""


class BoundaryContactError(RuntimeError):
    """A random walk touched the truncation height of its environment."""


class StepBudgetError(RuntimeError):
    """A random walk exhausted its step budget before reaching its target."""


class TooFewSamplesError(ValueError):
    pass


class DegenerateInputError(ValueError):
    pass


class LengthMismatchError(ValueError):
    pass


class ConfigError(ValueError):
    """Malformed experiment configuration; carries the offending line number."""

    def __init__(self, message, line=None, field=None):
        self.message = message
        self.line = line
        self.field = field
        where = ""
        if line is not None:
            where = f"line {line}: "
        if field is not None:
            where += f"[{field}] "
        super().__init__(where + message)
