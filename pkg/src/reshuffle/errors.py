"""Exception types raised across the package."""


class InvalidParameterError(ValueError):
    """A constructor or operation received parameters outside its domain."""


class ConditionError(ValueError):
    """A step-size window required by an operation does not hold."""


class ConfigurationError(ValueError):
    """Malformed run configuration or exhausted permutation list."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InsufficientDataError(ValueError):
    """Too few usable points for a regression."""


class NumericalFailure(ArithmeticError):
    """A non-finite iterate or a non-converged proximal subproblem.

    ``epoch`` and ``index`` are 1-based (epoch t, inner step i).  When raised
    from :func:`reshuffle.optim.run`, ``trajectory`` holds the partial run.
    """

    def __init__(self, message, epoch, index, residual=None, trajectory=None):
        super().__init__(f"{message} (epoch {epoch}, step {index})")
        self.reason = message
        self.epoch = epoch
        self.index = index
        self.residual = residual
        self.trajectory = trajectory
