"""Exception hierarchy shared across the toolkit."""


class SentinelError(Exception):
    """Base class for every error raised by this package."""


class ModelError(SentinelError):
    """An event or action was applied where the model does not admit it."""


class InconsistentObservationError(SentinelError):
    """An observation cannot be produced by any candidate state."""


class CapacityError(SentinelError):
    """A construction would exceed the configured state budget."""


class NonConvergenceError(SentinelError):
    """Value iteration hit its iteration cap before reaching tolerance."""

    def __init__(self, message, residual, iterations):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ProtocolViolationError(SentinelError):
    """An adversary emitted an event that is not admissible."""


class ConfigError(SentinelError):
    """A configuration file failed to parse or validate.

    ``violations`` holds one human-readable message per offending field.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
