"""Exception types shared across the package."""


class ContractError(ValueError):
    """An argument violates a documented precondition (dimension mismatch,
    negative variance, unequal sample counts, ...)."""


class UnsupportedNoiseError(ContractError):
    """The requested gradient-noise kind cannot be applied to this model."""


class ScheduleError(ContractError):
    """A stepsize schedule is degenerate or violates monotonicity."""


class ConfigError(ValueError):
    """Experiment configuration is invalid.  ``field`` holds the offending
    ``section.key`` path when known."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class DivergenceError(RuntimeError):
    """A trajectory produced a non-finite coordinate.

    ``step`` is the leapfrog step index within the call; drivers re-raise
    with ``iteration`` and ``node`` filled in.
    """

    def __init__(self, message: str, step: int | None = None,
                 iteration: int | None = None, node: int | None = None):
        self.step = step
        self.iteration = iteration
        self.node = node
        super().__init__(message)


class NonConvergenceError(RuntimeError):
    """A threshold-stopping run hit its iteration cap."""
