"""Exception types raised by the estimation engine."""


class PanelError(ValueError):
    """Malformed or unusable input panel."""


class ConfigError(ValueError):
    """Invalid run configuration or hyperparameters."""


class NumericalError(RuntimeError):
    """A sampler block produced non-finite or non-SPD quantities.

    Carries the iteration and block name when raised from inside a chain so
    that the failure can be located without re-running.
    """

    def __init__(self, message, *, iteration=None, block=None):
        self.iteration = iteration
        self.block = block
        where = []
        if iteration is not None:
            where.append(f"iteration {iteration}")
        if block is not None:
            where.append(f"block {block!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class EvaluationError(ValueError):
    """Forecast evaluation has nothing to evaluate or inconsistent inputs."""
