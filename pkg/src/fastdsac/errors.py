"""Exception hierarchy shared across the package."""


class FastDSACError(Exception):
    pass


class ConfigError(FastDSACError, ValueError):
    """Bad shapes, unknown keys, out-of-range hyperparameters."""


class InputError(FastDSACError, ValueError):
    """Non-finite or otherwise unusable runtime inputs."""


class NumericalFault(FastDSACError, ArithmeticError):
    """A NaN/inf surfaced inside an update.

    ``where`` names the parameter or sample index that carried it.
    """

    def __init__(self, message: str, where: str | int | None = None):
        super().__init__(message)
        self.where = where


class NotReadyError(FastDSACError, RuntimeError):
    """Replay buffer holds fewer transitions than requested."""


class CheckpointError(FastDSACError, IOError):
    pass
