"""Max-entropy actor-critic with dimension-wise entropy modulation, in numpy."""

from .errors import (
    CheckpointError,
    ConfigError,
    FastDSACError,
    InputError,
    NotReadyError,
    NumericalFault,
)

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ConfigError",
    "FastDSACError",
    "InputError",
    "NotReadyError",
    "NumericalFault",
    "__version__",
]
