"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError and its
subclasses -> 2, numerical-check failures -> 3.
"""


class RobokaError(Exception):
    """Base class for all package errors."""


class ConfigError(RobokaError):
    """Invalid configuration value or flag combination."""


class DataError(RobokaError):
    """Dataset, manifest, or input-tensor problem."""


class SplitError(DataError):
    """Requested split protocol is infeasible on the given records."""


class CheckpointError(DataError):
    """Checkpoint file is malformed, truncated, or fails its checksum."""


class ShapeError(RobokaError):
    """Tensor dimensions do not match a layer or model contract."""


class EvaluationError(RobokaError):
    """Non-finite or otherwise unusable numeric input."""
