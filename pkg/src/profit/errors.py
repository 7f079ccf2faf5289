"""Exception types shared across the library.

``ConfigError`` maps to CLI exit code 1, everything else here to exit code 2.
"""


class DimensionMismatchError(ValueError):
    """Two vectors (or a vector and a state buffer) disagree in length."""


class NonFiniteError(ValueError):
    """A NaN or Inf appeared where only finite values are allowed."""


class BatchStreamExhaustedError(RuntimeError):
    """The batch stream ended before an optimizer step got all its batches."""


class CheckpointError(ValueError):
    """A checkpoint file is missing, corrupt, or structurally incompatible."""


class ConfigError(ValueError):
    """A run configuration is malformed or contains unknown keys."""
