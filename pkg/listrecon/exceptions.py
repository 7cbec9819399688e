"""
Error hierarchy for the reconstruction toolkit.

Each error also derives from the builtin exception closest to its meaning, so
callers that only know about ValueError or IndexError still catch it.
"""


class ListreconError(Exception):
    """Base class for all toolkit errors."""


class InvalidConfigError(ListreconError, ValueError):
    """A scanner, TOF, simulation or run configuration is not usable."""


class DegenerateLorError(ListreconError, ValueError):
    """Both ends of a line of response are the same crystal."""


class DetectorIndexError(ListreconError, IndexError):
    """A crystal index lies outside the ring."""


class BinIndexError(ListreconError, IndexError):
    """A TOF bin index lies outside [0, n_bins)."""


class InvalidKernelError(ListreconError, ValueError):
    """TOF kernel parameters are non-positive."""


class DimensionError(ListreconError, ValueError):
    """Array shapes or lengths do not match the projection context."""


class InvalidSimulationError(ListreconError):
    """The simulated expectation is zero everywhere."""


class EmptyDataError(ListreconError):
    """An algorithm or command received no events or no samples."""


class ObjectiveSingularError(ListreconError, ArithmeticError):
    """The log-likelihood hit log(0) for at least one event."""


class StepConfigError(ListreconError):
    """Primal-dual iterations diverged for the configured step sizes."""


class LmpdStateError(ListreconError, RuntimeError):
    """A backward pass was requested without a recorded forward pass."""


class TrainingDivergedError(ListreconError):
    """Training produced a non-finite loss.

    ``checkpoint`` holds the last parameter state whose loss was finite.
    """

    def __init__(self, message, checkpoint=None, epoch=None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.epoch = epoch


class InvalidMetricError(ListreconError, ValueError):
    """A metric is undefined for its inputs (zero contrast, zero mean, ...)."""


class FileFormatError(ListreconError):
    """A binary file has a bad magic, version or record count."""


class HashMismatchError(ListreconError):
    """Files or checkpoints were produced under a different configuration."""
