"""Exception types shared across the pipeline.

The CLI maps these onto exit codes: input/validation problems exit 2,
stage ordering problems exit 3, numerics problems exit 4.
"""


class NrcError(Exception):
    """Base class for all pipeline errors."""


class FormatError(NrcError):
    """Malformed file header or container structure."""


class UnsupportedError(NrcError):
    """File is well-formed but uses an encoding we do not handle."""


class ManifestError(NrcError):
    """Bad manifest row. Carries the 1-based data row number when known."""

    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class FilterDesignError(NrcError):
    """Filter band is invalid for the signal's sample rate."""


class EmptySignalError(NrcError):
    """Operation received a zero-length signal."""


class ShortFrameError(NrcError):
    """Signal too short for the requested analysis window."""


class ZeroNoiseError(NrcError):
    """Noise reference is identically zero; SNR undefined."""


class ZeroSignalError(NrcError):
    """Signal is identically zero; SNR target unreachable."""


class ConfigError(NrcError):
    """Invalid configuration value or combination."""


class ShapeError(NrcError):
    """Tensor shapes are incompatible for the requested operation."""


class NumericsError(NrcError):
    """Non-finite value encountered where finite arithmetic is required."""


class ClassError(NrcError):
    """Class index or label outside the configured class set."""


class StratifyError(NrcError):
    """A class has too few samples to stratify across the requested folds."""


class StageOrderError(NrcError):
    """A pipeline stage was invoked before its upstream stage produced artifacts."""
