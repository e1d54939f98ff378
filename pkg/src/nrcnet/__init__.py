"""Noise-robust heart sound classification pipeline."""

__version__ = "0.1.0"

from .errors import NrcError  # noqa: F401
from .preprocess import FRAME_LEN, FRAME_RATE, Frame  # noqa: F401
from .signal_io import Manifest, SignalClip  # noqa: F401
