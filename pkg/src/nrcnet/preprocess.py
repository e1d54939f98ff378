"""Band-pass filtering and fixed-length framing.

Heart sound recordings are band-passed 50-800 Hz at their native rate,
resampled to 2000 Hz, peak-normalized and framed to exactly 3.5 s
(7000 samples). Lung sounds follow the same chain with a 50-2500 Hz
order-6 filter, clamped when the native Nyquist sits below the band edge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .errors import ConfigError, EmptySignalError, FilterDesignError
from .signal_io import SignalClip, normalize, resample

FRAME_RATE = 2000
FRAME_SECONDS = 3.5
FRAME_LEN = int(FRAME_RATE * FRAME_SECONDS)  # 7000

PCG_BAND = (50.0, 800.0)
PCG_ORDER = 4  # band order for heart sounds; the order-6 requirement applies to lung sounds
LUNG_BAND = (50.0, 2500.0)
LUNG_ORDER = 6
LUNG_EDGE_NYQUIST_FRACTION = 0.95


@dataclass(frozen=True)
class FilterSpec:
    """Butterworth band-pass description. ``order`` follows the scipy design
    convention (an order-N band-pass realizes a 2N-order transfer function)."""

    low_hz: float
    high_hz: float
    order: int
    kind: str = "butterworth_bandpass"

    def validate(self, rate: int) -> None:
        nyquist = rate / 2.0
        if self.kind != "butterworth_bandpass":
            raise ConfigError(f"unknown filter kind {self.kind!r}")
        if self.order < 1:
            raise FilterDesignError(f"order must be >= 1, got {self.order}")
        if not (0.0 < self.low_hz < self.high_hz):
            raise FilterDesignError(
                f"need 0 < low < high, got ({self.low_hz}, {self.high_hz})")
        if self.high_hz >= nyquist:
            raise FilterDesignError(
                f"high edge {self.high_hz} Hz >= Nyquist {nyquist} Hz")


@dataclass(frozen=True)
class Frame:
    """Exactly 7000 samples at 2000 Hz, peak-normalized."""

    samples: np.ndarray
    label: str | None = None
    origin: str = ""
    rate: int = FRAME_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.shape != (FRAME_LEN,):
            raise ConfigError(f"frame must have {FRAME_LEN} samples, got {samples.shape}")
        if self.rate != FRAME_RATE:
            raise ConfigError(f"frame rate must be {FRAME_RATE}, got {self.rate}")
        if np.max(np.abs(samples), initial=0.0) > 1.0 + 1e-12:
            raise ConfigError("frame exceeds unit amplitude; normalize first")
        object.__setattr__(self, "samples", samples)


def butterworth_bandpass(clip: SignalClip, spec: FilterSpec) -> SignalClip:
    """Zero-phase (forward-backward) Butterworth band-pass as second-order sections."""
    spec.validate(clip.rate)
    sos = butter(spec.order, [spec.low_hz, spec.high_hz],
                 btype="bandpass", fs=clip.rate, output="sos")
    filtered = sosfiltfilt(sos, clip.samples)
    return clip.replace(samples=filtered)


def frame_fixed(clip: SignalClip, pad: str = "cycle", overflow: str = "truncate") -> Frame:
    """Force a 2000 Hz clip to exactly 7000 samples.

    Shorter clips are padded by cyclic repetition (``pad="cycle"``) or zeros;
    longer clips are truncated or rejected per ``overflow``.
    """
    if clip.rate != FRAME_RATE:
        raise ConfigError(f"frame_fixed expects {FRAME_RATE} Hz input, got {clip.rate}")
    n = len(clip.samples)
    if n == 0:
        raise EmptySignalError(f"{clip.source_id or 'clip'}: empty signal")
    if n >= FRAME_LEN:
        if n > FRAME_LEN and overflow == "error":
            raise ConfigError(f"{clip.source_id}: {n} samples exceed frame length")
        out = clip.samples[:FRAME_LEN]
    elif pad == "cycle":
        out = np.resize(clip.samples, FRAME_LEN)
    elif pad == "zero":
        out = np.concatenate([clip.samples, np.zeros(FRAME_LEN - n)])
    else:
        raise ConfigError(f"unknown pad mode {pad!r}")
    return Frame(out, label=clip.label, origin=clip.source_id)


def prepare_pcg(clip: SignalClip, band=PCG_BAND, order: int = PCG_ORDER,
                pad: str = "cycle", overflow: str = "truncate") -> Frame:
    """Heart-sound chain: band-pass at native rate, resample to 2000 Hz,
    normalize, frame to 7000 samples."""
    spec = FilterSpec(band[0], band[1], order)
    filtered = butterworth_bandpass(clip, spec)
    at_rate = resample(filtered, FRAME_RATE)
    return frame_fixed(normalize(at_rate), pad=pad, overflow=overflow)


def prepare_lung(clip: SignalClip, band=LUNG_BAND, order: int = LUNG_ORDER,
                 pad: str = "cycle", overflow: str = "truncate") -> Frame:
    """Lung-sound chain; the high band edge is clamped to 0.95x the native
    Nyquist when the recording cannot represent the full 2500 Hz band."""
    nyquist = clip.rate / 2.0
    high = band[1]
    if nyquist <= high:
        high = LUNG_EDGE_NYQUIST_FRACTION * nyquist
    spec = FilterSpec(band[0], high, order)
    filtered = butterworth_bandpass(clip, spec)
    at_rate = resample(filtered, FRAME_RATE)
    return frame_fixed(normalize(at_rate), pad=pad, overflow=overflow)
