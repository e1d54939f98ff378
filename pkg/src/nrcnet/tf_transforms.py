"""Time-frequency transforms (STFT, MFCC, Morse-wavelet CWT, CQT) and the
rendering step that turns any of them into a 224x224x3 image.

Rendering: magnitude/power matrices go to dB with an 80 dB floor below the
matrix max (MFCC skips the dB step), per-image min-max to [0,1], bilinear
resize, then a fixed 256-entry monotone-luminance colormap. Low frequencies
end up at the bottom of the image.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import dct

from .errors import ConfigError, FormatError, ShortFrameError
from .preprocess import FRAME_RATE

IMAGE_SIZE = 224
TRANSFORM_KINDS = ("cwt", "cqt", "stft", "mfcc")

DB_FLOOR = 80.0
DB_EPS = 1e-12


@dataclass(frozen=True)
class STFTParams:
    win_len: int = 128  # Hann
    hop: int = 64

    def __post_init__(self):
        if self.hop > self.win_len:
            raise ConfigError("hop must not exceed window length")


@dataclass(frozen=True)
class MFCCParams:
    win_ms: float = 30.0  # Hamming
    hop_ms: float = 10.0
    n_mels: int = 26
    n_coeffs: int = 13
    n_fft: int = 256

    def __post_init__(self):
        if self.n_coeffs > self.n_mels:
            raise ConfigError("cannot keep more coefficients than mel filters")


@dataclass(frozen=True)
class MorseParams:
    gamma: float = 3.0   # symmetry
    beta: float = 20.0   # gamma*beta = 60, the time-bandwidth product
    voices_per_octave: int = 10

    def __post_init__(self):
        if self.gamma <= 0 or self.beta <= 0:
            raise ConfigError("Morse parameters must be positive")


@dataclass(frozen=True)
class CQTParams:
    bins_per_octave: int = 12
    f_min: float = 40.0
    f_max: float = 1000.0
    win_len: int = 128  # Hann envelope floor for short atoms
    hop: int = 64


def _signal_of(frame) -> np.ndarray:
    return np.asarray(frame.samples if hasattr(frame, "samples") else frame,
                      dtype=np.float64)


# ---------------------------------------------------------------------------
# STFT
# ---------------------------------------------------------------------------

def stft(frame, params: STFTParams = STFTParams()) -> np.ndarray:
    """Complex spectrogram, shape (win_len/2 + 1, n_frames). Column t is the
    DFT of the periodic-Hann-windowed slice starting at t*hop."""
    x = _signal_of(frame)
    win_len, hop = params.win_len, params.hop
    if len(x) < win_len:
        raise ShortFrameError(f"{len(x)} samples < window {win_len}")
    n_cols = (len(x) - win_len) // hop + 1
    idx = hop * np.arange(n_cols)[:, None] + np.arange(win_len)[None, :]
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win_len) / win_len)
    return np.fft.rfft(x[idx] * window, axis=1).T


# ---------------------------------------------------------------------------
# MFCC
# ---------------------------------------------------------------------------

def mel_of_hz(f):
    """m = 2595 * log10(1 + f/700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def hz_of_mel(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, rate: int) -> np.ndarray:
    """Triangular filters with corner frequencies uniform on the mel scale,
    spanning 0..Nyquist. Shape (n_mels, n_fft//2 + 1)."""
    nyquist = rate / 2.0
    corners_hz = hz_of_mel(np.linspace(0.0, mel_of_hz(nyquist), n_mels + 2))
    bin_hz = np.arange(n_fft // 2 + 1) * rate / n_fft
    bank = np.zeros((n_mels, len(bin_hz)))
    for j in range(n_mels):
        lo, mid, hi = corners_hz[j], corners_hz[j + 1], corners_hz[j + 2]
        up = (bin_hz - lo) / (mid - lo)
        down = (hi - bin_hz) / (hi - mid)
        bank[j] = np.clip(np.minimum(up, down), 0.0, None)
    return bank


def mfcc(frame, params: MFCCParams = MFCCParams()) -> np.ndarray:
    """Mel-frequency cepstral coefficients, shape (n_coeffs, n_frames).

    Per frame: Hamming window, power spectrum, mel filter energies, log
    (floored at 1e-10), orthonormal DCT-II, keep coefficients 0..n_coeffs-1.
    """
    x = _signal_of(frame)
    rate = getattr(frame, "rate", FRAME_RATE)
    win_len = int(round(params.win_ms * rate / 1000.0))
    hop = int(round(params.hop_ms * rate / 1000.0))
    if len(x) < win_len:
        raise ShortFrameError(f"{len(x)} samples < window {win_len}")
    n_cols = (len(x) - win_len) // hop + 1
    idx = hop * np.arange(n_cols)[:, None] + np.arange(win_len)[None, :]
    segments = x[idx] * np.hamming(win_len)
    power = np.abs(np.fft.rfft(segments, n=params.n_fft, axis=1)) ** 2
    bank = mel_filterbank(params.n_mels, params.n_fft, rate)
    energies = np.log(np.maximum(power @ bank.T, 1e-10))
    coeffs = dct(energies, type=2, norm="ortho", axis=1)[:, :params.n_coeffs]
    return coeffs.T


# ---------------------------------------------------------------------------
# CWT with the analytic Morse wavelet
# ---------------------------------------------------------------------------

def morse_peak_omega(params: MorseParams) -> float:
    """Peak angular frequency (rad/sample at unit scale): (beta/gamma)^(1/gamma)."""
    return (params.beta / params.gamma) ** (1.0 / params.gamma)


def _morse_log_amplitude(params: MorseParams) -> float:
    # unit-energy normalization: integral of |Psi|^2 over omega equals 2*pi
    r = (2.0 * params.beta + 1.0) / params.gamma
    return 0.5 * (math.log(2.0 * math.pi * params.gamma) + r * math.log(2.0)
                  - math.lgamma(r))


def cwt_scales(n_samples: int, params: MorseParams = MorseParams()) -> np.ndarray:
    """Geometric scale grid, ``voices_per_octave`` steps per doubling.

    The smallest scale puts the wavelet peak at Nyquist; the largest is where
    the wavelet's two-sigma time support (sigma_t ~ s*sqrt(beta*gamma)/omega_p)
    reaches the frame length.
    """
    omega_p = morse_peak_omega(params)
    s_min = omega_p / np.pi
    s_max = n_samples * omega_p / (4.0 * math.sqrt(params.beta * params.gamma))
    n_scales = int(np.floor(params.voices_per_octave * np.log2(s_max / s_min))) + 1
    j = np.arange(n_scales)
    return s_min * 2.0 ** (j / params.voices_per_octave)


def cwt_scale_frequencies(scales: np.ndarray, rate: int,
                          params: MorseParams = MorseParams()) -> np.ndarray:
    """Peak frequency in Hz of the wavelet at each scale."""
    return morse_peak_omega(params) * rate / (2.0 * np.pi * scales)


def cwt_scalogram(frame, params: MorseParams = MorseParams()) -> np.ndarray:
    """Squared-modulus Morse-wavelet scalogram, shape (n_scales, n_samples).

    Coefficients are computed in the frequency domain: the signal spectrum is
    multiplied by Psi(s*omega) per scale (analytic: positive frequencies only)
    and inverse-transformed.
    """
    x = _signal_of(frame)
    n = len(x)
    scales = cwt_scales(n, params)
    omega = 2.0 * np.pi * np.fft.fftfreq(n)  # rad/sample, signed
    positive = omega > 0
    spectrum = np.fft.fft(x)

    log_a = _morse_log_amplitude(params)
    sw = scales[:, None] * omega[None, positive]
    log_psi = log_a + params.beta * np.log(sw) - sw ** params.gamma
    psi = np.zeros((len(scales), n))
    psi[:, positive] = np.exp(log_psi)

    coeffs = np.fft.ifft(spectrum[None, :] * psi, axis=1)
    return np.abs(coeffs) ** 2


# ---------------------------------------------------------------------------
# Constant-Q transform
# ---------------------------------------------------------------------------

def cqt_bin_frequencies(params: CQTParams = CQTParams()) -> np.ndarray:
    n_bins = int(np.floor(params.bins_per_octave
                          * np.log2(params.f_max / params.f_min))) + 1
    k = np.arange(n_bins)
    return params.f_min * 2.0 ** (k / params.bins_per_octave)


def cqt(frame, params: CQTParams = CQTParams()) -> np.ndarray:
    """Constant-Q magnitude matrix, shape (n_bins, ceil(n/hop)).

    Each bin correlates the signal with a Hann-enveloped complex atom of
    Q-derived length (floored at win_len for high bins, clipped to the frame),
    centered at multiples of the hop.
    """
    x = _signal_of(frame)
    rate = getattr(frame, "rate", FRAME_RATE)
    n = len(x)
    freqs = cqt_bin_frequencies(params)
    q = 1.0 / (2.0 ** (1.0 / params.bins_per_octave) - 1.0)
    centers = params.hop * np.arange(int(np.ceil(n / params.hop)))
    out = np.zeros((len(freqs), len(centers)))

    for k, f_k in enumerate(freqs):
        length = int(np.ceil(q * rate / f_k))
        length = min(max(length, params.win_len), n)
        window = np.hanning(length)
        t = (np.arange(length) - (length - 1) / 2.0) / rate
        atom = window * np.exp(2j * np.pi * f_k * t) / window.sum()
        offset = (length - 1) // 2
        padded = np.concatenate([np.zeros(offset), x, np.zeros(length)])
        idx = centers[:, None] + np.arange(length)[None, :]
        out[k] = np.abs(padded[idx] @ np.conj(atom))
    return out


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

# Anchor colors with strictly increasing luminance; linear interpolation keeps
# the 256-entry table monotone in luminance.
_COLORMAP_ANCHORS = np.array([
    [0.050, 0.030, 0.150],
    [0.150, 0.050, 0.400],
    [0.200, 0.180, 0.550],
    [0.150, 0.350, 0.600],
    [0.100, 0.500, 0.550],
    [0.150, 0.650, 0.450],
    [0.350, 0.780, 0.300],
    [0.650, 0.870, 0.200],
    [0.900, 0.950, 0.250],
    [1.000, 1.000, 0.700],
])


def _build_colormap() -> np.ndarray:
    positions = np.linspace(0.0, 1.0, len(_COLORMAP_ANCHORS))
    grid = np.linspace(0.0, 1.0, 256)
    table = np.stack([np.interp(grid, positions, _COLORMAP_ANCHORS[:, c])
                      for c in range(3)], axis=1)
    return table


COLORMAP = _build_colormap()


@dataclass(frozen=True)
class TFImage:
    """A rendered 224x224x3 image in [0,1] plus its provenance."""

    pixels: np.ndarray
    transform_kind: str
    source: str = ""
    snr_db: float | None = None

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float32)
        if pixels.shape != (IMAGE_SIZE, IMAGE_SIZE, 3):
            raise ConfigError(f"image must be {IMAGE_SIZE}x{IMAGE_SIZE}x3, "
                              f"got {pixels.shape}")
        if self.transform_kind not in TRANSFORM_KINDS:
            raise ConfigError(f"unknown transform kind {self.transform_kind!r}")
        if pixels.min() < 0.0 or pixels.max() > 1.0:
            raise ConfigError("image values must lie in [0,1]")
        object.__setattr__(self, "pixels", pixels)


def _bilinear_resize(matrix: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    def grid(n_in, n_out):
        if n_in == 1:
            return np.zeros(n_out, int), np.zeros(n_out, int), np.zeros(n_out)
        x = np.arange(n_out) * (n_in - 1) / (n_out - 1)
        i0 = np.minimum(np.floor(x).astype(int), n_in - 2)
        return i0, i0 + 1, x - i0

    r0, r1, wr = grid(matrix.shape[0], out_h)
    c0, c1, wc = grid(matrix.shape[1], out_w)
    rows = matrix[r0] * (1.0 - wr)[:, None] + matrix[r1] * wr[:, None]
    return rows[:, c0] * (1.0 - wc) + rows[:, c1] * wc


def render_image(matrix, transform_kind: str, source: str = "",
                 snr_db: float | None = None) -> TFImage:
    """Render a transform matrix to a colormapped 224x224x3 image."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.size == 0:
        raise ConfigError("cannot render an empty matrix")
    if transform_kind not in TRANSFORM_KINDS:
        raise ConfigError(f"unknown transform kind {transform_kind!r}")

    if transform_kind == "mfcc":
        v = m  # cepstra are signed; min-max scale them directly
    else:
        v = 10.0 * np.log10(np.maximum(m, DB_EPS))
        v = np.maximum(v, v.max() - DB_FLOOR)

    lo, hi = v.min(), v.max()
    unit = np.ones_like(v) if hi == lo else (v - lo) / (hi - lo)

    resized = _bilinear_resize(unit, IMAGE_SIZE, IMAGE_SIZE)
    if transform_kind in ("stft", "cqt", "mfcc"):
        resized = resized[::-1]  # row 0 is the lowest frequency; flip to bottom
    rgb = COLORMAP[np.clip(np.round(resized * 255.0), 0, 255).astype(int)]
    return TFImage(rgb.astype(np.float32), transform_kind, source=source,
                   snr_db=snr_db)


def transform_frame(frame, kind: str, stft_params=None, mfcc_params=None,
                    morse_params=None, cqt_params=None) -> np.ndarray:
    """Dispatch to one of the four transforms, returning the raw matrix
    (magnitude for STFT/CQT, power for CWT, cepstra for MFCC)."""
    if kind == "stft":
        return np.abs(stft(frame, stft_params or STFTParams()))
    if kind == "mfcc":
        return mfcc(frame, mfcc_params or MFCCParams())
    if kind == "cwt":
        return cwt_scalogram(frame, morse_params or MorseParams())
    if kind == "cqt":
        return cqt(frame, cqt_params or CQTParams())
    raise ConfigError(f"unknown transform kind {kind!r}")


# ---------------------------------------------------------------------------
# Persistence: raw tensor files (training input) and PNG (inspection)
# ---------------------------------------------------------------------------

def save_tfimage(path, image: TFImage) -> None:
    """Write the raw tensor format: one JSON header line, then little-endian
    float32 pixel data in C order (H, W, C)."""
    header = json.dumps({"shape": list(image.pixels.shape),
                         "transform": image.transform_kind,
                         "source": image.source,
                         "snr_db": image.snr_db}, sort_keys=True)
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8") + b"\n")
        fh.write(image.pixels.astype("<f4").tobytes())


def load_tfimage(path) -> TFImage:
    path = Path(path)
    with open(path, "rb") as fh:
        header_line = fh.readline()
        raw = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
        shape = tuple(header["shape"])
    except (ValueError, KeyError) as exc:
        raise FormatError(f"{path}: bad tensor header") from exc
    expected = 4 * int(np.prod(shape))
    if len(raw) != expected:
        raise FormatError(f"{path}: payload is {len(raw)} bytes, expected {expected}")
    pixels = np.frombuffer(raw, dtype="<f4").reshape(shape)
    return TFImage(pixels, header["transform"], source=header.get("source", ""),
                   snr_db=header.get("snr_db"))


def save_png(path, image: TFImage) -> None:
    from PIL import Image

    data = np.clip(np.round(image.pixels * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path)
