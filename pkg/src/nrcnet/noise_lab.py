"""SNR-exact corruption of heart-sound frames and synthetic corpus generation.

SNR is defined over full-frame sample power: 10*log10(sum(s^2)/sum(n^2)).
Mixing scales the noise so the realized ratio hits the target exactly; the
mixed output is intentionally not renormalized, so the clean frame stays
recoverable as ``mixed - alpha * noise``.

All randomness flows through the counter-based Philox generator, keyed by a
corpus seed plus an integer path, so serial and parallel builds agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .errors import ConfigError, ZeroNoiseError, ZeroSignalError
from .preprocess import FRAME_LEN, FRAME_RATE, Frame

HEART_CLASSES = ("N", "AS", "MS", "MR", "MVP")
DEFAULT_SNR_LEVELS = (0.0, 5.0, 10.0, 15.0)


def rng_for(seed: int, *path: int) -> np.random.Generator:
    """Deterministic Philox stream for (seed, path). Independent across paths."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(path))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class MixSpec:
    snr_db: float
    noise_kind: str = "lung"  # or "awgn"
    seed: int | None = None

    def __post_init__(self):
        if not np.isfinite(self.snr_db):
            raise ConfigError(f"snr_db must be finite, got {self.snr_db}")
        if self.noise_kind not in ("lung", "awgn"):
            raise ConfigError(f"unknown noise kind {self.noise_kind!r}")

    @property
    def tag(self) -> str:
        level = f"{self.snr_db:g}db".replace("-", "m").replace(".", "p")
        return f"snr_{level}_{self.noise_kind}"


@dataclass(frozen=True)
class NoisyFrame:
    """A corrupted frame plus the bookkeeping needed to undo the corruption."""

    samples: np.ndarray
    snr_db: float
    clean_ref: str
    noise_ref: str
    alpha: float = 0.0
    label: str | None = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.shape != (FRAME_LEN,):
            raise ConfigError(f"noisy frame must have {FRAME_LEN} samples")
        object.__setattr__(self, "samples", samples)


def _samples(x) -> np.ndarray:
    return np.asarray(x.samples if hasattr(x, "samples") else x, dtype=np.float64)


def measure_snr(signal, noise) -> float:
    """10*log10 of the frame power ratio. Raises on all-zero noise."""
    s, n = _samples(signal), _samples(noise)
    if s.shape != n.shape:
        raise ConfigError(f"length mismatch: {s.shape} vs {n.shape}")
    p_noise = float(np.sum(n * n))
    if p_noise == 0.0:
        raise ZeroNoiseError("noise is identically zero")
    p_signal = float(np.sum(s * s))
    if p_signal == 0.0:
        return -np.inf
    return 10.0 * np.log10(p_signal / p_noise)


def mix_at_snr(signal, noise, target_db: float) -> NoisyFrame:
    """Add scaled noise so the realized SNR equals ``target_db`` exactly.

    alpha = sqrt((sum(s^2)/sum(n^2)) * 10^(-target/10)).
    """
    s, n = _samples(signal), _samples(noise)
    if s.shape != n.shape:
        raise ConfigError(f"length mismatch: {s.shape} vs {n.shape}")
    p_noise = float(np.sum(n * n))
    if p_noise == 0.0:
        raise ZeroNoiseError("noise is identically zero")
    p_signal = float(np.sum(s * s))
    if p_signal == 0.0:
        raise ZeroSignalError("signal is identically zero; SNR target unreachable")
    alpha = float(np.sqrt(p_signal / p_noise * 10.0 ** (-target_db / 10.0)))
    mixed = s + alpha * n
    realized = measure_snr(s, alpha * n)
    return NoisyFrame(mixed, snr_db=realized,
                      clean_ref=getattr(signal, "origin", ""),
                      noise_ref=getattr(noise, "origin", ""),
                      alpha=alpha, label=getattr(signal, "label", None))


def awgn_mix(signal, target_db: float, seed: int) -> NoisyFrame:
    """Seeded white Gaussian corruption. The drawn vector's realized power is
    used for scaling, so the target SNR is met exactly, not just in expectation."""
    s = _samples(signal)
    if float(np.sum(s * s)) == 0.0:
        raise ZeroSignalError("signal is identically zero")
    noise = rng_for(seed).standard_normal(s.shape[0])
    out = mix_at_snr(signal, noise, target_db)
    return NoisyFrame(out.samples, snr_db=out.snr_db, clean_ref=out.clean_ref,
                      noise_ref="awgn", alpha=out.alpha, label=out.label)


@dataclass
class MixLevel:
    """One SNR level of the noisy corpus: frames plus the pairing sidecar."""

    spec: MixSpec
    frames: list = field(default_factory=list)
    pairing: list = field(default_factory=list)  # dicts: clean, noise, alpha

    def sidecar(self, seed: int) -> dict:
        return {"seed": seed, "snr_db": self.spec.snr_db,
                "noise_kind": self.spec.noise_kind, "pairing": self.pairing}


def build_noisy_corpus(heart_frames, lung_frames, mix_specs, seed: int) -> list:
    """Mix every heart frame at every requested SNR level.

    Lung pairing is random-with-replacement from a per-(level, frame) Philox
    stream, so the result is a pure function of (frames, specs, seed).
    """
    heart_frames = list(heart_frames)
    lung_frames = list(lung_frames) if lung_frames is not None else []
    levels = []
    for level_idx, spec in enumerate(mix_specs):
        if spec.noise_kind == "lung" and not lung_frames:
            raise ConfigError("noise_kind 'lung' needs a non-empty lung corpus")
        level_seed = seed if spec.seed is None else spec.seed
        level = MixLevel(spec=spec)
        for frame_idx, frame in enumerate(heart_frames):
            rng = rng_for(level_seed, level_idx, frame_idx)
            if spec.noise_kind == "lung":
                pick = int(rng.integers(len(lung_frames)))
                noisy = mix_at_snr(frame, lung_frames[pick], spec.snr_db)
            else:
                noise = rng.standard_normal(FRAME_LEN)
                out = mix_at_snr(frame, noise, spec.snr_db)
                noisy = NoisyFrame(out.samples, snr_db=out.snr_db,
                                   clean_ref=out.clean_ref, noise_ref="awgn",
                                   alpha=out.alpha, label=out.label)
            level.frames.append(noisy)
            level.pairing.append({"clean": noisy.clean_ref, "noise": noisy.noise_ref,
                                  "alpha": noisy.alpha})
        levels.append(level)
    return levels


# ---------------------------------------------------------------------------
# Synthetic corpus: seeded, data-free stand-in for the real recordings.
# ---------------------------------------------------------------------------

_CYCLE_SECONDS = 0.8
_CYCLE_JITTER = 0.05
_S2_FRACTION = 0.35  # S2 lands this far into each cycle


def _heart_kernel() -> np.ndarray:
    """Decaying 30-150 Hz chirp; convolved with the S1/S2 impulse train.
    The sweep runs upward so the high-frequency tail is strongly attenuated
    and normal beats stay out of the murmur bands."""
    dur = 0.09
    t = np.arange(int(dur * FRAME_RATE)) / FRAME_RATE
    phase = 2.0 * np.pi * (30.0 * t + (150.0 - 30.0) / (2.0 * dur) * t * t)
    return np.sin(phase) * np.exp(-t / 0.03)


def _band_noise(rng: np.random.Generator, n: int, low: float, high: float) -> np.ndarray:
    noise = rng.standard_normal(n + 200)
    sos = butter(4, [low, high], btype="bandpass", fs=FRAME_RATE, output="sos")
    shaped = sosfiltfilt(sos, noise)[100:100 + n]
    peak = np.max(np.abs(shaped))
    return shaped / peak if peak > 0 else shaped


def _edged(n: int, ramp: int) -> np.ndarray:
    """Flat envelope with raised-cosine ramps."""
    env = np.ones(n)
    ramp = min(ramp, n // 2)
    if ramp > 0:
        edge = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        env[:ramp] = edge
        env[-ramp:] = edge[::-1]
    return env


def _add_murmur(sig, rng, start, stop, low, high, amp, shape="hann"):
    i0, i1 = int(start * FRAME_RATE), int(stop * FRAME_RATE)
    i0, i1 = max(i0, 0), min(i1, len(sig))
    if i1 - i0 < 8:
        return
    n = i1 - i0
    if shape == "diamond":
        env = np.bartlett(n)
    elif shape == "flat":
        env = _edged(n, int(0.01 * FRAME_RATE))
    else:
        env = np.hanning(n)
    sig[i0:i1] += amp * env * _band_noise(rng, n, low, high)


def _synth_heart(label: str, rng: np.random.Generator) -> np.ndarray:
    duration = FRAME_LEN / FRAME_RATE
    train = np.zeros(FRAME_LEN)
    t0 = 0.1
    events = []  # (cycle start, cycle length)
    while t0 < duration:
        cycle = _CYCLE_SECONDS * (1.0 + rng.uniform(-_CYCLE_JITTER, _CYCLE_JITTER))
        events.append((t0, cycle))
        s1 = int(t0 * FRAME_RATE)
        s2 = int((t0 + _S2_FRACTION * cycle) * FRAME_RATE)
        if s1 < FRAME_LEN:
            train[s1] = 1.0
        if s2 < FRAME_LEN:
            train[s2] = 0.75
        t0 += cycle

    sig = np.convolve(train, _heart_kernel())[:FRAME_LEN]

    for start, cycle in events:
        sys_a = start + 0.06
        sys_b = start + _S2_FRACTION * cycle - 0.02
        dia_a = start + _S2_FRACTION * cycle + 0.08
        dia_b = start + cycle - 0.05
        if label == "AS":
            _add_murmur(sig, rng, sys_a, sys_b, 100, 400, 0.55, shape="diamond")
        elif label == "MS":
            _add_murmur(sig, rng, dia_a, dia_a + 0.6 * (dia_b - dia_a), 40, 120, 0.5)
        elif label == "MR":
            _add_murmur(sig, rng, sys_a, sys_b, 100, 300, 0.5, shape="flat")
        elif label == "MVP":
            click_t = sys_a + 0.7 * (sys_b - sys_a)
            k = int(click_t * FRAME_RATE)
            if k + 12 < FRAME_LEN:
                tt = np.arange(12) / FRAME_RATE
                sig[k:k + 12] += 0.9 * np.sin(2 * np.pi * 300 * tt) * np.exp(-tt / 0.004)
            _add_murmur(sig, rng, click_t + 0.01, sys_b, 100, 300, 0.45)

    peak = np.max(np.abs(sig))
    return sig / peak if peak > 0 else sig


def _synth_lung(rng: np.random.Generator) -> np.ndarray:
    """Pink noise spanning 50 Hz to Nyquist, standing in for a respiratory
    recording. The pink spectrum already ends at 1000 Hz at the frame rate,
    so a 50 Hz high-pass realizes the band."""
    spectrum = np.zeros(FRAME_LEN // 2 + 1, dtype=complex)
    k = np.arange(1, FRAME_LEN // 2 + 1)
    mag = 1.0 / np.sqrt(k)
    spectrum[1:] = mag * (rng.standard_normal(len(k)) + 1j * rng.standard_normal(len(k)))
    pink = np.fft.irfft(spectrum, n=FRAME_LEN)
    sos = butter(4, 50, btype="highpass", fs=FRAME_RATE, output="sos")
    shaped = sosfiltfilt(sos, pink)
    return shaped / np.max(np.abs(shaped))


@dataclass(frozen=True)
class SynthCorpus:
    heart: tuple
    lung: tuple


def synth_corpus(n_per_class: int, seed: int) -> SynthCorpus:
    """Generate ``n_per_class`` synthetic PCG frames for each of the 5 classes,
    plus the same number of lung-noise frames. Deterministic in ``seed``."""
    if n_per_class < 1:
        raise ConfigError(f"n_per_class must be >= 1, got {n_per_class}")
    heart = []
    for class_idx, label in enumerate(HEART_CLASSES):
        for i in range(n_per_class):
            sig = _synth_heart(label, rng_for(seed, class_idx, i))
            heart.append(Frame(sig, label=label, origin=f"{label}_{i:04d}"))
    lung = []
    for i in range(n_per_class):
        sig = _synth_lung(rng_for(seed, len(HEART_CLASSES), i))
        lung.append(Frame(sig, label="LUNG", origin=f"LUNG_{i:04d}"))
    return SynthCorpus(heart=tuple(heart), lung=tuple(lung))
