"""WAV reading/writing, manifest ingestion, resampling and peak normalization.

WAV support is deliberately narrow: RIFF containers holding PCM16 or IEEE
float32 samples, mono or multi-channel (averaged to mono on read). Writes
are always PCM16 little-endian.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from math import gcd
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .errors import FormatError, ManifestError, UnsupportedError

CLASS_LABELS = ("N", "AS", "MS", "MR", "MVP", "LUNG", "NOISE")

PCM16_FULL_SCALE = 32768.0

# Kaiser-windowed sinc resampler: 64 taps per polyphase branch, beta 8.6.
RESAMPLE_TAPS_PER_PHASE = 64
RESAMPLE_KAISER_BETA = 8.6


@dataclass(frozen=True)
class SignalClip:
    """A 1-D audio signal with its sample rate and provenance."""

    samples: np.ndarray
    rate: int
    label: str | None = None
    source_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise FormatError(f"expected 1-D samples, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise FormatError("samples contain non-finite values")
        if self.rate <= 0:
            raise FormatError(f"sample rate must be positive, got {self.rate}")
        if self.label is not None and self.label not in CLASS_LABELS:
            raise ManifestError(f"unknown label {self.label!r}")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.rate

    def replace(self, **kwargs) -> "SignalClip":
        out = {"samples": self.samples, "rate": self.rate,
               "label": self.label, "source_id": self.source_id}
        out.update(kwargs)
        return SignalClip(**out)


@dataclass(frozen=True)
class Manifest:
    """Parsed corpus manifest: (relative path, label, split tag) rows."""

    entries: tuple = field(default_factory=tuple)
    root: Path = Path(".")

    def resolve(self, rel_path: str) -> Path:
        return Path(self.root) / rel_path

    def class_counts(self) -> dict:
        counts: dict = {}
        for _, label, _ in self.entries:
            counts[label] = counts.get(label, 0) + 1
        return counts

    def __len__(self) -> int:
        return len(self.entries)


def read_wav(path, label: str | None = None) -> SignalClip:
    """Read a RIFF WAV file into a SignalClip.

    PCM16 samples are scaled to [-1, 1) by division with 32768; float32
    samples are taken as-is. Multi-channel audio is mean-averaged to mono.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos:pos + 4]
        (chunk_size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8:pos + 8 + chunk_size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise FormatError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            data = body
        pos += 8 + chunk_size + (chunk_size & 1)

    if fmt is None or data is None:
        raise FormatError(f"{path}: missing fmt or data chunk")

    audio_format, n_channels, rate, _, _, bits = fmt
    if n_channels < 1:
        raise FormatError(f"{path}: zero channels")

    if audio_format == 1 and bits == 16:
        values = np.frombuffer(data, dtype="<i2").astype(np.float64)
        values /= PCM16_FULL_SCALE
    elif audio_format == 3 and bits == 32:
        values = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedError(
            f"{path}: unsupported encoding (format={audio_format}, bits={bits})")

    if n_channels > 1:
        usable = (len(values) // n_channels) * n_channels
        values = values[:usable].reshape(-1, n_channels).mean(axis=1)

    return SignalClip(values, int(rate), label=label, source_id=path.stem)


def write_wav(path, clip: SignalClip) -> None:
    """Write a SignalClip as PCM16 little-endian. Values are clipped to [-1, 1]."""
    ints = np.clip(np.round(clip.samples * PCM16_FULL_SCALE), -32768, 32767)
    payload = ints.astype("<i2").tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, clip.rate,
                                    clip.rate * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(payload))
    Path(path).write_bytes(header + payload)


def _resample_prototype(up: int, down: int) -> np.ndarray:
    """Kaiser windowed-sinc lowpass for a polyphase up/down resampler.

    Each polyphase branch is normalized to unit sum so constant signals pass
    through exactly for every output phase.
    """
    m = max(up, down)
    half = (RESAMPLE_TAPS_PER_PHASE // 2) * m
    n = np.arange(-half, half + 1, dtype=np.float64)
    h = np.sinc(n / m) / m
    h *= np.kaiser(len(h), RESAMPLE_KAISER_BETA)
    for p in range(up):
        h[p::up] /= h[p::up].sum()
    # resample_poly scales array windows by `up`; pre-divide so each branch
    # lands at unit sum after that scaling
    return h / up


def resample(clip: SignalClip, target_rate: int) -> SignalClip:
    """Band-limited polyphase resampling to ``target_rate``.

    Duration is preserved within one output sample; content above the target
    Nyquist is removed by the anti-aliasing prototype.
    """
    if target_rate <= 0:
        raise FormatError(f"target rate must be positive, got {target_rate}")
    if target_rate == clip.rate:
        return clip.replace(samples=clip.samples.copy())
    g = gcd(clip.rate, target_rate)
    up, down = target_rate // g, clip.rate // g
    h = _resample_prototype(up, down)
    out = resample_poly(clip.samples, up, down, window=h)
    return clip.replace(samples=out, rate=target_rate)


def normalize(clip: SignalClip) -> SignalClip:
    """Scale so the peak absolute sample is 1. All-zero input is returned unchanged."""
    peak = np.max(np.abs(clip.samples)) if len(clip.samples) else 0.0
    if peak == 0.0:
        return clip
    return clip.replace(samples=clip.samples / peak)


MANIFEST_HEADER = ["path", "label", "split"]


def load_manifest(path) -> Manifest:
    """Parse a ``path,label,split`` CSV manifest, validating labels and uniqueness."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty manifest") from None
        if [h.strip() for h in header] != MANIFEST_HEADER:
            raise ManifestError(f"{path}: header must be {','.join(MANIFEST_HEADER)}")
        entries = []
        seen = set()
        for row_num, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise ManifestError("expected 3 columns", row=row_num)
            rel, label, split = (cell.strip() for cell in row)
            if label not in CLASS_LABELS:
                raise ManifestError(f"unknown label {label!r}", row=row_num)
            if rel in seen:
                raise ManifestError(f"duplicate path {rel!r}", row=row_num)
            seen.add(rel)
            entries.append((rel, label, split))
    return Manifest(entries=tuple(entries), root=path.parent)


def save_manifest(path, entries, root=None) -> Manifest:
    """Write manifest rows and return the parsed-back Manifest."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for rel, label, split in entries:
            writer.writerow([rel, label, split])
    manifest = Manifest(entries=tuple(entries),
                        root=Path(root) if root is not None else path.parent)
    return manifest
