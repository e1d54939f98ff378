import struct

import numpy as np
import pytest

from nrcnet import signal_io as sio
from nrcnet.errors import FormatError, ManifestError, UnsupportedError


def make_pcm16_wav(path, ints, rate=8000, channels=1):
    ints = np.asarray(ints, dtype="<i2")
    payload = ints.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, channels, rate,
                                    rate * 2 * channels, 2 * channels, 16)
    header += b"data" + struct.pack("<I", len(payload))
    path.write_bytes(header + payload)


class TestReadWav:
    def test_one_second_of_zeros(self, tmp_path):
        make_pcm16_wav(tmp_path / "z.wav", np.zeros(8000, dtype=np.int16))
        clip = sio.read_wav(tmp_path / "z.wav")
        assert clip.rate == 8000
        assert len(clip.samples) == 8000
        assert np.all(clip.samples == 0.0)

    def test_pcm16_scaling_extremes(self, tmp_path):
        make_pcm16_wav(tmp_path / "e.wav", [32767, -32768])
        clip = sio.read_wav(tmp_path / "e.wav")
        assert clip.samples.tolist() == [32767 / 32768, -1.0]

    def test_dataset_style_rate(self, tmp_path):
        make_pcm16_wav(tmp_path / "r.wav", np.zeros(16, dtype=np.int16), rate=8000)
        assert sio.read_wav(tmp_path / "r.wav").rate == 8000

    def test_float32_payload(self, tmp_path):
        data = np.array([0.25, -0.5], dtype="<f4").tobytes()
        header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
        header += b"fmt " + struct.pack("<IHHIIHH", 16, 3, 1, 4000, 16000, 4, 32)
        header += b"data" + struct.pack("<I", len(data))
        (tmp_path / "f.wav").write_bytes(header + data)
        clip = sio.read_wav(tmp_path / "f.wav")
        assert np.allclose(clip.samples, [0.25, -0.5])

    def test_multichannel_averaged(self, tmp_path):
        make_pcm16_wav(tmp_path / "st.wav", [100, 300, -200, 200], channels=2)
        clip = sio.read_wav(tmp_path / "st.wav")
        assert np.allclose(clip.samples, [200 / 32768, 0.0])

    def test_malformed_header(self, tmp_path):
        (tmp_path / "bad.wav").write_bytes(b"not a riff file at all")
        with pytest.raises(FormatError):
            sio.read_wav(tmp_path / "bad.wav")

    def test_unsupported_encoding(self, tmp_path):
        payload = b"\x00" * 8
        header = b"RIFF" + struct.pack("<I", 36 + 8) + b"WAVE"
        header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, 8000, 8000, 1, 8)
        header += b"data" + struct.pack("<I", 8)
        (tmp_path / "u.wav").write_bytes(header + payload)
        with pytest.raises(UnsupportedError):
            sio.read_wav(tmp_path / "u.wav")


def test_pcm16_roundtrip_bit_exact(tmp_path, rng):
    ints = rng.integers(-32768, 32768, size=500).astype(np.int16)
    make_pcm16_wav(tmp_path / "a.wav", ints, rate=2000)
    clip = sio.read_wav(tmp_path / "a.wav")
    sio.write_wav(tmp_path / "b.wav", clip)
    again = sio.read_wav(tmp_path / "b.wav")
    back = np.round(again.samples * 32768).astype(np.int16)
    assert np.array_equal(back, ints)


class TestResample:
    def test_dc_invariance(self):
        clip = sio.SignalClip(np.ones(8000), 8000)
        out = sio.resample(clip, 2000)
        assert len(out.samples) == 2000
        interior = out.samples[100:-100]
        assert np.max(np.abs(interior - 1.0)) < 1e-6

    def test_identity_rate(self):
        clip = sio.SignalClip(np.sin(np.arange(100)), 1000)
        out = sio.resample(clip, 1000)
        assert np.array_equal(out.samples, clip.samples)

    def test_fft_peak_preserved(self):
        t = np.arange(8000) / 8000
        clip = sio.SignalClip(np.sin(2 * np.pi * 100 * t), 8000)
        out = sio.resample(clip, 2000)
        spec = np.abs(np.fft.rfft(out.samples))
        peak_hz = np.argmax(spec) * 2000 / len(out.samples)
        assert abs(peak_hz - 100) <= 0.5

    def test_round_trip_l2(self):
        t = np.arange(8000) / 8000
        x = np.sin(2 * np.pi * 97 * t)
        clip = sio.SignalClip(x, 8000)
        back = sio.resample(sio.resample(clip, 3000), 8000)
        margin = len(x) // 20
        a = x[margin:-margin]
        b = back.samples[margin:-margin]
        assert np.linalg.norm(a - b) / np.linalg.norm(a) < 1e-3

    def test_above_nyquist_removed(self):
        t = np.arange(8000) / 8000
        clip = sio.SignalClip(np.sin(2 * np.pi * 1500 * t), 8000)
        out = sio.resample(clip, 2000)  # 1500 Hz > new Nyquist of 1000 Hz
        interior = out.samples[100:-100]  # boundary transients excluded
        assert np.sqrt(np.mean(interior ** 2)) < 1e-3

    def test_duration_preserved(self):
        clip = sio.SignalClip(np.ones(7001), 14000)
        out = sio.resample(clip, 2000)
        assert abs(len(out.samples) - 7001 * 2000 / 14000) <= 1


class TestNormalize:
    def test_scale_by_max(self):
        clip = sio.SignalClip(np.array([0.5, -0.25]), 100)
        assert sio.normalize(clip).samples.tolist() == [1.0, -0.5]

    def test_all_zeros_unchanged(self):
        clip = sio.SignalClip(np.zeros(10), 100)
        assert np.array_equal(sio.normalize(clip).samples, np.zeros(10))

    def test_divide_by_max_abs(self):
        clip = sio.SignalClip(np.array([2.0, -4.0]), 100)
        assert sio.normalize(clip).samples.tolist() == [0.5, -1.0]

    def test_idempotent(self, rng):
        for _ in range(20):
            clip = sio.SignalClip(rng.standard_normal(64), 100)
            once = sio.normalize(clip)
            twice = sio.normalize(once)
            assert np.array_equal(once.samples, twice.samples)


class TestManifest:
    def write(self, path, rows, header="path,label,split"):
        path.write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")

    def test_three_valid_rows(self, tmp_path):
        p = tmp_path / "m.csv"
        self.write(p, ["a.wav,N,train", "b.wav,AS,train", "c.wav,MR,test"])
        man = sio.load_manifest(p)
        assert len(man) == 3
        assert man.entries[2] == ("c.wav", "MR", "test")

    def test_unknown_label_with_row_number(self, tmp_path):
        p = tmp_path / "m.csv"
        self.write(p, ["a.wav,N,train", "b.wav,XX,train"])
        with pytest.raises(ManifestError) as err:
            sio.load_manifest(p)
        assert err.value.row == 2

    def test_duplicate_path(self, tmp_path):
        p = tmp_path / "m.csv"
        self.write(p, ["a.wav,N,train", "a.wav,AS,train"])
        with pytest.raises(ManifestError):
            sio.load_manifest(p)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "m.csv"
        self.write(p, ["a.wav,N,train"], header="file,tag,part")
        with pytest.raises(ManifestError):
            sio.load_manifest(p)

    def test_balanced_thousand_entry_counts(self, tmp_path):
        rows = []
        for label in ("N", "AS", "MS", "MR", "MVP"):
            rows.extend(f"{label}/{i:03d}.wav,{label},train" for i in range(200))
        p = tmp_path / "big.csv"
        self.write(p, rows)
        man = sio.load_manifest(p)
        assert len(man) == 1000
        assert man.class_counts() == {"N": 200, "AS": 200, "MS": 200,
                                      "MR": 200, "MVP": 200}
