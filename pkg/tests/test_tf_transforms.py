import json

import numpy as np
import pytest

from nrcnet import tf_transforms as tft
from nrcnet.errors import ConfigError, FormatError, ShortFrameError
from nrcnet.preprocess import FRAME_LEN, FRAME_RATE


def tone(freq, n=FRAME_LEN, rate=FRAME_RATE, amp=1.0):
    return amp * np.sin(2 * np.pi * freq * np.arange(n) / rate)


class TestSTFT:
    def test_shape(self):
        assert tft.stft(np.zeros(FRAME_LEN)).shape == (65, 108)

    def test_tone_peaks_at_bin_16(self):
        mags = np.abs(tft.stft(tone(250)))
        assert set(mags.argmax(axis=0).tolist()) == {16}

    def test_zero_frame(self):
        assert np.all(tft.stft(np.zeros(FRAME_LEN)) == 0)

    def test_short_frame_rejected(self):
        with pytest.raises(ShortFrameError):
            tft.stft(np.zeros(100))

    def test_parseval_per_column(self, rng):
        x = rng.standard_normal(FRAME_LEN)
        spec = tft.stft(x)
        win = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(128) / 128)
        for col in (0, 17, 54, 107):
            seg = x[col * 64:col * 64 + 128] * win
            # reassemble two-sided energy from the one-sided transform
            column = spec[:, col]
            two_sided = (np.abs(column[0]) ** 2 + np.abs(column[-1]) ** 2
                         + 2 * np.sum(np.abs(column[1:-1]) ** 2))
            expected = 128 * np.sum(seg ** 2)
            assert abs(two_sided - expected) / expected < 1e-9

    def test_hop_shift_covariance(self, rng):
        x = rng.standard_normal(FRAME_LEN)
        shifted = np.concatenate([x[64:], x[:64]])
        a = np.abs(tft.stft(x))
        b = np.abs(tft.stft(shifted))
        assert np.allclose(a[:, 5:100], b[:, 4:99], atol=1e-10)


class TestMFCC:
    def test_mel_formula_values(self):
        assert tft.mel_of_hz(0.0) == 0.0
        assert tft.mel_of_hz(700.0) == pytest.approx(2595 * np.log10(2), rel=1e-12)
        for f in (100.0, 1000.0):
            assert tft.mel_of_hz(f) == pytest.approx(
                2595 * np.log10(1 + f / 700), rel=1e-12)

    def test_mel_inverse(self):
        freqs = np.array([0.0, 55.5, 700.0, 999.0])
        assert np.allclose(tft.hz_of_mel(tft.mel_of_hz(freqs)), freqs, atol=1e-9)

    def test_shape(self):
        assert tft.mfcc(np.zeros(FRAME_LEN)).shape == (13, 348)

    def test_filterbank_covers_all_filters(self):
        bank = tft.mel_filterbank(26, 256, FRAME_RATE)
        assert bank.shape == (26, 129)
        assert np.all(bank.sum(axis=1) > 0)

    def test_hop_shift_covariance(self, rng):
        x = rng.standard_normal(FRAME_LEN)
        shifted = np.concatenate([x[20:], x[:20]])
        a = tft.mfcc(x)
        b = tft.mfcc(shifted)
        assert np.allclose(a[:, 10:300], b[:, 9:299], atol=1e-8)


class TestCWT:
    def test_zero_frame(self):
        out = tft.cwt_scalogram(np.zeros(FRAME_LEN))
        assert out.shape[1] == FRAME_LEN
        assert np.all(out == 0)

    def test_amplitude_homogeneity_degree_two(self):
        a = tft.cwt_scalogram(tone(100))
        b = tft.cwt_scalogram(tone(100, amp=2.0))
        assert np.allclose(b, 4.0 * a, rtol=1e-9, atol=1e-12)

    def test_scale_grid_is_geometric(self):
        scales = tft.cwt_scales(FRAME_LEN)
        ratios = scales[1:] / scales[:-1]
        assert np.allclose(ratios, 2 ** 0.1, rtol=1e-12)

    @pytest.mark.parametrize("freq", [60, 100, 250, 500, 800])
    def test_tone_ridge_within_half_voice(self, freq):
        scalogram = tft.cwt_scalogram(tone(freq))
        freqs = tft.cwt_scale_frequencies(tft.cwt_scales(FRAME_LEN), FRAME_RATE)
        ridge = int(scalogram.mean(axis=1).argmax())
        nearest = int(np.abs(np.log2(freqs / freq)).argmin())
        assert abs(np.log2(freqs[ridge] / freqs[nearest])) <= (1 / 20) + 1e-12


class TestCQT:
    def test_bin_spacing(self):
        freqs = tft.cqt_bin_frequencies()
        assert len(freqs) == 56
        assert np.allclose(freqs[1:] / freqs[:-1], 2 ** (1 / 12), rtol=1e-12)

    def test_tone_peaks_at_bin_16(self):
        mags = tft.cqt(tone(100))
        assert mags.shape == (56, 110)
        assert int(mags.mean(axis=1).argmax()) == 16

    def test_zero_frame(self):
        assert np.all(tft.cqt(np.zeros(FRAME_LEN)) == 0)

    def test_amplitude_homogeneity_degree_one(self):
        a = tft.cqt(tone(200))
        b = tft.cqt(tone(200, amp=3.0))
        assert np.allclose(b, 3.0 * a, rtol=1e-9, atol=1e-12)

    def test_hop_shift_covariance(self, rng):
        x = rng.standard_normal(FRAME_LEN)
        shifted = np.concatenate([x[64:], x[:64]])
        a = tft.cqt(x)
        b = tft.cqt(shifted)
        # interior columns, away from the wrapped edge
        assert np.allclose(a[:, 20:90], b[:, 19:89], rtol=1e-6, atol=1e-9)


class TestRenderImage:
    def test_constant_matrix_maps_to_top_of_colormap(self):
        img = tft.render_image(np.full((8, 12), 3.7), "stft")
        expected = tft.COLORMAP[255].astype(np.float32)
        assert np.allclose(img.pixels, expected[None, None, :])

    def test_output_shape_and_range(self, rng):
        img = tft.render_image(rng.random((65, 108)) + 1e-6, "stft")
        assert img.pixels.shape == (224, 224, 3)
        assert img.pixels.min() >= 0.0 and img.pixels.max() <= 1.0

    def test_luminance_monotone_in_magnitude(self):
        values = np.linspace(0.0, 1.0, 256)
        lum = tft.COLORMAP @ np.array([0.2126, 0.7152, 0.0722])
        idx = np.clip(np.round(values * 255), 0, 255).astype(int)
        assert np.all(np.diff(lum[idx]) >= -1e-12)

    def test_scale_invariance_db_path(self, rng):
        m = rng.random((30, 40)) + 1e-3
        a = tft.render_image(m, "cwt")
        b = tft.render_image(123.45 * m, "cwt")
        assert np.array_equal(a.pixels, b.pixels)

    def test_affine_invariance_mfcc_path(self, rng):
        m = rng.standard_normal((13, 348))
        a = tft.render_image(m, "mfcc")
        b = tft.render_image(2.5 * m + 7.0, "mfcc")
        assert np.array_equal(a.pixels, b.pixels)

    def test_empty_matrix_rejected(self):
        with pytest.raises(ConfigError):
            tft.render_image(np.zeros((0, 5)), "stft")

    def test_db_floor_applied(self):
        m = np.array([[1.0, 1e-30], [1.0, 1.0]])
        img = tft.render_image(m, "stft")
        assert img.pixels.min() >= 0.0  # floor keeps the range bounded


class TestPersistence:
    def test_tfimage_roundtrip(self, tmp_path, rng):
        img = tft.render_image(rng.random((20, 30)) + 1e-3, "cqt",
                               source="frame_007", snr_db=5.0)
        path = tmp_path / "x.tfimg"
        tft.save_tfimage(path, img)
        back = tft.load_tfimage(path)
        assert np.array_equal(back.pixels, img.pixels)
        assert back.transform_kind == "cqt"
        assert back.source == "frame_007"
        assert back.snr_db == 5.0

    def test_header_is_json_line(self, tmp_path, rng):
        img = tft.render_image(rng.random((5, 5)) + 1e-3, "stft")
        path = tmp_path / "x.tfimg"
        tft.save_tfimage(path, img)
        with open(path, "rb") as fh:
            header = json.loads(fh.readline())
        assert header["shape"] == [224, 224, 3]
        assert header["transform"] == "stft"

    def test_truncated_payload_rejected(self, tmp_path, rng):
        img = tft.render_image(rng.random((5, 5)) + 1e-3, "stft")
        path = tmp_path / "x.tfimg"
        tft.save_tfimage(path, img)
        data = path.read_bytes()
        path.write_bytes(data[:-100])
        with pytest.raises(FormatError):
            tft.load_tfimage(path)

    def test_png_export(self, tmp_path, rng):
        from PIL import Image

        img = tft.render_image(rng.random((5, 5)) + 1e-3, "mfcc")
        tft.save_png(tmp_path / "x.png", img)
        with Image.open(tmp_path / "x.png") as im:
            assert im.size == (224, 224)
            assert im.mode == "RGB"
