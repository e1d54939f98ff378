import numpy as np
import pytest

from nrcnet import preprocess as pp
from nrcnet import signal_io as sio
from nrcnet.errors import ConfigError, EmptySignalError, FilterDesignError


def tone(freq, rate, seconds=3.5):
    t = np.arange(int(rate * seconds)) / rate
    return sio.SignalClip(np.sin(2 * np.pi * freq * t), rate)


def rms(x):
    return np.sqrt(np.mean(np.square(x)))


class TestButterworthBandpass:
    PCG = pp.FilterSpec(50, 800, 4)

    def test_midband_gain(self):
        clip = tone(400, 2000)
        out = pp.butterworth_bandpass(clip, self.PCG)
        assert rms(out.samples) >= 0.95 * rms(clip.samples)

    def test_stopband_attenuation(self):
        clip = tone(5, 2000)
        out = pp.butterworth_bandpass(clip, self.PCG)
        attenuation_db = -20 * np.log10(rms(out.samples) / rms(clip.samples))
        assert attenuation_db >= 20

    def test_lung_band_forces_native_rate_filtering(self):
        spec = pp.FilterSpec(50, 2500, 6)
        out = pp.butterworth_bandpass(tone(300, 14000), spec)
        assert len(out.samples) == len(tone(300, 14000).samples)
        with pytest.raises(FilterDesignError):
            pp.butterworth_bandpass(tone(300, 2000), spec)

    def test_zero_phase_no_group_delay(self, rng):
        # band-limited input: correlation between input and output peaks at lag 0
        noise = rng.standard_normal(8000)
        clip = sio.SignalClip(noise, 2000)
        band = pp.butterworth_bandpass(clip, pp.FilterSpec(100, 400, 4))
        out = pp.butterworth_bandpass(band, pp.FilterSpec(100, 400, 4))
        corr = np.correlate(band.samples, out.samples, mode="full")
        assert np.argmax(corr) == len(band.samples) - 1

    def test_linearity(self, rng):
        x = sio.SignalClip(rng.standard_normal(4000), 2000)
        y = sio.SignalClip(rng.standard_normal(4000), 2000)
        a, b = 1.7, -0.4
        combined = sio.SignalClip(a * x.samples + b * y.samples, 2000)
        lhs = pp.butterworth_bandpass(combined, self.PCG).samples
        rhs = (a * pp.butterworth_bandpass(x, self.PCG).samples
               + b * pp.butterworth_bandpass(y, self.PCG).samples)
        assert np.max(np.abs(lhs - rhs)) / np.max(np.abs(lhs)) < 1e-9

    def test_invalid_band(self):
        with pytest.raises(FilterDesignError):
            pp.FilterSpec(800, 50, 4).validate(2000)


class TestFrameFixed:
    def test_identity_length(self):
        clip = sio.SignalClip(np.linspace(-1, 1, 7000), 2000)
        frame = pp.frame_fixed(clip)
        assert np.array_equal(frame.samples, clip.samples)

    def test_cyclic_padding(self):
        clip = sio.SignalClip(np.linspace(-1, 1, 3500), 2000)
        frame = pp.frame_fixed(clip)
        assert np.array_equal(frame.samples[:3500], clip.samples)
        assert np.array_equal(frame.samples[3500:], clip.samples)

    def test_empty_input(self):
        with pytest.raises(EmptySignalError):
            pp.frame_fixed(sio.SignalClip(np.array([]), 2000))

    def test_truncation(self):
        clip = sio.SignalClip(np.linspace(-1, 1, 10000), 2000)
        frame = pp.frame_fixed(clip)
        assert np.array_equal(frame.samples, clip.samples[:7000])

    def test_zero_padding_mode(self):
        clip = sio.SignalClip(np.ones(100), 2000)
        frame = pp.frame_fixed(clip, pad="zero")
        assert np.all(frame.samples[100:] == 0)

    def test_overflow_error_mode(self):
        clip = sio.SignalClip(np.zeros(8000), 2000)
        with pytest.raises(ConfigError):
            pp.frame_fixed(clip, overflow="error")

    def test_wrong_rate_rejected(self):
        with pytest.raises(ConfigError):
            pp.frame_fixed(sio.SignalClip(np.zeros(7000), 4000))


class TestPrepare:
    def test_pcg_standard_recording(self):
        clip = tone(200, 8000, seconds=3.5)
        frame = pp.prepare_pcg(clip)
        assert frame.samples.shape == (7000,)
        assert frame.rate == 2000

    def test_pcg_short_recording_cyclic(self):
        clip = tone(200, 8000, seconds=2.0)
        frame = pp.prepare_pcg(clip)
        # 2 s at 2000 Hz = 4000 samples, repeated cyclically
        for k in range(4000, 7000):
            assert frame.samples[k] == frame.samples[k % 4000]

    def test_pcg_long_recording_truncated(self):
        clip = tone(200, 8000, seconds=5.0)
        frame = pp.prepare_pcg(clip)
        spec = pp.FilterSpec(*pp.PCG_BAND, pp.PCG_ORDER)
        full = sio.normalize(sio.resample(pp.butterworth_bandpass(clip, spec), 2000))
        assert np.array_equal(frame.samples, full.samples[:7000])

    def test_lung_icbhi_style(self):
        clip = tone(500, 44100, seconds=3.5)
        frame = pp.prepare_lung(clip)
        assert frame.samples.shape == (7000,)
        assert frame.rate == 2000

    def test_lung_low_rate_clamps_edge(self):
        clip = tone(500, 4000, seconds=3.5)
        frame = pp.prepare_lung(clip)  # Nyquist 2000 < 2500: edge clamped to 1900
        assert frame.samples.shape == (7000,)

    def test_lung_all_zero(self):
        clip = sio.SignalClip(np.zeros(14000), 4000)
        frame = pp.prepare_lung(clip)
        assert np.all(frame.samples == 0.0)

    def test_every_frame_normalized(self, small_corpus):
        for frame in small_corpus.heart:
            assert frame.samples.shape == (7000,)
            assert frame.rate == 2000
            assert np.max(np.abs(frame.samples)) <= 1.0 + 1e-12
