import numpy as np
import pytest

from nrcnet import noise_lab as nl
from nrcnet.errors import ConfigError, ZeroNoiseError, ZeroSignalError
from nrcnet.preprocess import FRAME_LEN


def unit_power(n, pattern=1.0):
    x = np.full(n, pattern)
    x[::2] *= -1
    return x


class TestMeasureSnr:
    def test_equal_power_is_zero_db(self):
        s = unit_power(FRAME_LEN)
        n = unit_power(FRAME_LEN)[::-1].copy()
        assert nl.measure_snr(s, n) == pytest.approx(0.0, abs=1e-12)

    def test_ten_times_power_is_ten_db(self):
        s = np.sqrt(10.0) * unit_power(FRAME_LEN)
        n = unit_power(FRAME_LEN)
        assert nl.measure_snr(s, n) == pytest.approx(10.0, abs=1e-12)

    def test_matches_power_sum_oracle(self, rng):
        s = rng.standard_normal(FRAME_LEN)
        n = rng.standard_normal(FRAME_LEN)
        expected = 10.0 * np.log10(sum(v * v for v in s) / sum(v * v for v in n))
        assert abs(nl.measure_snr(s, n) - expected) < 1e-12

    def test_zero_noise_rejected(self):
        with pytest.raises(ZeroNoiseError):
            nl.measure_snr(np.ones(10), np.zeros(10))


class TestMixAtSnr:
    def test_alpha_unit_case(self):
        s, n = unit_power(FRAME_LEN), unit_power(FRAME_LEN)
        out = nl.mix_at_snr(s, n, 0.0)
        assert out.alpha == pytest.approx(1.0, abs=1e-12)

    def test_alpha_ten_db(self):
        s, n = unit_power(FRAME_LEN), unit_power(FRAME_LEN)
        out = nl.mix_at_snr(s, n, 10.0)
        assert out.alpha == pytest.approx(10 ** -0.5, abs=1e-9)

    def test_realized_snr_exact(self, rng):
        for trial in range(25):
            s = rng.standard_normal(FRAME_LEN) * rng.uniform(0.1, 3)
            n = rng.standard_normal(FRAME_LEN) * rng.uniform(0.1, 3)
            target = rng.uniform(-10, 25)
            out = nl.mix_at_snr(s, n, target)
            assert abs(nl.measure_snr(s, out.alpha * n) - target) < 1e-9

    def test_clean_frame_recoverable(self, rng):
        s = rng.standard_normal(FRAME_LEN)
        n = rng.standard_normal(FRAME_LEN)
        out = nl.mix_at_snr(s, n, 5.0)
        recovered = out.samples - out.alpha * n
        assert np.array_equal(recovered, (s + out.alpha * n) - out.alpha * n)
        assert np.max(np.abs(recovered - s)) < 1e-12

    def test_zero_signal_rejected(self):
        with pytest.raises(ZeroSignalError):
            nl.mix_at_snr(np.zeros(10), np.ones(10), 0.0)


class TestAwgn:
    def test_deterministic(self):
        s = unit_power(FRAME_LEN)
        a = nl.awgn_mix(s, 10.0, seed=42)
        b = nl.awgn_mix(s, 10.0, seed=42)
        assert np.array_equal(a.samples, b.samples)
        assert not np.array_equal(a.samples, nl.awgn_mix(s, 10.0, seed=43).samples)

    def test_exact_snr(self):
        s = unit_power(FRAME_LEN)
        out = nl.awgn_mix(s, 15.0, seed=1)
        noise = out.samples - s
        assert abs(nl.measure_snr(s, noise) - 15.0) < 1e-9

    def test_zero_db_on_pure_tone_halves_tone_share(self):
        t = np.arange(FRAME_LEN) / 2000.0
        tone = np.sin(2 * np.pi * 250.0 * t)
        out = nl.awgn_mix(tone, 0.0, seed=7)
        spec_clean = np.abs(np.fft.rfft(tone)) ** 2
        spec_noisy = np.abs(np.fft.rfft(out.samples)) ** 2
        k = int(np.argmax(spec_clean))
        bins = slice(max(k - 2, 0), k + 3)
        share_clean = spec_clean[bins].sum() / spec_clean.sum()
        share_noisy = spec_noisy[bins].sum() / spec_noisy.sum()
        assert share_clean > 0.95
        assert abs(share_noisy - 0.5) < 0.1

    def test_zero_signal_rejected(self):
        with pytest.raises(ZeroSignalError):
            nl.awgn_mix(np.zeros(FRAME_LEN), 0.0, seed=0)


class TestNoisyCorpus:
    def test_counts_per_level(self, small_corpus):
        specs = [nl.MixSpec(db) for db in (0.0, 5.0, 10.0, 15.0)]
        levels = nl.build_noisy_corpus(small_corpus.heart, small_corpus.lung,
                                       specs, seed=9)
        assert len(levels) == 4
        for level in levels:
            assert len(level.frames) == len(small_corpus.heart)
            assert all(len(f.samples) == FRAME_LEN for f in level.frames)

    def test_pairing_deterministic(self, small_corpus):
        specs = [nl.MixSpec(5.0)]
        a = nl.build_noisy_corpus(small_corpus.heart, small_corpus.lung, specs, 9)
        b = nl.build_noisy_corpus(small_corpus.heart, small_corpus.lung, specs, 9)
        assert a[0].pairing == b[0].pairing
        assert np.array_equal(a[0].frames[3].samples, b[0].frames[3].samples)

    def test_awgn_without_lung_corpus(self, small_corpus):
        specs = [nl.MixSpec(0.0, noise_kind="awgn")]
        levels = nl.build_noisy_corpus(small_corpus.heart, None, specs, 3)
        assert levels[0].frames[0].noise_ref == "awgn"

    def test_lung_kind_requires_lung_frames(self, small_corpus):
        with pytest.raises(ConfigError):
            nl.build_noisy_corpus(small_corpus.heart, [], [nl.MixSpec(0.0)], 3)

    def test_realized_snr_recorded(self, small_corpus):
        levels = nl.build_noisy_corpus(small_corpus.heart, small_corpus.lung,
                                       [nl.MixSpec(10.0)], 5)
        for frame in levels[0].frames:
            assert abs(frame.snr_db - 10.0) < 1e-9


class TestSynthCorpus:
    def test_counts_and_lengths(self):
        corpus = nl.synth_corpus(3, seed=7)
        assert len(corpus.heart) == 15
        assert len(corpus.lung) == 3
        per_class = {}
        for frame in corpus.heart:
            per_class[frame.label] = per_class.get(frame.label, 0) + 1
            assert frame.samples.shape == (FRAME_LEN,)
        assert per_class == {c: 3 for c in nl.HEART_CLASSES}

    def test_deterministic(self):
        a = nl.synth_corpus(2, seed=5)
        b = nl.synth_corpus(2, seed=5)
        for fa, fb in zip(a.heart + a.lung, b.heart + b.lung):
            assert np.array_equal(fa.samples, fb.samples)

    def test_seed_changes_output(self):
        a = nl.synth_corpus(1, seed=5)
        b = nl.synth_corpus(1, seed=6)
        assert not np.array_equal(a.heart[0].samples, b.heart[0].samples)

    def test_rejects_zero_count(self):
        with pytest.raises(ConfigError):
            nl.synth_corpus(0, seed=1)

    def test_stenosis_murmur_band_energy(self):
        # the generator exists to provide this separability
        corpus = nl.synth_corpus(10, seed=3)

        def band_energy(x, lo, hi):
            spec = np.abs(np.fft.rfft(x)) ** 2
            freqs = np.fft.rfftfreq(len(x), 1.0 / 2000.0)
            return spec[(freqs >= lo) & (freqs <= hi)].sum()

        as_mean = np.mean([band_energy(f.samples, 100, 400)
                           for f in corpus.heart if f.label == "AS"])
        n_mean = np.mean([band_energy(f.samples, 100, 400)
                          for f in corpus.heart if f.label == "N"])
        assert as_mean >= 2.0 * n_mean
