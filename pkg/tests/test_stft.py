import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from derev import StftConfig, analyze, synthesize
from derev.stft import analysis_window


def naive_dft(frame):
    """Independent O(N^2) DFT oracle, one-sided."""
    n = len(frame)
    bins = n // 2 + 1
    out = np.zeros(bins, dtype=complex)
    for k in range(bins):
        acc = 0.0 + 0.0j
        for t in range(n):
            acc += frame[t] * np.exp(-2j * np.pi * k * t / n)
        out[k] = acc
    return out


class TestConfig:
    def test_defaults(self):
        cfg = StftConfig()
        assert cfg.num_bins == 257
        assert cfg.pad_start == 256

    @pytest.mark.parametrize("kwargs", [
        {"frame_len": 512, "hop": 128},
        {"fft_len": 256},
        {"sample_rate": 0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            StftConfig(**kwargs)


class TestAnalyze:
    def test_bin_centered_cosine_concentrates(self, stft_cfg):
        k0 = 64
        f = k0 * stft_cfg.sample_rate / stft_cfg.fft_len
        t = np.arange(stft_cfg.sample_rate) / stft_cfg.sample_rate
        spec = analyze(np.cos(2 * np.pi * f * t), stft_cfg)
        mag = np.abs(spec.data[0, 20])  # interior frame
        assert np.argmax(mag) == k0
        power = mag ** 2
        # square-root Hann mainlobe: k0 +/- 1 carries nearly everything
        assert power[k0 - 1:k0 + 2].sum() / power.sum() > 0.98
        # leakage floor: 60 dB down once 20 bins away
        far = np.concatenate([power[:k0 - 20], power[k0 + 21:]])
        assert far.max() <= power[k0] * 10 ** (-60 / 10)

    def test_zero_input(self, stft_cfg):
        spec = analyze(np.zeros(stft_cfg.sample_rate), stft_cfg)
        assert np.all(spec.data == 0)

    def test_impulse_matches_naive_dft(self, stft_cfg):
        x = np.zeros(4096)
        x[0] = 1.0
        spec = analyze(x, stft_cfg)
        # frame 0 sees the impulse at the leading-pad offset
        frame = np.zeros(stft_cfg.frame_len)
        frame[stft_cfg.pad_start] = 1.0
        frame *= analysis_window(stft_cfg)
        expected = naive_dft(frame)
        np.testing.assert_allclose(spec.data[0, 0], expected, atol=1e-12)

    def test_frame_count_and_shape(self, stft_cfg):
        spec = analyze(np.zeros((3, 10000)), stft_cfg)
        assert spec.channel_count == 3
        assert spec.bins == 257
        assert spec.frames == int(np.ceil(10000 / 256)) + 1

    def test_rejects_empty_and_short(self, stft_cfg):
        with pytest.raises(ValueError):
            analyze(np.zeros(0), stft_cfg)
        with pytest.raises(ValueError):
            analyze(np.zeros(100), stft_cfg)

    def test_rejects_length_mismatch(self, stft_cfg):
        with pytest.raises(ValueError):
            analyze([np.zeros(1000), np.zeros(999)], stft_cfg)


class TestSynthesize:
    def test_round_trip(self, stft_cfg):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 2 * stft_cfg.sample_rate))
        y = synthesize(analyze(x, stft_cfg), stft_cfg)
        assert np.linalg.norm(y - x) / np.linalg.norm(x) < 1e-9

    def test_zero_spectrogram(self, stft_cfg):
        spec = analyze(np.zeros(5000), stft_cfg)
        assert np.all(synthesize(spec, stft_cfg) == 0)

    def test_scaling_linearity(self, stft_cfg):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(8000)
        spec = analyze(x, stft_cfg)
        spec.data *= 0.5
        y = synthesize(spec, stft_cfg)
        assert np.linalg.norm(y - 0.5 * x) / np.linalg.norm(0.5 * x) < 1e-9

    def test_config_mismatch_rejected(self, stft_cfg):
        spec = analyze(np.zeros(5000), stft_cfg)
        with pytest.raises(ValueError):
            synthesize(spec, StftConfig(frame_len=256, hop=128, fft_len=256))


class TestInvariants:
    @settings(deadline=None, max_examples=20)
    @given(seed=st.integers(0, 2 ** 32 - 1))
    def test_round_trip_property(self, stft_cfg, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(stft_cfg.frame_len, 12000))
        x = rng.standard_normal(n)
        y = synthesize(analyze(x, stft_cfg), stft_cfg)
        assert np.linalg.norm(y - x) / np.linalg.norm(x) < 1e-9

    @settings(deadline=None, max_examples=15)
    @given(a=st.floats(-3, 3), b=st.floats(-3, 3),
           seed=st.integers(0, 2 ** 16))
    def test_linearity(self, stft_cfg, a, b, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(4000)
        y = rng.standard_normal(4000)
        left = analyze(a * x + b * y, stft_cfg).data
        right = a * analyze(x, stft_cfg).data + b * analyze(y, stft_cfg).data
        scale = max(np.abs(right).max(), 1e-30)
        assert np.abs(left - right).max() / scale < 1e-12

    def test_parseval_per_frame(self, stft_cfg):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(6000)
        spec = analyze(x, stft_cfg)
        win = analysis_window(stft_cfg)
        padded = np.zeros(stft_cfg.pad_start + len(x)
                          + (spec.frames * stft_cfg.hop))
        padded[stft_cfg.pad_start:stft_cfg.pad_start + len(x)] = x
        for l in (0, 5, 11):
            seg = padded[l * stft_cfg.hop:l * stft_cfg.hop + stft_cfg.frame_len] * win
            e_time = np.sum(seg ** 2)
            coeffs = spec.data[0, l]
            e_freq = (np.abs(coeffs[0]) ** 2
                      + 2 * np.sum(np.abs(coeffs[1:-1]) ** 2)
                      + np.abs(coeffs[-1]) ** 2) / stft_cfg.fft_len
            assert abs(e_time - e_freq) <= 1e-9 * max(e_time, 1e-30)
