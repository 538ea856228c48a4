"""Windowed STFT analysis/synthesis with exact overlap-add reconstruction."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StftConfig:
    """Frame layout of the short-time transform.

    The default layout is a 512-sample window at 16 kHz with 50% overlap.
    """

    frame_len: int = 512
    hop: int = 256
    fft_len: int = 512
    sample_rate: int = 16000

    def __post_init__(self):
        if self.hop * 2 != self.frame_len:
            raise ValueError("hop must be exactly half the frame length")
        if self.fft_len < self.frame_len:
            raise ValueError("fft_len must be at least frame_len")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def num_bins(self) -> int:
        return self.fft_len // 2 + 1

    @property
    def pad_start(self) -> int:
        # leading zeros so the first real sample lands on a fully weighted
        # overlap position
        return self.frame_len - self.hop

    def bin_frequencies(self) -> np.ndarray:
        """Center frequency in Hz of each one-sided bin."""
        return np.arange(self.num_bins) * (self.sample_rate / self.fft_len)

    def num_frames(self, num_samples: int) -> int:
        return int(np.ceil(num_samples / self.hop)) + 1


@dataclass
class Spectrogram:
    """One-sided complex spectra, shape (channels, frames, bins)."""

    data: np.ndarray
    num_samples: int

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError("spectrogram data must be (channels, frames, bins)")

    @property
    def channel_count(self) -> int:
        return self.data.shape[0]

    @property
    def frames(self) -> int:
        return self.data.shape[1]

    @property
    def bins(self) -> int:
        return self.data.shape[2]


def analysis_window(cfg: StftConfig) -> np.ndarray:
    """Periodic square-root Hann window.

    Used for both analysis and synthesis; the product window satisfies the
    constant-overlap-add condition exactly at 50% hop, and the synthesis
    taper keeps frame-boundary discontinuities from modified spectra out of
    the output.
    """
    return np.sin(np.pi * np.arange(cfg.frame_len) / cfg.frame_len)


def _as_channels(signal) -> np.ndarray:
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim == 1:
        x = x[np.newaxis, :]
    if x.ndim != 2:
        raise ValueError("signal must be 1-D or (channels, samples)")
    return x


def analyze(signal, cfg: StftConfig) -> Spectrogram:
    """Short-time transform of a real multichannel waveform.

    Args:
        signal: (samples,) or (channels, samples) real array; all channels
            must share one length of at least ``cfg.frame_len``.
        cfg: frame layout.

    Returns:
        Spectrogram with data shaped (channels, frames, bins).
    """
    x = _as_channels(signal)
    num_ch, n = x.shape
    if n == 0:
        raise ValueError("empty signal")
    if n < cfg.frame_len:
        raise ValueError(
            f"signal length {n} shorter than one frame ({cfg.frame_len})"
        )

    num_frames = cfg.num_frames(n)
    padded_len = (num_frames - 1) * cfg.hop + cfg.frame_len
    padded = np.zeros((num_ch, padded_len))
    padded[:, cfg.pad_start:cfg.pad_start + n] = x

    idx = np.arange(num_frames)[:, None] * cfg.hop + np.arange(cfg.frame_len)
    frames = padded[:, idx] * analysis_window(cfg)
    data = np.fft.rfft(frames, n=cfg.fft_len, axis=-1)
    return Spectrogram(data=data, num_samples=n)


def synthesize(spec: Spectrogram, cfg: StftConfig) -> np.ndarray:
    """Weighted overlap-add reconstruction, inverse of :func:`analyze`.

    Returns a (channels, samples) array trimmed to the analyzed length.
    """
    if spec.bins != cfg.num_bins:
        raise ValueError(
            f"spectrogram has {spec.bins} bins, config implies {cfg.num_bins}"
        )
    expected_frames = cfg.num_frames(spec.num_samples)
    if spec.frames != expected_frames:
        raise ValueError(
            f"spectrogram has {spec.frames} frames, config implies "
            f"{expected_frames} for {spec.num_samples} samples"
        )

    win = analysis_window(cfg)
    frames = np.fft.irfft(spec.data, n=cfg.fft_len, axis=-1)[..., :cfg.frame_len]
    frames = frames * win

    num_ch = spec.channel_count
    padded_len = (spec.frames - 1) * cfg.hop + cfg.frame_len
    acc = np.zeros((num_ch, padded_len))
    weight = np.zeros(padded_len)
    win_sq = win * win
    for l in range(spec.frames):
        start = l * cfg.hop
        acc[:, start:start + cfg.frame_len] += frames[:, l, :]
        weight[start:start + cfg.frame_len] += win_sq

    # interior overlap weight is exactly 1; edges stay under the padding trim
    nonzero = weight > 1e-12
    acc[:, nonzero] /= weight[nonzero]
    return acc[:, cfg.pad_start:cfg.pad_start + spec.num_samples]
