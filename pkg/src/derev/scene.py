"""Synthetic multichannel acoustic scenes with ground-truth components.

Scenes keep the steered direct+early part, the diffuse late tail and the
noise as separate waveforms so shadow filtering can score each one. The late
tail is built from per-channel noise sequences mixed to the diffuse
coherence profile at every frequency and shaped by an exponential decay
envelope; no room geometry is simulated.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.signal

from .spatial import ArrayGeometry, propagation_delays

DELAY_FILTER_TAPS = 64
# reverberant-to-direct energy ratio anchor: +4 dB at a 0.5 s decay time
DRR_ANCHOR_T60 = 0.5
DRR_ANCHOR_RATIO = 10.0 ** 0.4
ENVELOPE_RATE = 3.0 * math.log(10.0)  # 60 dB decay over one T60


@dataclass(frozen=True)
class SceneSpec:
    t60: float = 0.5
    snr_db: float = 10.0
    doa_azimuth: float = np.pi / 4
    doa_elevation: float = 0.0
    duration: float = 10.0
    seed: int = 0
    early_taps: int = 3
    early_window_ms: float = 40.0

    def __post_init__(self):
        if not 0.0 < self.t60 <= 2.0:
            raise ValueError("t60 must lie in (0, 2] seconds")
        if self.duration <= 0.0:
            raise ValueError("duration must be positive")
        if self.early_taps < 0:
            raise ValueError("early_taps must be nonnegative")
        if self.early_window_ms <= 0.0:
            raise ValueError("early_window_ms must be positive")


@dataclass
class Scene:
    """Component-true multichannel scene; y is the exact sum of the parts."""

    direct_early: np.ndarray   # (M, samples)
    late_reverb: np.ndarray    # (M, samples)
    noise: np.ndarray          # (M, samples)
    mixture: np.ndarray        # (M, samples)
    source: np.ndarray         # (samples,)
    sample_rate: int
    spec: SceneSpec


def speech_shaped_noise(duration: float, sample_rate: int, rng) -> np.ndarray:
    """Noise with a rough long-term speech spectrum and syllabic modulation."""
    n = int(round(duration * sample_rate))
    x = rng.standard_normal(n)
    sos_hp = scipy.signal.butter(2, 100.0, btype="highpass", fs=sample_rate,
                                 output="sos")
    sos_lp = scipy.signal.butter(1, 500.0, btype="lowpass", fs=sample_rate,
                                 output="sos")
    x = scipy.signal.sosfilt(sos_hp, x)
    x = scipy.signal.sosfilt(sos_lp, x)
    # 4 Hz-ish random envelope with brief pauses
    env_rate = 4.0
    num_points = max(int(duration * env_rate) + 2, 4)
    points = rng.uniform(0.05, 1.0, size=num_points)
    points[rng.uniform(size=num_points) < 0.2] = 0.02
    t = np.arange(n) / sample_rate
    env = np.interp(t, np.arange(num_points) / env_rate, points)
    x = x * env
    return x / np.max(np.abs(x))


def fractional_delay_kernel(frac: float, num_taps: int = DELAY_FILTER_TAPS):
    """Windowed-sinc interpolation kernel with group delay center+frac."""
    center = num_taps // 2
    arg = np.arange(num_taps) - center - frac
    window = np.where(np.abs(arg) <= center,
                      0.5 * (1.0 + np.cos(np.pi * arg / center)), 0.0)
    return np.sinc(arg) * window


def delay_signal(x: np.ndarray, delay_samples: float,
                 num_taps: int = DELAY_FILTER_TAPS) -> np.ndarray:
    """Shift a signal by a possibly fractional, possibly negative delay."""
    k = int(np.floor(delay_samples))
    frac = delay_samples - k
    kernel = fractional_delay_kernel(frac, num_taps)
    full = scipy.signal.fftconvolve(x, kernel)
    center = num_taps // 2
    out = np.zeros_like(x)
    n = len(x)
    # full[i] ~ x(i - center - frac); out[t] = x(t - k - frac)
    src_lo = max(0, k - center)
    src_hi = min(n, len(full) - center + k)
    out[src_lo:src_hi] = full[src_lo + center - k:src_hi + center - k]
    return out


def synth_direct(source, geom: ArrayGeometry, azimuth: float,
                 elevation: float = 0.0, sample_rate: int = 16000) -> np.ndarray:
    """Steer a mono source across the array with fractional-delay filters.

    The reference channel keeps zero delay (bit-exact copy of the source);
    the other channels realize the same relative delays as the plane-wave
    steering model.
    """
    source = np.asarray(source, dtype=np.float64)
    tau = propagation_delays(geom, azimuth, elevation)
    out = np.empty((geom.num_mics, len(source)))
    for m in range(geom.num_mics):
        if m == geom.reference_index:
            out[m] = source
        else:
            out[m] = delay_signal(source, tau[m] * sample_rate)
    return out


def add_early_reflections(direct: np.ndarray, spec: SceneSpec,
                          sample_rate: int, rng) -> np.ndarray:
    """Attenuated delayed copies of the steered direct signal.

    Every copy shares the direct path's steering, which keeps the per-bin
    rank-1 structure of the target component intact.
    """
    if spec.early_taps == 0:
        return direct.copy()
    window = int(spec.early_window_ms * 1e-3 * sample_rate)
    lo = max(int(2e-3 * sample_rate), 1)
    delays = np.sort(rng.integers(lo, max(window, lo + 1),
                                  size=spec.early_taps))
    out = direct.copy()
    for delay in delays:
        gain = 0.5 * (1.0 - delay / window) * rng.choice([-1.0, 1.0])
        out[:, delay:] += gain * direct[:, :direct.shape[1] - delay]
    return out


def reverb_to_direct_ratio(t60: float, onset_s: float) -> float:
    """Tail-to-direct energy ratio from the exponential decay model.

    The tail coefficient level is held constant across decay times, so the
    ratio scales with the decay envelope's energy integral; the constant is
    anchored at +4 dB for a 0.5 s decay.
    """

    def integral(t):
        rate = 2.0 * ENVELOPE_RATE / t
        return math.exp(-rate * onset_s) / rate

    return DRR_ANCHOR_RATIO * integral(t60) / integral(DRR_ANCHOR_T60)


def coherence_shaped_tail(geom: ArrayGeometry, tail_len: int, t60: float,
                          sample_rate: int, rng) -> np.ndarray:
    """Decaying noise RIR tails with the diffuse sinc coherence across mics."""
    m = geom.num_mics
    noise = rng.standard_normal((m, tail_len))
    spec = np.fft.rfft(noise, axis=1)                      # (M, F)
    freqs = np.fft.rfftfreq(tail_len, 1.0 / sample_rate)
    dist = geom.pairwise_distances()
    coherence = np.sinc(2.0 * freqs[:, None, None] * dist
                        / geom.speed_of_sound)              # (F, M, M)
    evals, evecs = np.linalg.eigh(coherence)
    evals = np.maximum(evals, 0.0)
    root = np.einsum("fij,fj,fkj->fik", evecs, np.sqrt(evals), evecs)
    mixed = np.einsum("fij,jf->if", root, spec)
    tail = np.fft.irfft(mixed, n=tail_len, axis=1)
    envelope = np.exp(-ENVELOPE_RATE * np.arange(tail_len)
                      / (t60 * sample_rate))
    return tail * envelope


def synth_late(source, geom: ArrayGeometry, spec: SceneSpec,
               sample_rate: int, rng) -> np.ndarray:
    """Late-reverberation component: source convolved with synthetic tails.

    Tail onset sits one early window after the direct arrival and each
    channel's tail energy follows the decay-time-controlled ratio against a
    unit direct path.
    """
    source = np.asarray(source, dtype=np.float64)
    onset = int(spec.early_window_ms * 1e-3 * sample_rate)
    tail_len = max(int(spec.t60 * sample_rate), 1)
    tail = coherence_shaped_tail(geom, tail_len, spec.t60, sample_rate, rng)
    target = reverb_to_direct_ratio(spec.t60, spec.early_window_ms * 1e-3)
    energy = np.sum(tail ** 2, axis=1)
    tail *= np.sqrt(target / energy)[:, None]
    out = np.empty((geom.num_mics, len(source)))
    for m in range(geom.num_mics):
        full = scipy.signal.fftconvolve(source, tail[m])
        out[m] = 0.0
        out[m, onset:] = full[:len(source) - onset]
    return out


def mix(direct_early: np.ndarray, late_reverb: np.ndarray,
        noise_raw: np.ndarray, snr_db: float, reference_index: int):
    """Scale the noise for the requested reference-mic SNR; returns (noise, y).

    An infinite snr_db disables the noise entirely.
    """
    if math.isinf(snr_db) and snr_db > 0:
        noise = np.zeros_like(direct_early)
        return noise, direct_early + late_reverb + noise
    signal_power = np.mean((direct_early + late_reverb)[reference_index] ** 2)
    noise_power = np.mean(noise_raw[reference_index] ** 2)
    if signal_power == 0.0 or noise_power == 0.0:
        raise ValueError("cannot set SNR with a silent signal or noise")
    scale = math.sqrt(signal_power / (noise_power * 10.0 ** (snr_db / 10.0)))
    noise = noise_raw * scale
    return noise, direct_early + late_reverb + noise


def build_scene(spec: SceneSpec, geom: ArrayGeometry, sample_rate: int = 16000,
                source=None, noise=None) -> Scene:
    """Assemble a full scene; deterministic for a given spec and seed.

    ``source`` defaults to seeded speech-shaped noise; ``noise`` defaults to
    spatially white Gaussian noise, or pass a (M, samples) recording.
    """
    streams = np.random.SeedSequence(spec.seed).spawn(4)
    rng_source, rng_early, rng_tail, rng_noise = (np.random.default_rng(s)
                                                  for s in streams)
    if source is None:
        source = speech_shaped_noise(spec.duration, sample_rate, rng_source)
    source = np.asarray(source, dtype=np.float64)
    n = len(source)

    direct = synth_direct(source, geom, spec.doa_azimuth, spec.doa_elevation,
                          sample_rate)
    direct_early = add_early_reflections(direct, spec, sample_rate, rng_early)
    late = synth_late(source, geom, spec, sample_rate, rng_tail)
    if noise is None:
        noise_raw = rng_noise.standard_normal((geom.num_mics, n))
    else:
        noise_raw = np.asarray(noise, dtype=np.float64)
        if noise_raw.shape != direct.shape:
            raise ValueError("supplied noise must match (mics, samples)")
    noise_scaled, mixture = mix(direct_early, late, noise_raw, spec.snr_db,
                                geom.reference_index)
    return Scene(direct_early=direct_early, late_reverb=late,
                 noise=noise_scaled, mixture=mixture, source=source,
                 sample_rate=sample_rate, spec=spec)
