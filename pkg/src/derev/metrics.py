"""Enhancement metrics via shadow filtering of scene components.

The processing chain is linear in the observations once its time-varying
weights are frozen, so replaying the recorded weights on each ground-truth
component (direct+early, late reverb, noise) separately decomposes the
enhanced output and yields component-true interference ratios. Segmental SNR
and log-spectral distance stand in for perceptual metrics, which are out of
scope; reports label them as proxies.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .kalman import TapBuffer
from .stft import StftConfig, Spectrogram, analyze, synthesize

SILENCE_EXCLUDE_DB = -40.0
SEGSNR_CLAMP_DB = (-10.0, 35.0)
SEGMENT_MS = 30.0
DEFAULT_BANDS_HZ = ((0, 500), (500, 1000), (1000, 2000), (2000, 4000), (4000, 8000))


class ConsistencyError(RuntimeError):
    """Internal cross-check failed (shadow superposition mismatch)."""


@dataclass
class ShadowTrace:
    """Frozen per-frame weights actually applied by the pipeline.

    ``beam_weights`` is (frames, bins, mics) and ``predict_weights`` is
    (frames, bins, state_dim); replaying them on the original input must
    reproduce the pipeline output.
    """

    stft: StftConfig
    reference_index: int
    prediction_delay: int
    prediction_order: int
    mode: str
    num_samples: int
    beam_weights: np.ndarray
    predict_weights: np.ndarray

    @property
    def frames(self) -> int:
        return self.beam_weights.shape[0]


def shadow_apply(trace: ShadowTrace, component) -> np.ndarray:
    """Run the frozen weights over one multichannel component.

    No state adapts here: per frame and bin the output is
    w_beam^H y_c - w_predict^H t_c with t_c stacked from the component's own
    delayed spectra. Returns the mono waveform.
    """
    component = np.atleast_2d(np.asarray(component, dtype=np.float64))
    if component.shape[1] != trace.num_samples:
        raise ValueError(
            f"component length {component.shape[1]} does not match trace "
            f"({trace.num_samples} samples)"
        )
    if component.shape[0] != trace.beam_weights.shape[2]:
        raise ValueError(
            f"component has {component.shape[0]} channels, trace expects "
            f"{trace.beam_weights.shape[2]}"
        )
    spec = analyze(component, trace.stft)
    if spec.frames != trace.frames:
        raise ValueError("frame count mismatch between trace and component")

    num_bins = spec.bins
    buffer = TapBuffer(num_bins, component.shape[0],
                       order=trace.prediction_order,
                       delay=trace.prediction_delay)
    out = np.empty((1, spec.frames, num_bins), dtype=np.complex128)
    for l in range(spec.frames):
        y = spec.data[:, l, :].T                                   # (K, M)
        taps = buffer.stacked()
        out[0, l] = (np.einsum("km,km->k", trace.beam_weights[l].conj(), y)
                     - np.einsum("kn,kn->k", trace.predict_weights[l].conj(), taps))
        buffer.push(y)
    return synthesize(Spectrogram(data=out, num_samples=trace.num_samples),
                      trace.stft)[0]


def sir(target, interference) -> float:
    """Energy ratio in dB; +inf when the interference is identically zero."""
    target = np.asarray(target, dtype=np.float64)
    interference = np.asarray(interference, dtype=np.float64)
    if target.shape != interference.shape:
        raise ValueError("target and interference must have equal length")
    p_int = float(np.sum(interference ** 2))
    p_tgt = float(np.sum(target ** 2))
    if p_int == 0.0:
        return math.inf
    return 10.0 * math.log10(p_tgt / p_int)


def _segment_view(x: np.ndarray, seg_len: int, hop: int) -> np.ndarray:
    num = 1 + (len(x) - seg_len) // hop if len(x) >= seg_len else 0
    idx = np.arange(num)[:, None] * hop + np.arange(seg_len)
    return x[idx]


def segmental_snr(reference, estimate, sample_rate: int,
                  segment_ms: float = SEGMENT_MS,
                  clamp_db=SEGSNR_CLAMP_DB) -> float:
    """Mean per-segment ratio of estimate energy to estimate-error energy.

    Segments of ``segment_ms`` at 50% overlap; segments whose reference
    energy sits more than 40 dB under the loudest segment are excluded, and
    each segment's ratio is clamped to ``clamp_db``.
    """
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if reference.shape != estimate.shape:
        raise ValueError("reference and estimate must have equal length")
    if not np.any(reference != 0.0):
        raise ValueError("reference is silent")
    seg_len = int(round(segment_ms * 1e-3 * sample_rate))
    hop = seg_len // 2
    ref_segs = _segment_view(reference, seg_len, hop)
    est_segs = _segment_view(estimate, seg_len, hop)
    ref_power = np.sum(ref_segs ** 2, axis=1)
    keep = ref_power > ref_power.max() * 10.0 ** (SILENCE_EXCLUDE_DB / 10.0)
    est_power = np.sum(est_segs[keep] ** 2, axis=1)
    err_power = np.sum((est_segs[keep] - ref_segs[keep]) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        snr = 10.0 * np.log10(est_power / np.where(err_power > 0.0, err_power,
                                                   np.nan))
    snr = np.where(err_power > 0.0, snr, np.inf)
    snr = np.where(est_power > 0.0, snr, -np.inf)
    return float(np.mean(np.clip(snr, clamp_db[0], clamp_db[1])))


def log_spectral_distance(reference, estimate, sample_rate: int,
                          segment_ms: float = SEGMENT_MS) -> float:
    """RMS distance in dB between short-time log power spectra."""
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if reference.shape != estimate.shape:
        raise ValueError("reference and estimate must have equal length")
    if not np.any(reference != 0.0):
        raise ValueError("reference is silent")
    seg_len = int(round(segment_ms * 1e-3 * sample_rate))
    hop = seg_len // 2
    window = np.hanning(seg_len)
    nfft = 1 << (seg_len - 1).bit_length()
    ref_spec = np.abs(np.fft.rfft(_segment_view(reference, seg_len, hop) * window,
                                  n=nfft, axis=1)) ** 2
    est_spec = np.abs(np.fft.rfft(_segment_view(estimate, seg_len, hop) * window,
                                  n=nfft, axis=1)) ** 2
    frame_power = ref_spec.sum(axis=1)
    keep = frame_power > frame_power.max() * 10.0 ** (SILENCE_EXCLUDE_DB / 10.0)
    floor = max(ref_spec.max(), est_spec.max()) * 1e-8
    ref_db = 10.0 * np.log10(np.maximum(ref_spec[keep], floor))
    est_db = 10.0 * np.log10(np.maximum(est_spec[keep], floor))
    per_frame = np.sqrt(np.mean((ref_db - est_db) ** 2, axis=1))
    return float(np.mean(per_frame))


def band_energy(x: np.ndarray, sample_rate: int, band_hz) -> float:
    spec = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(len(x), 1.0 / sample_rate)
    mask = (freqs >= band_hz[0]) & (freqs < band_hz[1])
    return float(np.sum(spec[mask]))


@dataclass
class BandBreakdown:
    low_hz: float
    high_hz: float
    sir_in: float
    sir_out: float

    @property
    def delta_sir(self) -> float:
        return self.sir_out - self.sir_in


@dataclass
class MetricsReport:
    """Shadow-filtered interference reduction plus distortion proxies.

    segsnr and lsd substitute for perceptual quality metrics, which are not
    implemented here.
    """

    sir_in: float
    sir_out: float
    segsnr: float
    lsd: float
    bands: list[BandBreakdown] = field(default_factory=list)

    @property
    def delta_sir(self) -> float:
        return self.sir_out - self.sir_in

    def rows(self):
        yield "sir_in_db", self.sir_in
        yield "sir_out_db", self.sir_out
        yield "delta_sir_db", self.delta_sir
        yield "segsnr_db", self.segsnr
        yield "lsd_db", self.lsd
        for band in self.bands:
            tag = f"band_{band.low_hz:.0f}_{band.high_hz:.0f}"
            yield f"{tag}_sir_in_db", band.sir_in
            yield f"{tag}_sir_out_db", band.sir_out
            yield f"{tag}_delta_sir_db", band.delta_sir

    def to_csv(self) -> str:
        lines = ["key,value"]
        for key, value in self.rows():
            lines.append(f"{key},{value:.6f}")
        # distortion rows are stand-ins, not perceptual scores
        lines.append("proxy_note,segsnr_db and lsd_db substitute for "
                     "perceptual quality metrics (not implemented)")
        return "\n".join(lines) + "\n"


def warmup_samples(sample_rate: int, hop: int, prediction_order: int) -> int:
    """Initial region excluded from metrics while the recursions converge."""
    return max(prediction_order * hop, sample_rate // 2)


def evaluate_scene(trace: ShadowTrace, direct_early, late_reverb, noise,
                   sample_rate: int, superposition_rtol: float = 1e-9,
                   bands=DEFAULT_BANDS_HZ) -> MetricsReport:
    """Shadow-filter each component and score the enhancement.

    Raises ConsistencyError if the component shadows fail to superpose onto
    the replayed mixture output.
    """
    mixture = np.asarray(direct_early) + np.asarray(late_reverb) + np.asarray(noise)
    out_mix = shadow_apply(trace, mixture)
    out_target = shadow_apply(trace, direct_early)
    out_reverb = shadow_apply(trace, late_reverb)
    out_noise = shadow_apply(trace, noise)

    recombined = out_target + out_reverb + out_noise
    scale = np.linalg.norm(out_mix)
    mismatch = np.linalg.norm(recombined - out_mix)
    if scale > 0.0 and mismatch > superposition_rtol * scale:
        raise ConsistencyError(
            f"shadow superposition mismatch: {mismatch / scale:.3e} relative"
        )

    skip = warmup_samples(sample_rate, trace.stft.hop, trace.prediction_order)
    ref = trace.reference_index
    in_target = np.asarray(direct_early)[ref, skip:]
    in_interf = (np.asarray(late_reverb) + np.asarray(noise))[ref, skip:]
    out_t = out_target[skip:]
    out_i = (out_reverb + out_noise)[skip:]

    report = MetricsReport(
        sir_in=sir(in_target, in_interf),
        sir_out=sir(out_t, out_i),
        segsnr=segmental_snr(in_target, out_mix[skip:], sample_rate),
        lsd=log_spectral_distance(in_target, out_mix[skip:], sample_rate),
    )
    for band in bands:
        report.bands.append(BandBreakdown(
            low_hz=band[0], high_hz=band[1],
            sir_in=10.0 * math.log10(
                band_energy(in_target, sample_rate, band)
                / max(band_energy(in_interf, sample_rate, band), 1e-300)),
            sir_out=10.0 * math.log10(
                max(band_energy(out_t, sample_rate, band), 1e-300)
                / max(band_energy(out_i, sample_rate, band), 1e-300)),
        ))
    return report
