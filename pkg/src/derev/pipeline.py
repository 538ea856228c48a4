"""Frame-online orchestration: PSD estimation, MVDR, fusion, prediction.

Per frame and bin the engine (1) blocks the target and updates the PSD
estimator, (2) forms MVDR weights and the beamformed sample, (3) fuses the
estimated target PSD with the previous-frame beamformer output power, and
(4) runs the prediction Kalman step whose output is the enhanced sample.
All bins advance together on vectorized state banks; processing is strictly
deterministic for a given config and input.
"""

from dataclasses import dataclass, field

import numpy as np

from .beamformer import MvdrBank, delay_and_sum_weights
from .kalman import MclpKalman, TapBuffer
from .metrics import ShadowTrace
from .psd import PsdEstimator
from .spatial import ArrayGeometry, build_bin_models, uniform_linear_array
from .stft import StftConfig, Spectrogram, analyze, synthesize

MODES = ("full", "mvdr_only", "mclp_only", "passthrough")


@dataclass
class PipelineConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    geometry: ArrayGeometry = field(default_factory=uniform_linear_array)
    doa_azimuth: float = np.pi / 4
    doa_elevation: float = 0.0
    prediction_delay: int = 2
    prediction_order: int = 10
    fusion_weight: float = 0.7       # weight of the estimator PSD in the fusion
    psd_smoothing: float = 0.95
    transition_factor: float = 0.999
    diagonal_loading: float = 1e-2
    kalman_initial_cov: float = 1e-2
    process_noise_var: float | None = None
    mode: str = "full"
    diagnostics_decimation: int = 1

    def __post_init__(self):
        # endpoints 0 and 1 are permitted as test overrides of the fusion
        if not 0.0 <= self.fusion_weight <= 1.0:
            raise ValueError("fusion_weight must lie in [0, 1]")
        if not 0.0 < self.psd_smoothing < 1.0:
            raise ValueError("psd_smoothing must lie in (0, 1)")
        if not 0.0 < self.transition_factor <= 1.0:
            raise ValueError("transition_factor must lie in (0, 1]")
        if not 1 <= self.prediction_delay < self.prediction_order:
            raise ValueError("need 1 <= prediction_delay < prediction_order")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.diagnostics_decimation < 1:
            raise ValueError("diagnostics_decimation must be >= 1")

    @property
    def state_dim(self) -> int:
        return self.geometry.num_mics * (self.prediction_order
                                         - self.prediction_delay)


def fused_target_psd(estimator_psd, prev_beam_power, fusion_weight: float):
    """Convex fusion of the estimator PSD with the previous-frame beamformer
    output power; nonnegative by construction."""
    return (fusion_weight * estimator_psd
            + (1.0 - fusion_weight) * prev_beam_power)


@dataclass
class DiagnosticsLog:
    """Per-frame, per-bin estimator and filter diagnostics.

    Arrays are (kept_frames, bins); ``frame_indices`` maps rows back to frame
    numbers when decimation drops frames.
    """

    frame_indices: np.ndarray
    phi_late_reverb: np.ndarray
    phi_noise: np.ndarray
    phi_target: np.ndarray
    phi_fused: np.ndarray
    beamformed: np.ndarray
    predicted_reverb_power: np.ndarray
    gain_norm: np.ndarray
    mvdr_fallback: np.ndarray
    kalman_skipped: np.ndarray
    nonfinite_repaired: np.ndarray


@dataclass
class PipelineResult:
    enhanced: np.ndarray             # mono waveform
    diagnostics: DiagnosticsLog
    trace: ShadowTrace | None
    enhanced_spec: Spectrogram


class OnlinePipeline:
    """Stateful frame-by-frame engine over all frequency bins.

    Every mode runs the estimator and beamformer state updates identically;
    modes only select which weights shape the output, so ablations never
    perturb shared state.
    """

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.models = build_bin_models(config.geometry, config.doa_azimuth,
                                       config.doa_elevation, config.stft)
        self.num_bins = len(self.models)
        m = config.geometry.num_mics
        self.num_channels = m
        self.estimator = PsdEstimator(self.models, smoothing=config.psd_smoothing)
        self.mvdr = MvdrBank(self.models, diagonal_loading=config.diagonal_loading)
        self.kalman = MclpKalman(
            self.num_bins, config.state_dim,
            transition=config.transition_factor,
            initial_cov=config.kalman_initial_cov,
            process_noise_var=config.process_noise_var,
        )
        self.taps = TapBuffer(self.num_bins, m,
                              order=config.prediction_order,
                              delay=config.prediction_delay)
        self.ref_weights = np.zeros((self.num_bins, m), dtype=np.complex128)
        self.ref_weights[:, config.geometry.reference_index] = 1.0
        # the fusion term needs last-frame weights; bootstrap with delay-and-sum
        d = np.stack([mod.d for mod in self.models])
        self.weights_prev = delay_and_sum_weights(d)
        self.frame_index = 0
        self._kalman_zero = np.zeros((self.num_bins, config.state_dim),
                                     dtype=np.complex128)

    def process_frame(self, y: np.ndarray):
        """Advance one frame; y is (bins, channels).

        Returns (enhanced_bins, record) where record maps diagnostic names to
        per-bin arrays for this frame.
        """
        cfg = self.config
        ref = cfg.geometry.reference_index
        psds = self.estimator.update(y)
        w_mvdr, fallback = self.mvdr.weights(psds.late_reverb, psds.noise)

        if cfg.mode in ("full", "mvdr_only"):
            w_eff = w_mvdr
        else:
            w_eff = self.ref_weights
        beamformed = np.einsum("km,km->k", w_eff.conj(), y)

        prev_power = np.abs(np.einsum("km,km->k", self.weights_prev.conj(), y)) ** 2
        phi_fused = fused_target_psd(psds.target, prev_power, cfg.fusion_weight)

        taps = self.taps.stacked()
        use_kalman = cfg.mode in ("full", "mclp_only")
        if use_kalman:
            enhanced, info = self.kalman.step(taps, beamformed, phi_fused)
            weights_prior = info.weights_prior
            predicted = info.predicted_reverb
            gain_norm = info.gain_norm
            skipped = info.skipped
        else:
            enhanced = beamformed
            weights_prior = self._kalman_zero
            predicted = np.zeros(self.num_bins, dtype=np.complex128)
            gain_norm = np.zeros(self.num_bins)
            skipped = np.zeros(self.num_bins, dtype=bool)

        if cfg.mode == "passthrough":
            enhanced = y[:, ref]
            w_eff = self.ref_weights
            weights_prior = self._kalman_zero

        # never hand non-finite samples to the synthesizer
        repaired = ~(np.isfinite(enhanced.real) & np.isfinite(enhanced.imag))
        if np.any(repaired):
            fallback_chain = np.where(
                np.isfinite(beamformed.real) & np.isfinite(beamformed.imag),
                beamformed, np.where(np.isfinite(y[:, ref].real)
                                     & np.isfinite(y[:, ref].imag),
                                     y[:, ref], 0.0))
            enhanced = np.where(repaired, fallback_chain, enhanced)

        self.taps.push(y)
        self.weights_prev = w_eff
        self.frame_index += 1

        record = {
            "phi_late_reverb": psds.late_reverb.copy(),
            "phi_noise": psds.noise.copy(),
            "phi_target": psds.target.copy(),
            "phi_fused": phi_fused,
            "beamformed": beamformed,
            "predicted_reverb_power": np.abs(predicted) ** 2,
            "gain_norm": gain_norm,
            "mvdr_fallback": fallback,
            "kalman_skipped": skipped,
            "nonfinite_repaired": repaired,
            "beam_weights": w_eff,
            "predict_weights": weights_prior,
        }
        return enhanced, record


def run(config: PipelineConfig, waveform, sample_rate: int | None = None,
        collect_trace: bool = True) -> PipelineResult:
    """Enhance a multichannel waveform offline through the online engine.

    Args:
        config: pipeline configuration.
        waveform: (channels, samples) real array matching the geometry.
        sample_rate: optional cross-check against the configured rate.
        collect_trace: keep the per-frame weight snapshots for shadow
            filtering (sizeable for long inputs).
    """
    x = np.atleast_2d(np.asarray(waveform, dtype=np.float64))
    m = config.geometry.num_mics
    if x.shape[0] != m:
        raise ValueError(f"waveform has {x.shape[0]} channels, geometry has {m}")
    if sample_rate is not None and sample_rate != config.stft.sample_rate:
        raise ValueError(
            f"sample rate {sample_rate} does not match configured "
            f"{config.stft.sample_rate}"
        )

    spec = analyze(x, config.stft)
    engine = OnlinePipeline(config)
    num_frames = spec.frames
    k = engine.num_bins

    out = np.empty((1, num_frames, k), dtype=np.complex128)
    kept = range(0, num_frames, config.diagnostics_decimation)
    kept_count = len(kept)
    diag_arrays = {
        name: np.empty((kept_count, k))
        for name in ("phi_late_reverb", "phi_noise", "phi_target", "phi_fused",
                     "predicted_reverb_power", "gain_norm")
    }
    diag_arrays["beamformed"] = np.empty((kept_count, k), dtype=np.complex128)
    flag_arrays = {
        name: np.empty((kept_count, k), dtype=bool)
        for name in ("mvdr_fallback", "kalman_skipped", "nonfinite_repaired")
    }
    if collect_trace:
        beam_weights = np.empty((num_frames, k, m), dtype=np.complex128)
        predict_weights = np.empty((num_frames, k, config.state_dim),
                                   dtype=np.complex128)

    row = 0
    for l in range(num_frames):
        enhanced, record = engine.process_frame(spec.data[:, l, :].T)
        out[0, l] = enhanced
        if collect_trace:
            beam_weights[l] = record["beam_weights"]
            predict_weights[l] = record["predict_weights"]
        if l % config.diagnostics_decimation == 0:
            for name, arr in diag_arrays.items():
                arr[row] = record[name]
            for name, arr in flag_arrays.items():
                arr[row] = record[name]
            row += 1

    diagnostics = DiagnosticsLog(
        frame_indices=np.asarray(list(kept)),
        **diag_arrays, **flag_arrays,
    )
    trace = None
    if collect_trace:
        trace = ShadowTrace(
            stft=config.stft,
            reference_index=config.geometry.reference_index,
            prediction_delay=config.prediction_delay,
            prediction_order=config.prediction_order,
            mode=config.mode,
            num_samples=spec.num_samples,
            beam_weights=beam_weights,
            predict_weights=predict_weights,
        )
    enhanced_spec = Spectrogram(data=out, num_samples=spec.num_samples)
    enhanced = synthesize(enhanced_spec, config.stft)[0]
    return PipelineResult(enhanced=enhanced, diagnostics=diagnostics,
                          trace=trace, enhanced_spec=enhanced_spec)
