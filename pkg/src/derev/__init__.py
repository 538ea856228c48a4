"""Frame-online multichannel speech dereverberation.

An MVDR beamformer driven by a blocking-based late-reverberation/noise PSD
estimator is fused with a multichannel linear-prediction Kalman filter; a
synthetic scene generator and a shadow-filtering evaluator verify the
interference-reduction behavior end to end.
"""

from .beamformer import BeamformerState, MvdrBank, beamform, mvdr_weights
from .kalman import MclpKalman, TapBuffer
from .metrics import (MetricsReport, ShadowTrace, evaluate_scene,
                      log_spectral_distance, segmental_snr, shadow_apply, sir)
from .pipeline import (DiagnosticsLog, OnlinePipeline, PipelineConfig,
                       PipelineResult, fused_target_psd, run)
from .psd import PsdEstimator, block_signal, solve_psd_pair, target_psd_value
from .scene import Scene, SceneSpec, build_scene, speech_shaped_noise
from .spatial import (ArrayGeometry, BinSpatialModel, blocking_matrix,
                      build_bin_models, diffuse_coherence, steering_vector,
                      uniform_linear_array)
from .stft import Spectrogram, StftConfig, analyze, synthesize

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry", "BeamformerState", "BinSpatialModel", "DiagnosticsLog",
    "MclpKalman", "MetricsReport", "MvdrBank", "OnlinePipeline",
    "PipelineConfig", "PipelineResult", "PsdEstimator", "Scene", "SceneSpec",
    "ShadowTrace", "Spectrogram", "StftConfig", "TapBuffer", "analyze",
    "beamform", "block_signal", "blocking_matrix", "build_bin_models",
    "build_scene", "diffuse_coherence", "evaluate_scene", "fused_target_psd",
    "log_spectral_distance", "mvdr_weights", "run", "segmental_snr",
    "shadow_apply", "sir", "solve_psd_pair", "speech_shaped_noise",
    "steering_vector", "synthesize", "target_psd_value", "uniform_linear_array",
]
