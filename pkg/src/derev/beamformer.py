"""MVDR beamforming from estimated late-reverberation and noise PSDs."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .spatial import BinSpatialModel

DEFAULT_DIAGONAL_LOADING = 1e-2


def delay_and_sum_weights(d: np.ndarray) -> np.ndarray:
    """Distortionless fallback weights d / (d^H d). Batched over leading axes."""
    dhd = np.real(np.einsum("...m,...m->...", d.conj(), d))
    return d / dhd[..., None]


def interference_covariance(model: BinSpatialModel, phi_r: float, phi_v: float,
                            diagonal_loading: float) -> np.ndarray:
    """phi_r*Gamma + phi_v*Psi plus trace-scaled diagonal loading."""
    cov = phi_r * model.gamma + phi_v * model.psi
    m = model.num_mics
    load = diagonal_loading * np.real(np.trace(cov)) / m
    return cov + load * np.eye(m)


def mvdr_weights(model: BinSpatialModel, phi_r: float, phi_v: float,
                 diagonal_loading: float = DEFAULT_DIAGONAL_LOADING):
    """Distortionless minimum-interference weights for one bin.

    Solves the loaded interference covariance against the steering vector by
    Cholesky factorization (no explicit inverse) and normalizes so that
    w^H d = 1. Returns (weights, used_fallback); a numerically unusable
    covariance falls back to delay-and-sum.
    """
    d = model.d
    cov = interference_covariance(model, phi_r, phi_v, diagonal_loading)
    try:
        factor = scipy.linalg.cho_factor(cov, check_finite=False)
        sol = scipy.linalg.cho_solve(factor, d, check_finite=False)
    except (scipy.linalg.LinAlgError, ValueError):
        return delay_and_sum_weights(d), True
    denom = np.real(np.vdot(d, sol))
    if not np.isfinite(denom) or denom <= 0.0 or not np.all(np.isfinite(sol)):
        return delay_and_sum_weights(d), True
    return sol / denom, False


def beamform(weights: np.ndarray, y: np.ndarray):
    """w^H y. Batched over leading axes."""
    if weights.shape != y.shape:
        raise ValueError(f"shape mismatch: {weights.shape} vs {y.shape}")
    return np.einsum("...m,...m->...", weights.conj(), y)


@dataclass
class BeamformerState:
    """Current and previous-frame weights for one bank of bins."""

    weights: np.ndarray       # (K, M)
    weights_prev: np.ndarray  # (K, M), consumed by the fused target-PSD term
    diagonal_loading: float = DEFAULT_DIAGONAL_LOADING


class MvdrBank:
    """Per-frame MVDR weights for all bins at once.

    For identity noise coherence the interference covariance shares the
    eigenvectors of the diffuse coherence, so one eigendecomposition per bin
    at construction yields an exact Hermitian-factorization solve for every
    frame. Bins whose spectrum collapses (both PSDs at zero) fall back to
    delay-and-sum.
    """

    def __init__(self, models: list[BinSpatialModel],
                 diagonal_loading: float = DEFAULT_DIAGONAL_LOADING):
        self.diagonal_loading = diagonal_loading
        self.models = models
        self.d = np.stack([mod.d for mod in models])                # (K, M)
        self.num_bins, self.num_mics = self.d.shape
        self.das = delay_and_sum_weights(self.d)
        self.fallback_count = 0

        psi = np.stack([mod.psi for mod in models])
        eye = np.eye(self.num_mics)
        self._psi_identity = bool(np.all(psi == eye))
        gamma = np.stack([mod.gamma for mod in models])
        self._tr_gamma = np.real(np.einsum("kii->k", gamma)) / self.num_mics
        self._tr_psi = np.real(np.einsum("kii->k", psi)) / self.num_mics
        if self._psi_identity:
            evals, evecs = np.linalg.eigh(gamma.real)
            self._evals = evals                                     # (K, M)
            self._evecs = evecs.astype(np.complex128)               # (K, M, M)
            self._evecs_h_d = np.einsum("kmi,km->ki", self._evecs.conj(), self.d)

    def weights(self, phi_r: np.ndarray, phi_v: np.ndarray):
        """MVDR weights for one frame, (K, M). Returns (weights, fallback_mask)."""
        load = self.diagonal_loading * (phi_r * self._tr_gamma
                                        + phi_v * self._tr_psi)
        if self._psi_identity:
            denom = (phi_r[:, None] * self._evals
                     + (phi_v + load)[:, None])                     # (K, M)
            usable = np.all(denom > 0.0, axis=1) & np.all(np.isfinite(denom), axis=1)
            denom = np.where(usable[:, None], denom, 1.0)
            sol = np.einsum("kmi,ki->km", self._evecs, self._evecs_h_d / denom)
            scale = np.real(np.einsum("km,km->k", self.d.conj(), sol))
            usable &= np.isfinite(scale) & (scale > 0.0)
            scale = np.where(usable, scale, 1.0)
            w = sol / scale[:, None]
            fallback = ~usable
            w[fallback] = self.das[fallback]
        else:
            w = np.empty_like(self.das)
            fallback = np.zeros(self.num_bins, dtype=bool)
            for k, model in enumerate(self.models):
                w[k], fallback[k] = mvdr_weights(model, phi_r[k], phi_v[k],
                                                 self.diagonal_loading)
        self.fallback_count += int(np.count_nonzero(fallback))
        return w, fallback
