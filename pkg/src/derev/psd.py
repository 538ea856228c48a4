"""Blocking-based joint estimation of late-reverberation, noise and target PSDs.

The target direction is removed with the blocking matrix; the covariance of
what remains is decomposed onto the blocked diffuse and noise coherence
matrices by a 2x2 Frobenius-inner-product system, and the target PSD follows
by subtracting both terms from the full observation covariance.
"""

from dataclasses import dataclass

import numpy as np

from .spatial import BinSpatialModel

FLOOR_FACTOR = 1e-10
SINGULAR_REL_DET = 1e-12
WARMUP_FRAMES = 10


def block_signal(model: BinSpatialModel, y: np.ndarray) -> np.ndarray:
    """Project one observation onto the target-free subspace: B^H y."""
    y = np.asarray(y)
    if y.shape[-1] != model.blocking.shape[0]:
        raise ValueError(
            f"observation has {y.shape[-1]} channels, "
            f"blocking matrix expects {model.blocking.shape[0]}"
        )
    return model.blocking.conj().T @ y


def recursive_outer_update(cov: np.ndarray, vec: np.ndarray,
                           smoothing: float) -> np.ndarray:
    """cov <- lam*cov + (1-lam)*vec vec^H, re-symmetrized. Works batched."""
    outer = vec[..., :, None] * vec[..., None, :].conj()
    cov = smoothing * cov + (1.0 - smoothing) * outer
    return 0.5 * (cov + np.conj(np.swapaxes(cov, -1, -2)))


def gram_entries(gamma_blocked: np.ndarray, psi_blocked: np.ndarray):
    """Frobenius inner products of the two blocked coherence matrices.

    Returns (g_gg, g_gp, g_pp); imaginary parts vanish for Hermitian inputs
    and are discarded.
    """
    g_gg = np.real(np.einsum("...ij,...ij->...", gamma_blocked.conj(), gamma_blocked))
    g_gp = np.real(np.einsum("...ij,...ij->...", gamma_blocked.conj(), psi_blocked))
    g_pp = np.real(np.einsum("...ij,...ij->...", psi_blocked.conj(), psi_blocked))
    return g_gg, g_gp, g_pp


def singular_gram(g_gg, g_gp, g_pp):
    """Bins where the PSD split is unidentifiable.

    Flags a determinant below SINGULAR_REL_DET times the diagonal product,
    and also a vanishing diagonal entry: a numerically zero basis matrix (the
    blocked diffuse coherence degenerates at DC) leaves that PSD
    unidentifiable even when the relative determinant looks healthy.
    """
    det = g_gg * g_pp - g_gp * g_gp
    flag = np.abs(det) < SINGULAR_REL_DET * np.abs(g_gg * g_pp)
    return flag | (g_gg <= 1e-30 * g_pp) | (g_pp <= 1e-30 * g_gg)


def solve_psd_pair(cov_blocked: np.ndarray, gamma_blocked: np.ndarray,
                   psi_blocked: np.ndarray):
    """Least-squares split of a blocked covariance into reverb and noise PSDs.

    Solves the 2x2 system of Frobenius inner products. Returns
    (phi_r, phi_v, singular) where ``singular`` marks bins whose split is
    unidentifiable; callers keep their previous estimates there. Batched over
    leading axes.
    """
    g_gg, g_gp, g_pp = gram_entries(gamma_blocked, psi_blocked)
    rhs_g = np.real(np.einsum("...ij,...ij->...", cov_blocked.conj(), gamma_blocked))
    rhs_p = np.real(np.einsum("...ij,...ij->...", cov_blocked.conj(), psi_blocked))
    det = g_gg * g_pp - g_gp * g_gp
    singular = singular_gram(g_gg, g_gp, g_pp)
    safe_det = np.where(singular, 1.0, det)
    phi_r = (g_pp * rhs_g - g_gp * rhs_p) / safe_det
    phi_v = (g_gg * rhs_p - g_gp * rhs_g) / safe_det
    return phi_r, phi_v, singular


def target_psd_value(cov_full: np.ndarray, phi_r, phi_v, gamma: np.ndarray,
                     psi: np.ndarray, d: np.ndarray):
    """Target PSD: trace of the covariance minus both interference terms,
    normalized by d^H d. Batched over leading axes."""
    tr_cov = np.real(np.einsum("...ii->...", cov_full))
    tr_gamma = np.real(np.einsum("...ii->...", gamma))
    tr_psi = np.real(np.einsum("...ii->...", psi))
    dhd = np.real(np.einsum("...m,...m->...", d.conj(), d))
    return (tr_cov - phi_r * tr_gamma - phi_v * tr_psi) / dhd


@dataclass
class PsdTriple:
    """Latest per-bin PSD estimates, each shaped (bins,)."""

    late_reverb: np.ndarray
    noise: np.ndarray
    target: np.ndarray


class PsdEstimator:
    """Frame-recursive PSD tracker for a bank of frequency bins.

    State arrays carry a leading bin axis; every operation is bin-diagonal,
    so the bank behaves exactly like independent per-bin estimators. Updates
    must be fed frame-sequentially.
    """

    def __init__(self, models: list[BinSpatialModel], smoothing: float = 0.95,
                 floor_factor: float = FLOOR_FACTOR):
        if not 0.0 < smoothing < 1.0:
            raise ValueError("smoothing must lie in (0, 1)")
        self.smoothing = smoothing
        self.floor_factor = floor_factor
        self.num_bins = len(models)
        m = models[0].num_mics
        self.num_mics = m

        self.blocking = np.stack([mod.blocking for mod in models])      # (K, M, M-1)
        self.gamma = np.stack([mod.gamma for mod in models])            # (K, M, M)
        self.psi = np.stack([mod.psi for mod in models])
        self.gamma_blocked = np.stack([mod.gamma_blocked for mod in models])
        self.psi_blocked = np.stack([mod.psi_blocked for mod in models])
        self.d = np.stack([mod.d for mod in models])                    # (K, M)

        g_gg, g_gp, g_pp = gram_entries(self.gamma_blocked, self.psi_blocked)
        self.singular_gram = singular_gram(g_gg, g_gp, g_pp)

        self.cov_blocked = np.zeros((self.num_bins, m - 1, m - 1), dtype=np.complex128)
        self.cov_full = np.zeros((self.num_bins, m, m), dtype=np.complex128)
        self.phi_r = np.zeros(self.num_bins)
        self.phi_v = np.zeros(self.num_bins)
        self.phi_target = np.zeros(self.num_bins)
        self.trace_runmax = np.zeros(self.num_bins)
        self.frame_count = 0
        self.singular_solves = 0

    @property
    def in_warmup(self) -> bool:
        return self.frame_count < WARMUP_FRAMES

    @property
    def psd_floor(self) -> np.ndarray:
        return self.floor_factor * self.trace_runmax

    def block(self, y: np.ndarray) -> np.ndarray:
        """B^H y for one frame of all bins, y shaped (bins, mics)."""
        return np.einsum("kmi,km->ki", self.blocking.conj(), y)

    def update_covariances(self, blocked: np.ndarray, y: np.ndarray) -> None:
        self.cov_blocked = recursive_outer_update(self.cov_blocked, blocked,
                                                  self.smoothing)
        self.cov_full = recursive_outer_update(self.cov_full, y, self.smoothing)
        tr = np.real(np.einsum("kii->k", self.cov_full)) / self.num_mics
        np.maximum(self.trace_runmax, tr, out=self.trace_runmax)
        self.frame_count += 1

    def solve_psd(self):
        """Update (phi_r, phi_v) from the current blocked covariance."""
        phi_r, phi_v, singular = solve_psd_pair(self.cov_blocked,
                                                self.gamma_blocked,
                                                self.psi_blocked)
        keep = singular | self.singular_gram
        self.singular_solves += int(np.count_nonzero(keep))
        floor = self.psd_floor
        self.phi_r = np.where(keep, self.phi_r, np.maximum(phi_r, floor))
        self.phi_v = np.where(keep, self.phi_v, np.maximum(phi_v, floor))
        return self.phi_r, self.phi_v

    def target_psd(self) -> np.ndarray:
        phi = target_psd_value(self.cov_full, self.phi_r, self.phi_v,
                               self.gamma, self.psi, self.d)
        self.phi_target = np.maximum(phi, self.psd_floor)
        return self.phi_target

    def update(self, y: np.ndarray) -> PsdTriple:
        """Full per-frame estimator step on one (bins, mics) observation."""
        blocked = self.block(y)
        self.update_covariances(blocked, y)
        self.solve_psd()
        self.target_psd()
        return PsdTriple(late_reverb=self.phi_r, noise=self.phi_v,
                         target=self.phi_target)
