"""Per-bin Kalman filter tracking multichannel linear-prediction weights.

The late reverberation in each bin is modeled as a linear combination of
delayed multichannel observations; a Kalman recursion tracks the stacked
prediction weights online and the enhanced output is the beamformed sample
minus the predicted reverberation.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

INNOVATION_FLOOR_FACTOR = 1e-12


class TapBuffer:
    """Delay line of past multichannel spectra feeding the predictor.

    Holds the most recent ``order - 1`` frames; the stacked regressor skips
    the first ``delay`` frames so direct sound and early reflections never
    enter the prediction. Push the current frame only after using the
    regressor, so the regressor at frame l covers l-delay .. l-order+1.
    """

    def __init__(self, num_bins: int, num_channels: int, order: int = 10,
                 delay: int = 2):
        if not 1 <= delay < order:
            raise ValueError("need 1 <= delay < order")
        self.num_bins = num_bins
        self.num_channels = num_channels
        self.order = order
        self.delay = delay
        zero = np.zeros((num_bins, num_channels), dtype=np.complex128)
        # newest first: _frames[0] is y(l-1)
        self._frames = deque([zero.copy() for _ in range(order - 1)],
                             maxlen=order - 1)

    @property
    def state_dim(self) -> int:
        return self.num_channels * (self.order - self.delay)

    def stacked(self) -> np.ndarray:
        """Regressor (bins, state_dim): frames l-delay, ..., l-order+1."""
        taps = list(self._frames)[self.delay - 1:]
        return np.concatenate(taps, axis=1)

    def push(self, y: np.ndarray) -> None:
        if y.shape != (self.num_bins, self.num_channels):
            raise ValueError(
                f"expected frame shape {(self.num_bins, self.num_channels)}, "
                f"got {y.shape}"
            )
        self._frames.appendleft(np.array(y, dtype=np.complex128))


@dataclass
class KalmanStepInfo:
    """Per-frame diagnostics from one filter step, each shaped (bins,)."""

    predicted_reverb: np.ndarray   # w_prior^H t
    gain_norm: np.ndarray
    skipped: np.ndarray            # bins held because of non-finite input
    weights_prior: np.ndarray      # (bins, state_dim), the weights applied


class MclpKalman:
    """Bank of independent per-bin Kalman filters over the stacked weights.

    State arrays carry a leading bin axis; all operations are bin-diagonal.
    ``transition`` is the scalar decay of the weight state. With
    ``process_noise_var=None`` the process noise keeps the implied weight
    covariance stationary under the decay; a float selects a fixed isotropic
    process noise instead.
    """

    def __init__(self, num_bins: int, state_dim: int, transition: float = 0.999,
                 initial_cov: float = 1e-2, process_noise_var: float | None = None,
                 innovation_floor_factor: float = INNOVATION_FLOOR_FACTOR):
        if not 0.0 < transition <= 1.0:
            raise ValueError("transition must lie in (0, 1]")
        if initial_cov <= 0.0:
            raise ValueError("initial_cov must be positive")
        self.num_bins = num_bins
        self.state_dim = state_dim
        self.transition = transition
        self.process_noise_var = process_noise_var
        self.innovation_floor_factor = innovation_floor_factor

        self.weights = np.zeros((num_bins, state_dim), dtype=np.complex128)
        eye = np.eye(state_dim, dtype=np.complex128)
        self.err_cov = np.broadcast_to(initial_cov * eye,
                                       (num_bins, state_dim, state_dim)).copy()
        self.obs_power_runmax = np.zeros(num_bins)
        self.skipped_frames = 0
        self._scratch = np.empty_like(self.err_cov)

    def predict(self):
        """Prior weights and error covariance for the current frame."""
        a = self.transition
        w_prior = a * self.weights
        if self.process_noise_var is None:
            # a^2*P + (1-a^2)*(w w^H + P) == P + (1-a^2)*w w^H
            outer = self.weights[:, :, None] * self.weights[:, None, :].conj()
            cov_prior = self.err_cov + (1.0 - a * a) * outer
        else:
            eye = np.eye(self.state_dim)
            cov_prior = a * a * self.err_cov + self.process_noise_var * eye
        return w_prior, cov_prior

    def innovate(self, w_prior, cov_prior, taps, beamformed, target_psd):
        """Innovation, its floored power, and the gain for one frame.

        Returns (enhanced, innovation, gain, cov_taps) where ``innovation``
        is the conjugate-domain residual and ``enhanced`` its conjugate, the
        actual output sample.
        """
        np.maximum(self.obs_power_runmax, np.abs(beamformed) ** 2,
                   out=self.obs_power_runmax)
        floor = self.innovation_floor_factor * self.obs_power_runmax

        cov_taps = np.einsum("kij,kj->ki", cov_prior, taps)
        taps_cov_taps = np.real(np.einsum("ki,ki->k", taps.conj(), cov_taps))
        innov_power = np.maximum(taps_cov_taps + target_psd, floor)

        innovation = np.conj(beamformed) - np.einsum("ki,ki->k", taps.conj(), w_prior)
        dead = innov_power <= 0.0
        safe_power = np.where(dead, 1.0, innov_power)
        gain = cov_taps / safe_power[:, None]
        gain[dead] = 0.0
        return np.conj(innovation), innovation, gain, cov_taps

    def correct(self, w_prior, cov_prior, gain, innovation, cov_taps,
                update_mask=None):
        """Posterior update; bins outside ``update_mask`` keep their state."""
        w_post = w_prior + gain * innovation[:, None]
        cov_post = cov_prior - gain[:, :, None] * cov_taps[:, None, :].conj()
        cov_post = 0.5 * (cov_post + np.conj(np.swapaxes(cov_post, 1, 2)))
        idx = np.arange(self.state_dim)
        diag = np.real(cov_post[:, idx, idx])
        cov_post[:, idx, idx] = np.maximum(diag, 0.0)
        if update_mask is None:
            self.weights = w_post
            self.err_cov = cov_post
        else:
            self.weights[update_mask] = w_post[update_mask]
            self.err_cov[update_mask] = cov_post[update_mask]

    def step(self, taps, beamformed, target_psd):
        """One predict/innovate/correct cycle for a whole frame.

        Equivalent to predict() / innovate() / correct() but never
        materializes the prior covariance: both rank-1 covariance updates are
        Hermitian by construction (the gain is the covariance/taps product
        under a real scale), so they fuse into a single batched product
        accumulated onto the state. This keeps the per-frame cost at one
        read-modify-write pass over the covariance bank.

        Args:
            taps: (bins, state_dim) stacked delayed observations.
            beamformed: (bins,) beamformer output for this frame.
            target_psd: (bins,) target-signal PSD acting as measurement noise.

        Returns:
            (enhanced, info): enhanced (bins,) output samples and diagnostics.
            Bins with non-finite input are skipped: their state is held and
            the beamformed sample passes through (zero if itself non-finite).
        """
        valid = (np.all(np.isfinite(taps.real), axis=1)
                 & np.all(np.isfinite(taps.imag), axis=1)
                 & np.isfinite(beamformed.real) & np.isfinite(beamformed.imag)
                 & np.isfinite(target_psd))
        any_invalid = not np.all(valid)
        if any_invalid:
            self.skipped_frames += int(np.count_nonzero(~valid))
            taps = np.where(valid[:, None], taps, 0.0)
            beamformed = np.where(valid, beamformed, 0.0)
            target_psd = np.where(valid, target_psd, 0.0)
            held_weights = self.weights[~valid]
            held_cov = self.err_cov[~valid]

        a = self.transition
        w_prior = a * self.weights
        stationary = self.process_noise_var is None
        if not stationary:
            self.err_cov *= a * a
            idx = np.arange(self.state_dim)
            self.err_cov[:, idx, idx] += self.process_noise_var

        np.maximum(self.obs_power_runmax, np.abs(beamformed) ** 2,
                   out=self.obs_power_runmax)
        floor = self.innovation_floor_factor * self.obs_power_runmax

        # cov_taps = cov_prior @ t without forming cov_prior:
        # (P + c w w^H) t = P t + c w (w^H t)
        cov_taps = np.matmul(self.err_cov, taps[:, :, None])[:, :, 0]
        if stationary:
            c = 1.0 - a * a
            w_h_t = np.einsum("ki,ki->k", self.weights.conj(), taps)
            cov_taps += (c * w_h_t)[:, None] * self.weights
        taps_cov_taps = np.real(np.einsum("ki,ki->k", taps.conj(), cov_taps))
        innov_power = np.maximum(taps_cov_taps + target_psd, floor)

        innovation = np.conj(beamformed) - np.einsum("ki,ki->k",
                                                     taps.conj(), w_prior)
        dead = innov_power <= 0.0
        inv_power = np.where(dead, 0.0, 1.0 / np.where(dead, 1.0, innov_power))
        gain = cov_taps * inv_power[:, None]

        # posterior: P + c w w^H - (1/phi_s) u u^H as one batched product
        if stationary:
            left = np.empty((self.num_bins, self.state_dim, 2),
                            dtype=np.complex128)
            left[:, :, 0] = c * self.weights
            left[:, :, 1] = -gain
            right = np.empty((self.num_bins, 2, self.state_dim),
                             dtype=np.complex128)
            right[:, 0, :] = self.weights.conj()
            right[:, 1, :] = cov_taps.conj()
            np.matmul(left, right, out=self._scratch)
            self.err_cov += self._scratch
        else:
            self.err_cov -= gain[:, :, None] * cov_taps[:, None, :].conj()
        idx = np.arange(self.state_dim)
        diag = np.real(self.err_cov[:, idx, idx])
        self.err_cov[:, idx, idx] = np.maximum(diag, 0.0)
        self.weights = w_prior + gain * innovation[:, None]

        if any_invalid:
            self.weights[~valid] = held_weights
            self.err_cov[~valid] = held_cov

        info = KalmanStepInfo(
            predicted_reverb=np.einsum("ki,ki->k", w_prior.conj(), taps),
            gain_norm=np.linalg.norm(gain, axis=1),
            skipped=~valid,
            weights_prior=w_prior,
        )
        return np.conj(innovation), info
