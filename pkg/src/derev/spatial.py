"""Per-bin spatial quantities: steering vector, coherence matrices, blocking matrix."""

from dataclasses import dataclass, field

import numpy as np

from .stft import StftConfig


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone positions in meters, one row per mic."""

    mic_positions: np.ndarray
    reference_index: int = 0
    speed_of_sound: float = 343.0

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.mic_positions, dtype=np.float64))
        if pos.shape[1] != 3:
            raise ValueError("mic positions must be (M, 3)")
        if pos.shape[0] < 2:
            raise ValueError("need at least 2 microphones")
        diffs = pos[:, None, :] - pos[None, :, :]
        dist = np.linalg.norm(diffs, axis=-1)
        if np.any(dist[~np.eye(pos.shape[0], dtype=bool)] == 0.0):
            raise ValueError("microphone positions must be distinct")
        if not 0 <= self.reference_index < pos.shape[0]:
            raise ValueError("reference_index out of range")
        if self.speed_of_sound <= 0:
            raise ValueError("speed_of_sound must be positive")
        object.__setattr__(self, "mic_positions", pos)

    @property
    def num_mics(self) -> int:
        return self.mic_positions.shape[0]

    def pairwise_distances(self) -> np.ndarray:
        diffs = self.mic_positions[:, None, :] - self.mic_positions[None, :, :]
        return np.linalg.norm(diffs, axis=-1)


def uniform_linear_array(num_mics: int = 8, spacing: float = 0.04,
                         reference_index: int = 0) -> ArrayGeometry:
    """Linear array along the x axis, first mic at the origin."""
    pos = np.zeros((num_mics, 3))
    pos[:, 0] = np.arange(num_mics) * spacing
    return ArrayGeometry(mic_positions=pos, reference_index=reference_index)


def direction_unit_vector(azimuth: float, elevation: float = 0.0) -> np.ndarray:
    """Unit vector pointing from the array toward the source.

    Azimuth is measured in the x-y plane from the +x axis, elevation from
    that plane; broadside of an x-axis linear array is azimuth pi/2.
    """
    ce = np.cos(elevation)
    return np.array([ce * np.cos(azimuth), ce * np.sin(azimuth), np.sin(elevation)])


def propagation_delays(geom: ArrayGeometry, azimuth: float,
                       elevation: float = 0.0) -> np.ndarray:
    """Far-field arrival delay of each mic relative to the reference, seconds.

    Positive values mean the mic hears the wavefront later than the
    reference mic.
    """
    u = direction_unit_vector(azimuth, elevation)
    proj = geom.mic_positions @ u
    return (proj[geom.reference_index] - proj) / geom.speed_of_sound


def steering_vector(geom: ArrayGeometry, azimuth: float, elevation: float,
                    freq_hz: float) -> np.ndarray:
    """Plane-wave phase model across the array at one frequency.

    The reference entry is exactly 1; every other entry is
    exp(-j*2*pi*f*tau_m) for the relative delay tau_m.
    """
    tau = propagation_delays(geom, azimuth, elevation)
    d = np.exp(-2j * np.pi * freq_hz * tau)
    d[geom.reference_index] = 1.0
    return d


def diffuse_coherence(geom: ArrayGeometry, freq_hz: float) -> np.ndarray:
    """Spatial coherence of an isotropic diffuse field: sinc over mic spacing."""
    dist = geom.pairwise_distances()
    # np.sinc(x) = sin(pi x)/(pi x), so the argument is 2 f d / c
    return np.sinc(2.0 * freq_hz * dist / geom.speed_of_sound).astype(np.complex128)


def blocking_matrix(d: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of ``d``.

    Built from the Householder reflection that maps ``d`` onto the first
    coordinate axis; the remaining reflected basis vectors span the
    complement exactly, so ``B^H d = 0`` and ``B^H B = I`` to machine
    precision.
    """
    d = np.asarray(d, dtype=np.complex128)
    m = d.shape[0]
    norm = np.linalg.norm(d)
    if norm == 0.0:
        raise ValueError("cannot block a zero vector")
    phase = d[0] / abs(d[0]) if abs(d[0]) > 0 else 1.0
    v = d.copy()
    v[0] += phase * norm
    h = np.eye(m, dtype=np.complex128)
    h -= (2.0 / np.real(np.vdot(v, v))) * np.outer(v, v.conj())
    return h[:, 1:]


@dataclass
class BinSpatialModel:
    """Precomputed spatial quantities for one frequency bin.

    Immutable after construction; shared freely across bin workers.
    """

    freq_hz: float
    d: np.ndarray            # steering vector, (M,)
    gamma: np.ndarray        # diffuse coherence, (M, M)
    psi: np.ndarray          # noise coherence, identity for uncorrelated noise
    blocking: np.ndarray     # (M, M-1), annihilates d
    gamma_blocked: np.ndarray = field(init=False)  # B^H gamma B
    psi_blocked: np.ndarray = field(init=False)    # B^H psi B

    def __post_init__(self):
        bh = self.blocking.conj().T
        self.gamma_blocked = bh @ self.gamma @ self.blocking
        self.psi_blocked = bh @ self.psi @ self.blocking

    @property
    def num_mics(self) -> int:
        return self.d.shape[0]


def build_bin_models(geom: ArrayGeometry, azimuth: float, elevation: float,
                     cfg: StftConfig) -> list[BinSpatialModel]:
    """One spatial model per one-sided bin at f_k = k * fs / fft_len."""
    psi = np.eye(geom.num_mics, dtype=np.complex128)
    models = []
    for f in cfg.bin_frequencies():
        d = steering_vector(geom, azimuth, elevation, f)
        models.append(BinSpatialModel(
            freq_hz=float(f),
            d=d,
            gamma=diffuse_coherence(geom, f),
            psi=psi,
            blocking=blocking_matrix(d),
        ))
    return models
