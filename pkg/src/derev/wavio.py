"""WAV reading/writing for multichannel float pipelines."""

import numpy as np
import scipy.io.wavfile


def read_wav(path) -> tuple[int, np.ndarray]:
    """Load a PCM16 or float32 WAV as float64, shaped (channels, samples)."""
    rate, data = scipy.io.wavfile.read(path)
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        x = data.astype(np.float64)
    else:
        raise ValueError(f"unsupported WAV sample format {data.dtype} in {path}")
    if x.ndim == 1:
        x = x[:, np.newaxis]
    return rate, x.T.copy()


def write_wav(path, sample_rate: int, data) -> None:
    """Write (channels, samples) or (samples,) as interleaved float32."""
    x = np.asarray(data, dtype=np.float64)
    if x.ndim == 1:
        out = x.astype(np.float32)
    else:
        out = x.T.astype(np.float32)
    scipy.io.wavfile.write(path, sample_rate, out)
