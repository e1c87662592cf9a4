"""Multichannel WAV ingestion and output.

Supports uncompressed 16-bit integer PCM and 32-bit IEEE float files; every
channel in the file is treated as a microphone, in file order. There is no
resampling: a sample-rate mismatch with the expected rate is an error.
"""

from __future__ import annotations

import numpy as np
from scipy.io import wavfile

from .errors import DataFormatError


def read_wav(path, expected_rate: int | None = None):
    """Read a WAV file, returning (rate, samples) with samples (M, N) float64.

    16-bit PCM is scaled to [-1, 1); 32-bit float is passed through.
    """
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise DataFormatError(f"{path}: not a readable WAV file ({exc})") from exc
    if expected_rate is not None and rate != expected_rate:
        raise DataFormatError(
            f"{path}: sample rate {rate} Hz does not match configured "
            f"{expected_rate} Hz (resampling is not supported)"
        )
    if data.ndim == 1:
        data = data[:, None]
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise DataFormatError(
            f"{path}: unsupported sample format {data.dtype} "
            "(need 16-bit PCM or 32-bit float)"
        )
    return rate, x.T


def write_wav(path, rate: int, samples) -> None:
    """Write an (M, N) float array as a 32-bit float WAV file."""
    x = np.asarray(samples, dtype=np.float32)
    if x.ndim != 2:
        raise ValueError("samples must be (channels, samples)")
    wavfile.write(path, rate, x.T.copy())
