"""Causal multichannel STFT analysis.

Converts M-channel time-domain audio into a stream of complex one-sided
spectra. Analysis only: each emitted frame depends exclusively on samples
already seen, trailing partial frames are dropped, and there is no
synthesis path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np


@dataclass(frozen=True)
class StftConfig:
    """Analysis parameters.

    frame_shift must divide frame_len (the default is a 25% shift). The
    one-sided bin count is frame_len // 2 + 1 (401 at defaults).
    """

    sample_rate: int = 8000
    frame_len: int = 800
    frame_shift: int = 200

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.frame_len < 2:
            raise ValueError("frame_len must be >= 2")
        if self.frame_shift < 1:
            raise ValueError("frame_shift must be >= 1")
        if self.frame_len % self.frame_shift != 0:
            raise ValueError("frame_shift must divide frame_len")

    @property
    def n_bins(self) -> int:
        return self.frame_len // 2 + 1

    @property
    def frame_period(self) -> float:
        """Seconds between consecutive frames (t_fs)."""
        return self.frame_shift / self.sample_rate


@dataclass
class SpectralFrame:
    """One STFT frame: bins[f, m] is the spectrum of channel m at bin f."""

    t: int
    bins: np.ndarray  # (n_bins, n_channels) complex128

    @property
    def n_channels(self) -> int:
        return self.bins.shape[1]


def sqrt_hann_window(n: int) -> np.ndarray:
    """Periodic square-root Hann window of length n."""
    return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n))


def frame_count(n_samples: int, config: StftConfig) -> int:
    """Number of full frames emitted for a signal of n_samples."""
    if n_samples < config.frame_len:
        return 0
    return (n_samples - config.frame_len) // config.frame_shift + 1


def _as_channel_matrix(samples) -> np.ndarray:
    if isinstance(samples, (list, tuple)):
        lengths = {len(ch) for ch in samples}
        if len(lengths) > 1:
            raise ValueError(f"channel length mismatch: {sorted(lengths)}")
        samples = np.asarray(samples, dtype=np.float64)
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("samples must be a 2-D (channels, samples) array")
    return x


def analyze(samples, config: StftConfig = StftConfig()) -> Iterator[SpectralFrame]:
    """Yield SpectralFrames for an (M, N) multichannel signal.

    Frame t covers samples [t*frame_shift, t*frame_shift + frame_len); each
    channel is windowed with the square-root Hann window and transformed by
    an unnormalized one-sided DFT of length frame_len.
    """
    x = _as_channel_matrix(samples)
    n_ch, n_samples = x.shape
    if n_ch < 2:
        raise ValueError(f"need at least 2 channels, got {n_ch}")
    if n_samples < config.frame_len:
        raise ValueError(
            f"signal too short: {n_samples} samples < frame_len {config.frame_len}"
        )
    window = sqrt_hann_window(config.frame_len)
    for t in range(frame_count(n_samples, config)):
        start = t * config.frame_shift
        seg = x[:, start:start + config.frame_len] * window
        yield SpectralFrame(t=t, bins=np.fft.rfft(seg, axis=1).T)


def analyze_array(samples, config: StftConfig = StftConfig()) -> np.ndarray:
    """All frames at once, shape (T, n_bins, M). Convenience for offline use."""
    return np.stack([fr.bins for fr in analyze(samples, config)], axis=0)
