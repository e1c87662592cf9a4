"""Per-frequency spatial covariance tracking.

Maintains two estimators over the stream of spectral frames:

* a recursively smoothed estimate (activation feature path), and
* a sliding-window moving average (deactivation feature path),

plus ring-buffer delay lines so that either estimate from
``reference_delay`` frames in the past can serve as a whitening reference.
State size is fixed by (n_bins, n_channels, window_len, reference_delay)
and does not grow with stream length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .stft import SpectralFrame

# Recompute the sliding-window sum from its ring this often, bounding
# float drift of the running subtract/add update.
_REFRESH_INTERVAL = 1024


@dataclass(frozen=True)
class CovTrackerConfig:
    """Estimator parameters.

    t_alpha is the recursive smoothing time constant in seconds; the
    forgetting factor is alpha = exp(-frame_period / t_alpha).
    window_len (L) is the sliding-window length in frames and must stay
    below reference_delay (t_v) so the deactivation operands never overlap.
    diag_load is the relative diagonal loading applied before whitening.
    """

    t_alpha: float = 0.5
    window_len: int = 14
    reference_delay: int = 20
    diag_load: float = 1e-6
    frame_period: float = 0.025

    def __post_init__(self):
        if self.t_alpha <= 0:
            raise ValueError("t_alpha must be positive")
        if self.window_len < 1:
            raise ValueError("window_len must be >= 1")
        if self.reference_delay < 0:
            raise ValueError("reference_delay must be >= 0")
        if self.reference_delay >= 1 and self.window_len >= self.reference_delay:
            raise ValueError("window_len must be smaller than reference_delay")
        if self.diag_load < 0:
            raise ValueError("diag_load must be >= 0")
        if self.frame_period <= 0:
            raise ValueError("frame_period must be positive")

    @property
    def alpha(self) -> float:
        return math.exp(-self.frame_period / self.t_alpha)


class CovarianceTracker:
    """Streaming covariance state for one (n_bins, n_channels) frame stream."""

    def __init__(self, n_bins: int, n_channels: int, config: CovTrackerConfig = CovTrackerConfig()):
        if n_channels < 2:
            raise ValueError("need at least 2 channels")
        self.config = config
        self.n_bins = n_bins
        self.n_channels = n_channels
        f, m = n_bins, n_channels
        depth = config.reference_delay + 1
        self.recursive = np.zeros((f, m, m), dtype=np.complex128)
        self.sliding = np.zeros((f, m, m), dtype=np.complex128)
        self._outer_ring = np.zeros((config.window_len, f, m, m), dtype=np.complex128)
        self._outer_sum = np.zeros((f, m, m), dtype=np.complex128)
        self._hist_recursive = np.zeros((depth, f, m, m), dtype=np.complex128)
        self._hist_sliding = np.zeros((depth, f, m, m), dtype=np.complex128)
        self.frames_seen = 0
        self._last_index = None
        self._eye = np.eye(m)[None]

    def update(self, frame: SpectralFrame) -> None:
        """Fold one frame into both estimators and push the delay lines."""
        if frame.bins.shape != (self.n_bins, self.n_channels):
            raise ValueError(
                f"frame shape {frame.bins.shape} does not match tracker "
                f"({self.n_bins}, {self.n_channels})"
            )
        if self._last_index is not None and frame.t <= self._last_index:
            raise ValueError(
                f"out-of-order frame index {frame.t} (last was {self._last_index})"
            )
        self._last_index = frame.t
        cfg = self.config
        y = frame.bins
        outer = np.einsum("fm,fn->fmn", y, y.conj())

        if self.frames_seen == 0:
            # Positive-definite start: a tiny multiple of identity scaled to
            # the incoming power, floored so all-zero input stays factorable.
            delta = np.maximum(
                1e-6 * np.einsum("fmm->f", outer).real / self.n_channels, 1e-12
            )
            self.recursive = delta[:, None, None] * self._eye + 0j

        a = cfg.alpha
        self.recursive = a * self.recursive + (1.0 - a) * outer
        self.recursive = 0.5 * (
            self.recursive + self.recursive.conj().transpose(0, 2, 1)
        )

        slot = self.frames_seen % cfg.window_len
        self._outer_sum += outer - self._outer_ring[slot]
        self._outer_ring[slot] = outer
        if (self.frames_seen + 1) % _REFRESH_INTERVAL == 0:
            self._outer_sum = self._outer_ring.sum(axis=0)
        n_avail = min(self.frames_seen + 1, cfg.window_len)
        self.sliding = self._outer_sum / n_avail
        self.sliding = 0.5 * (self.sliding + self.sliding.conj().transpose(0, 2, 1))

        depth = cfg.reference_delay + 1
        hslot = self.frames_seen % depth
        self._hist_recursive[hslot] = self.recursive
        self._hist_sliding[hslot] = self.sliding
        self.frames_seen += 1

    def _past_slot(self) -> int:
        # During warm-up clamp to the oldest stored estimate (frame 0 until
        # the ring fills).
        past = max(0, (self.frames_seen - 1) - self.config.reference_delay)
        return past % (self.config.reference_delay + 1)

    def reference_recursive(self) -> np.ndarray:
        """Recursive estimate from reference_delay frames ago, (F, M, M)."""
        if self.frames_seen < 1:
            raise ValueError("no frames seen yet")
        return self._hist_recursive[self._past_slot()]

    def pair_deactivation(self):
        """(current, past) sliding-window estimates for the deactivation path."""
        if self.frames_seen < 1:
            raise ValueError("no frames seen yet")
        return self.sliding, self._hist_sliding[self._past_slot()]

    @property
    def state_nbytes(self) -> int:
        return (
            self.recursive.nbytes
            + self.sliding.nbytes
            + self._outer_ring.nbytes
            + self._outer_sum.nbytes
            + self._hist_recursive.nbytes
            + self._hist_sliding.nbytes
        )
