"""Threshold-based source counting from broadband coherence features.

Per frame, each feature vector is condensed to a single broadband scalar
(weighted by the whitened-signal power per bin), recursively smoothed, and
compared against fixed thresholds. A crossing of the activation threshold
increments the running count, a crossing of the deactivation threshold
decrements it; every detection starts a refractory period during which
further events are suppressed. Detections are also gated during an initial
warm-up while the covariance estimators converge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .features import GmscFeatures


def default_warmup_frames(
    reference_delay: int = 20,
    window_len: int = 14,
    t_alpha: float = 0.5,
    frame_period: float = 0.025,
) -> int:
    """Frames until the estimators are trustworthy.

    The delay line and sliding window must fill (reference_delay +
    window_len) and the recursive estimate needs a few time constants to
    converge; before that the whitening reference is so noisy that the
    smoothed broadband feature sits well above any useful threshold.
    """
    return reference_delay + window_len + math.ceil(5.0 * t_alpha / frame_period)


@dataclass(frozen=True)
class DetectorConfig:
    """Thresholds and event handling.

    refractory covers the full width of one event's feature bump: after an
    activation the whitening reference needs t_v frames plus several
    recursive time constants to absorb the new source, so the smoothed
    broadband feature stays above threshold for roughly 80-130 frames. A
    shorter refractory turns every real event into several increments.
    """

    t_gamma: float = 0.5
    thr_act: float = 0.24
    thr_deact: float = 0.62
    refractory: int = 140
    k_max: int = 4
    enable_deactivation: bool = True
    warmup_frames: int = 134   # default_warmup_frames() at default tracker params
    frame_period: float = 0.025

    def __post_init__(self):
        if not 0 < self.thr_act < 1:
            raise ValueError("thr_act must be in (0, 1)")
        if not 0 < self.thr_deact < 1:
            raise ValueError("thr_deact must be in (0, 1)")
        if self.refractory < 0:
            raise ValueError("refractory must be >= 0")
        if self.t_gamma <= 0:
            raise ValueError("t_gamma must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.warmup_frames < 0:
            raise ValueError("warmup_frames must be >= 0")

    @property
    def beta(self) -> float:
        return math.exp(-self.frame_period / self.t_gamma)


def broadband(gamma_vec, traces) -> float:
    """Power-weighted average of per-bin values; 0 when all weights vanish."""
    g = np.asarray(gamma_vec, dtype=np.float64)
    w = np.asarray(traces, dtype=np.float64)
    if g.shape != w.shape:
        raise ValueError(f"length mismatch: {g.shape} vs {w.shape}")
    total = w.sum()
    if total <= 0.0:
        return 0.0
    return float((w * g).sum() / total)


def _transition(count, refractory_left, gbar_a, gbar_d, frame_idx, cfg):
    """One detection step; returns (count, refractory_left)."""
    if frame_idx < cfg.warmup_frames:
        return count, refractory_left
    if refractory_left > 0:
        return count, refractory_left - 1
    if gbar_a > cfg.thr_act:
        return min(count + 1, cfg.k_max), cfg.refractory
    if cfg.enable_deactivation and gbar_d > cfg.thr_deact:
        return max(count - 1, 0), cfg.refractory
    return count, refractory_left


class ThresholdDetector:
    """Streaming detector state for one feature stream."""

    def __init__(self, config: DetectorConfig = DetectorConfig()):
        self.config = config
        self.gamma_bar_act = 0.0
        self.gamma_bar_deact = 0.0
        self.count = 0
        self.refractory_remaining = 0
        self.frames_seen = 0

    def step(self, features: GmscFeatures) -> int:
        """Fold in one frame's features, returning the updated count."""
        tilde_a = broadband(features.activation, features.act_traces)
        tilde_d = broadband(features.deactivation, features.deact_traces)
        return self.step_broadband(tilde_a, tilde_d)

    def step_broadband(self, tilde_a: float, tilde_d: float) -> int:
        """Variant taking precomputed (unsmoothed) broadband scalars."""
        b = self.config.beta
        self.gamma_bar_act = b * self.gamma_bar_act + (1.0 - b) * tilde_a
        self.gamma_bar_deact = b * self.gamma_bar_deact + (1.0 - b) * tilde_d
        self.count, self.refractory_remaining = _transition(
            self.count,
            self.refractory_remaining,
            self.gamma_bar_act,
            self.gamma_bar_deact,
            self.frames_seen,
            self.config,
        )
        self.frames_seen += 1
        return self.count


def smooth_curve(tilde, t_gamma: float, frame_period: float) -> np.ndarray:
    """Recursive smoothing of a broadband scalar sequence (init 0)."""
    beta = math.exp(-frame_period / t_gamma)
    out = np.empty(len(tilde))
    acc = 0.0
    for t, v in enumerate(tilde):
        acc = beta * acc + (1.0 - beta) * v
        out[t] = acc
    return out


def count_trajectory(gbar_a, gbar_d, cfg: DetectorConfig) -> np.ndarray:
    """Replay the detection state machine over smoothed curves."""
    n = len(gbar_a)
    if len(gbar_d) != n:
        raise ValueError("curve length mismatch")
    counts = np.empty(n, dtype=np.int64)
    count, refractory = 0, 0
    for t in range(n):
        count, refractory = _transition(
            count, refractory, gbar_a[t], gbar_d[t], t, cfg
        )
        counts[t] = count
    return counts
