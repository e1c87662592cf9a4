"""Streaming pipeline wiring: audio -> frames -> covariance -> features.

Single forward pass per scene; state is one covariance tracker plus O(1)
per-frame buffers, so peak memory does not grow with scene duration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .covariance import CovarianceTracker, CovTrackerConfig
from .detector import DetectorConfig, ThresholdDetector, default_warmup_frames
from .features import GmscFeatures, extract
from .stft import StftConfig, analyze
from .scene import SceneConfig


@dataclass(frozen=True)
class RunConfig:
    """Cross-wired configuration for one processing run.

    The tracker and detector carry the frame period implied by the STFT
    settings, and the detector warm-up tracks the tracker constants unless
    explicitly overridden.
    """

    stft: StftConfig = StftConfig()
    tracker: CovTrackerConfig = CovTrackerConfig()
    detector: DetectorConfig = DetectorConfig()
    scene: SceneConfig = SceneConfig()

    @staticmethod
    def wired(stft: StftConfig = None, tracker: CovTrackerConfig = None,
              detector: DetectorConfig = None, scene: SceneConfig = None,
              warmup_override: int = None) -> "RunConfig":
        from dataclasses import replace

        stft = stft or StftConfig()
        tracker = tracker or CovTrackerConfig()
        detector = detector or DetectorConfig()
        scene = scene or SceneConfig()
        tracker = replace(tracker, frame_period=stft.frame_period)
        warmup = warmup_override if warmup_override is not None else \
            default_warmup_frames(tracker.reference_delay, tracker.window_len,
                                  tracker.t_alpha, tracker.frame_period)
        detector = replace(detector, frame_period=stft.frame_period,
                           warmup_frames=warmup)
        scene = replace(scene, sample_rate=stft.sample_rate)
        return RunConfig(stft=stft, tracker=tracker, detector=detector, scene=scene)


def iter_features(samples, stft_cfg: StftConfig,
                  tracker_cfg: CovTrackerConfig) -> Iterator[GmscFeatures]:
    """Per-frame features for an (M, N) signal, in frame order."""
    n_channels = np.asarray(samples).shape[0]
    tracker = CovarianceTracker(stft_cfg.n_bins, n_channels, tracker_cfg)
    for frame in analyze(samples, stft_cfg):
        tracker.update(frame)
        yield extract(tracker)


def detect_stream(samples, config: RunConfig):
    """Run the threshold detector over a signal.

    Returns (counts, gbar_act, gbar_deact) arrays, one entry per frame.
    """
    det = ThresholdDetector(config.detector)
    counts, bars_a, bars_d = [], [], []
    for feats in iter_features(samples, config.stft, config.tracker):
        counts.append(det.step(feats))
        bars_a.append(det.gamma_bar_act)
        bars_d.append(det.gamma_bar_deact)
    return (np.asarray(counts, dtype=np.int64),
            np.asarray(bars_a), np.asarray(bars_d))


def feature_matrix(samples, config: RunConfig, activation_only: bool = False):
    """Stacked per-frame feature rows (T, F) or (T, 2F), float32."""
    rows = []
    for feats in iter_features(samples, config.stft, config.tracker):
        vec = feats.activation if activation_only else feats.combined
        rows.append(vec.astype(np.float32))
    return np.asarray(rows, dtype=np.float32)
