"""Framewise scoring and threshold grid search."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .detector import DetectorConfig, count_trajectory


def _check_pair(est, truth):
    e = np.asarray(est)
    t = np.asarray(truth)
    if e.shape != t.shape or e.ndim != 1:
        raise ValueError(f"length mismatch: {e.shape} vs {t.shape}")
    if e.size == 0:
        raise ValueError("empty sequences")
    return e, t


def accuracy(est, truth) -> float:
    """Percentage of frames with an exactly correct count."""
    e, t = _check_pair(est, truth)
    return 100.0 * float((e == t).sum()) / e.size


def mae(est, truth) -> float:
    """Mean absolute count error per frame."""
    e, t = _check_pair(est, truth)
    return float(np.abs(e - t).mean())


@dataclass
class EvalReport:
    accuracy_pct: float
    mae: float
    per_scene: list      # (scene_id, accuracy_pct, mae, n_frames)
    frames_total: int

    def render(self) -> str:
        lines = [
            f"{'scene':<28} {'frames':>7} {'acc %':>8} {'mae':>8}",
        ]
        for sid, acc, err, n in self.per_scene:
            lines.append(f"{sid:<28} {n:>7} {acc:>8.2f} {err:>8.4f}")
        lines.append(
            f"{'TOTAL':<28} {self.frames_total:>7} "
            f"{self.accuracy_pct:>8.2f} {self.mae:>8.4f}"
        )
        return "\n".join(lines)

    def records(self) -> list:
        """Machine-readable one-line-per-scene records."""
        return [
            f"{sid} frames={n} accuracy={acc:.4f} mae={err:.6f}"
            for sid, acc, err, n in self.per_scene
        ]


def evaluate_scenes(pairs) -> EvalReport:
    """Pooled + per-scene scores for [(scene_id, est, truth), ...]."""
    if not pairs:
        raise ValueError("no scenes to evaluate")
    per_scene = []
    matches = 0
    abs_err = 0
    total = 0
    for sid, est, truth in pairs:
        e, t = _check_pair(est, truth)
        per_scene.append((sid, accuracy(e, t), mae(e, t), e.size))
        matches += int((e == t).sum())
        abs_err += int(np.abs(e - t).sum())
        total += e.size
    return EvalReport(
        accuracy_pct=100.0 * matches / total,
        mae=abs_err / total,
        per_scene=per_scene,
        frames_total=total,
    )


def grid_search_thresholds(scenes, grid_act, grid_deact,
                           config: DetectorConfig = DetectorConfig()):
    """Exhaustive threshold search on precomputed smoothed broadband curves.

    scenes: [(gbar_act, gbar_deact, truth_counts), ...]. Returns
    (thr_act, thr_deact, best_accuracy_pct); ties go to the smaller
    thresholds (activation first).
    """
    if not scenes:
        raise ValueError("empty scene set")
    ga = sorted(float(v) for v in grid_act)
    gd = sorted(float(v) for v in grid_deact)
    if not ga or not gd:
        raise ValueError("empty threshold grid")
    best = (None, None, -1.0)
    for thr_a in ga:
        for thr_d in gd:
            cfg = replace(config, thr_act=thr_a, thr_deact=thr_d)
            matches = 0
            total = 0
            for gbar_a, gbar_d, truth in scenes:
                est = count_trajectory(gbar_a, gbar_d, cfg)
                matches += int((est == np.asarray(truth)).sum())
                total += len(truth)
            acc = 100.0 * matches / total
            if acc > best[2]:
                best = (thr_a, thr_d, acc)
    return best
