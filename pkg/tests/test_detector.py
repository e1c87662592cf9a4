import math

import numpy as np
import pytest

from sourcecount.detector import (
    DetectorConfig,
    ThresholdDetector,
    broadband,
    count_trajectory,
    default_warmup_frames,
    smooth_curve,
)
from sourcecount.features import GmscFeatures

from oracles import weighted_average_loop


def feats(act, deact, act_tr=None, deact_tr=None):
    act = np.asarray(act, dtype=float)
    deact = np.asarray(deact, dtype=float)
    return GmscFeatures(
        activation=act,
        deactivation=deact,
        act_traces=np.ones_like(act) if act_tr is None else np.asarray(act_tr, float),
        deact_traces=np.ones_like(deact) if deact_tr is None else np.asarray(deact_tr, float),
    )


def test_beta_value():
    cfg = DetectorConfig(t_gamma=0.5, frame_period=0.025)
    assert abs(cfg.beta - math.exp(-0.05)) < 1e-15
    assert round(cfg.beta, 6) == 0.951229


def test_config_validation():
    for kwargs in (dict(thr_act=0.0), dict(thr_act=1.0), dict(thr_deact=1.5),
                   dict(refractory=-1), dict(t_gamma=0.0), dict(k_max=0),
                   dict(warmup_frames=-1)):
        with pytest.raises(ValueError):
            DetectorConfig(**kwargs)


def test_default_warmup():
    assert default_warmup_frames() == 134
    assert DetectorConfig().warmup_frames == 134


def test_broadband_uniform_weights_is_mean(rng):
    g = rng.random(16)
    assert abs(broadband(g, np.ones(16)) - g.mean()) < 1e-12


def test_broadband_one_hot(rng):
    g = rng.random(16)
    w = np.zeros(16)
    w[5] = 3.0
    assert abs(broadband(g, w) - g[5]) < 1e-12


def test_broadband_matches_dot_oracle(rng):
    for _ in range(30):
        g = rng.random(32)
        w = rng.random(32)
        assert abs(broadband(g, w) - weighted_average_loop(g, w)) < 1e-12


def test_broadband_degenerate_and_errors(rng):
    assert broadband(rng.random(8), np.zeros(8)) == 0.0
    with pytest.raises(ValueError, match="mismatch"):
        broadband(np.ones(4), np.ones(5))


def test_zero_features_keep_count_zero():
    det = ThresholdDetector(DetectorConfig(warmup_frames=0))
    for _ in range(300):
        assert det.step(feats(np.zeros(8), np.zeros(8))) == 0


def test_single_crossing_single_increment():
    # curve above threshold for 11 consecutive frames, refractory 20:
    # exactly one increment
    cfg = DetectorConfig(warmup_frames=0, refractory=20)
    gbar_a = np.full(60, 0.1)
    gbar_a[10:21] = 0.3
    counts = count_trajectory(gbar_a, np.zeros(60), cfg)
    assert counts[9] == 0
    assert counts[10] == 1
    assert counts[-1] == 1


def test_refractory_suppresses_exactly_refractory_frames():
    cfg = DetectorConfig(warmup_frames=0, refractory=5, k_max=4)
    gbar_a = np.full(20, 0.9)  # permanently above threshold
    counts = count_trajectory(gbar_a, np.zeros(20), cfg)
    # detections at frames 0, 6, 12, 18 (5 suppressed frames in between)
    assert list(counts[:19]) == [1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 3, 3, 3, 3, 3, 3, 4]


def test_count_bounds_and_unit_steps(rng):
    cfg = DetectorConfig(warmup_frames=0, refractory=2)
    gbar_a = rng.random(500) * 0.6
    gbar_d = rng.random(500)
    counts = count_trajectory(gbar_a, gbar_d, cfg)
    assert counts.min() >= 0 and counts.max() <= cfg.k_max
    assert set(np.unique(np.diff(counts))).issubset({-1, 0, 1})


def test_monotone_without_deactivation(rng):
    cfg = DetectorConfig(warmup_frames=0, enable_deactivation=False)
    counts = count_trajectory(rng.random(400), rng.random(400), cfg)
    assert np.all(np.diff(counts) >= 0)


def test_activation_priority_same_frame():
    cfg = DetectorConfig(warmup_frames=0, refractory=10)
    gbar = np.full(5, 0.95)  # above both thresholds
    counts = count_trajectory(gbar, gbar, cfg)
    assert counts[0] == 1  # increment, not decrement


def test_warmup_gates_detections():
    cfg = DetectorConfig(warmup_frames=50, refractory=0)
    gbar_a = np.full(80, 0.9)
    counts = count_trajectory(gbar_a, np.zeros(80), cfg)
    assert np.all(counts[:50] == 0)
    assert counts[50] == 1


def test_detector_equals_trajectory_replay(rng):
    # streaming detector (internal smoothing) against smooth_curve +
    # count_trajectory
    cfg = DetectorConfig(warmup_frames=30, refractory=7)
    tilde_a = rng.random(300) * 0.5
    tilde_d = rng.random(300)
    det = ThresholdDetector(cfg)
    stream_counts = [det.step_broadband(a, d) for a, d in zip(tilde_a, tilde_d)]
    gbar_a = smooth_curve(tilde_a, cfg.t_gamma, cfg.frame_period)
    gbar_d = smooth_curve(tilde_d, cfg.t_gamma, cfg.frame_period)
    replay = count_trajectory(gbar_a, gbar_d, cfg)
    assert np.array_equal(np.asarray(stream_counts), replay)


def test_determinism(rng):
    cfg = DetectorConfig(warmup_frames=10)
    rows = rng.random((100, 8)) * 0.8
    c1 = [ThresholdDetector(cfg).step(feats(r, r * 0.5)) for r in rows]
    c2 = [ThresholdDetector(cfg).step(feats(r, r * 0.5)) for r in rows]
    det1, det2 = ThresholdDetector(cfg), ThresholdDetector(cfg)
    t1 = [det1.step(feats(r, r * 0.5)) for r in rows]
    t2 = [det2.step(feats(r, r * 0.5)) for r in rows]
    assert t1 == t2


def test_smoothed_scalars_bounded(rng):
    det = ThresholdDetector(DetectorConfig(warmup_frames=0))
    for _ in range(200):
        det.step(feats(rng.random(8), rng.random(8)))
        assert 0.0 <= det.gamma_bar_act <= 1.0
        assert 0.0 <= det.gamma_bar_deact <= 1.0


def test_two_event_scenes_monte_carlo():
    # Dataset-A-style scenes (activations only, SNR 10 dB, 2 events): both
    # true activations are detected within 1 s, in order, with no spurious
    # increment before the second event, in >= 80% of 100 seeded scenes.
    # Events are placed U(3.5, 5) s apart so they clear the estimator
    # warm-up and the refractory window. "Final count stays exactly 2" is
    # not asserted: with two nonstationary sources active, the smoothed
    # broadband activation null sits at ~0.25, above the paper threshold
    # 0.24, so late retriggers are inherent at these constants; see the
    # decisions notes.
    from sourcecount.pipeline import RunConfig, detect_stream
    from sourcecount.scene import (
        _activity_gate,
        _source_gains_delays,
        render_component,
        source_dry_signal,
    )

    cfg = RunConfig.wired()
    shift, flen = cfg.stft.frame_shift, cfg.stft.frame_len
    sr = cfg.stft.sample_rate
    n_scenes = 100
    good = 0
    for seed in range(n_scenes):
        rng = np.random.default_rng(500_000 + seed)
        duration = 12.0
        n = int(duration * sr)
        positions = rng.uniform(-0.1, 0.1, (4, 3))
        events = []
        t = rng.uniform(3.5, 5.0)
        events.append(int(t * sr))
        events.append(int((t + rng.uniform(3.5, 5.0)) * sr))
        components = np.zeros((2, 4, n))
        for k, onset in enumerate(events):
            gains, delays = _source_gains_delays(rng, positions)
            dry = source_dry_signal(rng, n, sr)
            gated = dry * _activity_gate([(onset, n)], n, sr)
            components[k] = render_component(gated, gains, delays, sr)
        noise = rng.standard_normal((4, n))
        noise *= np.sqrt((components ** 2).sum()
                         / ((noise ** 2).sum() * 10.0))  # 10 dB
        samples = components.sum(axis=0) + noise
        counts, _, _ = detect_stream(samples, cfg)
        increments = np.nonzero(np.diff(counts) > 0)[0] + 1
        truth_frames = [(e - flen) // shift + 1 for e in events]
        if len(increments) >= 2 and all(
            abs(inc - tf) <= 40 for inc, tf in zip(increments[:2], truth_frames)
        ):
            good += 1
    assert good >= 0.80 * n_scenes, f"only {good}/{n_scenes} scenes counted cleanly"
