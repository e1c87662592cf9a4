"""Acceptance suite: one test per criterion, at the stated tolerances.

Each test prints one PASS/FAIL line (visible with ``pytest -s`` or in the
captured output) and enforces its runtime budget. The inference-path
criteria use hand-written random-weight SCW1 fixtures; no trained model is
required.
"""

import os
import subprocess
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

from sourcecount.covariance import CovarianceTracker, CovTrackerConfig
from sourcecount.features import gmsc, whiten
from sourcecount.inference import (
    ModelSpec,
    argmax_count,
    random_model,
    save_weights,
    softmax,
    tcn_forward,
)
from sourcecount.metrics import accuracy, mae
from sourcecount.pipeline import RunConfig, detect_stream
from sourcecount.scene import (
    SceneConfig,
    generate_scene,
    ground_truth_count,
    render_component,
    source_dry_signal,
    _activity_gate,
    _source_gains_delays,
)
from sourcecount.stft import SpectralFrame


@contextmanager
def criterion(number, description, budget_seconds):
    start = time.perf_counter()
    try:
        yield
    except Exception:
        print(f"ACCEPTANCE {number} FAIL - {description}")
        raise
    elapsed = time.perf_counter() - start
    print(f"ACCEPTANCE {number} PASS ({elapsed:.1f}s / budget {budget_seconds}s)"
          f" - {description}")
    assert elapsed < budget_seconds, (
        f"criterion {number} exceeded its runtime budget: "
        f"{elapsed:.1f}s >= {budget_seconds}s"
    )


def unit_modulus(rng, m):
    return np.exp(2j * np.pi * rng.uniform(size=m)) / np.sqrt(m)


# -- 1 -------------------------------------------------------------------

def test_criterion_1_gmsc_closed_forms():
    rng = np.random.default_rng(101)
    with criterion(1, "GMSC closed forms", 1.0):
        for m in (2, 3, 4, 5, 6):
            assert gmsc(np.eye(m)) == 0.0
            a = rng.standard_normal(m) + 1j * rng.standard_normal(m)
            a[np.abs(a) < 0.3] += 0.5
            assert abs(gmsc(np.outer(a, a.conj())) - 1.0) <= 1e-9
            phi = float(rng.uniform(0.5, 8.0))
            u = unit_modulus(rng, m)
            assert abs(gmsc(np.eye(m) + phi * np.outer(u, u.conj()))
                       - phi / (m + phi)) <= 1e-8
        # pinned instance M = 4, phi = 4 -> 0.5, against the dense oracle
        u = unit_modulus(rng, 4)
        mat = np.eye(4) + 4.0 * np.outer(u, u.conj())
        g = gmsc(mat)
        assert abs(g - 0.5) <= 1e-8
        d = np.real(np.diag(mat))
        lam = np.linalg.eigvalsh(mat / np.sqrt(np.outer(d, d)))[-1]
        assert abs(g - (lam - 1) / 3) <= 1e-8


# -- 2 -------------------------------------------------------------------

def test_criterion_2_whitening_identities():
    rng = np.random.default_rng(202)
    with criterion(2, "whitening identities and boundedness", 10.0):
        for m in (2, 4, 6):
            a = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
            r = a @ a.conj().T + 0.1 * np.eye(m)
            assert np.abs(whiten(r, r, 0.0).matrix - np.eye(m)).max() <= 1e-10
            sigma2, phi = 1.7, 6.0
            v = rng.standard_normal(m) + 1j * rng.standard_normal(m)
            num = sigma2 * np.eye(m) + phi * np.outer(v, v.conj())
            expect = np.eye(m) + (phi / sigma2) * np.outer(v, v.conj())
            got = whiten(num, sigma2 * np.eye(m), 0.0).matrix
            assert np.abs(got - expect).max() <= 1e-9 * np.abs(expect).max()
        for _ in range(10_000):
            m = int(rng.integers(2, 7))
            a = rng.standard_normal((m, 2 * m)) + 1j * rng.standard_normal((m, 2 * m))
            num = a @ a.conj().T / (2 * m)
            b = rng.standard_normal((m, 2 * m)) + 1j * rng.standard_normal((m, 2 * m))
            ref = b @ b.conj().T / (2 * m)
            g = gmsc(whiten(num, ref))
            assert 0.0 <= g <= 1.0


# -- 3 -------------------------------------------------------------------

def test_criterion_3_rank_one_update():
    rng = np.random.default_rng(303)
    with criterion(3, "rank-1 covariance update across an activation", 30.0):
        m, t_seg, phi = 4, 10_000, 1e4
        cfg = CovTrackerConfig(window_len=t_seg, reference_delay=t_seg + 1,
                               t_alpha=50.0)
        tracker = CovarianceTracker(1, m, cfg)
        a = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        a /= np.linalg.norm(a)
        noise = (rng.standard_normal((2 * t_seg, m))
                 + 1j * rng.standard_normal((2 * t_seg, m))) / np.sqrt(2)
        phases = np.exp(2j * np.pi * rng.uniform(size=t_seg))
        for t in range(t_seg):
            tracker.update(SpectralFrame(t=t, bins=noise[t][None, :]))
        segment_a = tracker.sliding[0].copy()
        for t in range(t_seg):
            y = noise[t_seg + t] + np.sqrt(phi) * phases[t] * a
            tracker.update(SpectralFrame(t=t_seg + t, bins=y[None, :]))
        segment_b = tracker.sliding[0].copy()
        diff = segment_b - segment_a
        svals = np.linalg.svd(diff, compute_uv=False)
        assert svals[1] / svals[0] < 1e-3, f"sigma2/sigma1 = {svals[1]/svals[0]:.2e}"
        principal = np.linalg.svd(diff)[0][:, 0]
        assert abs(np.vdot(principal, a)) > 0.99


# -- 4 -------------------------------------------------------------------

def _single_event_scene(seed, activate, duration=8.0, sample_rate=8000,
                        n_channels=4, snr_range=(5.0, 15.0),
                        event_range=(4.5, 6.0)):
    """One source that either activates or deactivates mid-scene."""
    rng = np.random.default_rng(seed)
    n = int(duration * sample_rate)
    positions = rng.uniform(-0.1, 0.1, (n_channels, 3))
    gains, delays = _source_gains_delays(rng, positions)
    dry = source_dry_signal(rng, n, sample_rate)
    event = int(rng.uniform(*event_range) * sample_rate)
    intervals = [(event, n)] if activate else [(0, event)]
    component = render_component(dry * _activity_gate(intervals, n, sample_rate),
                                 gains, delays, sample_rate)
    noise = rng.standard_normal((n_channels, n))
    snr = rng.uniform(*snr_range)
    noise *= np.sqrt((component ** 2).sum()
                     / ((noise ** 2).sum() * 10.0 ** (snr / 10.0)))
    return component + noise, event


def test_criterion_4_feature_behavior():
    n_scenes = 100
    cfg = RunConfig.wired()
    warmup = cfg.detector.warmup_frames
    t_v = cfg.tracker.reference_delay
    shift, flen = cfg.stft.frame_shift, cfg.stft.frame_len
    with criterion(4, "activation/deactivation feature behavior, "
                      f"{n_scenes} scenes each", 300.0):
        crossings = 0
        pre_below = 0
        pre_total = 0
        for seed in range(n_scenes):
            samples, event = _single_event_scene(10_000 + seed, activate=True)
            _, bars_a, _ = detect_stream(samples, cfg)
            t_evt = (event - flen) // shift + 1
            if np.any(bars_a[t_evt:t_evt + 40 + 1] > 0.24):
                crossings += 1
            pre = bars_a[warmup:t_evt]
            pre_below += int((pre < 0.24).sum())
            pre_total += pre.size
        assert crossings >= 0.80 * n_scenes, f"crossings: {crossings}/{n_scenes}"
        assert pre_below >= 0.95 * pre_total, (
            f"pre-event below-threshold fraction {pre_below/pre_total:.3f}"
        )

        deact_hits = 0
        for seed in range(n_scenes):
            samples, event = _single_event_scene(20_000 + seed, activate=False)
            _, _, bars_d = detect_stream(samples, cfg)
            t_evt = (event - flen) // shift + 1
            peak = warmup + int(np.argmax(bars_d[warmup:]))
            if t_evt <= peak <= t_evt + 2 * t_v:
                deact_hits += 1
        assert deact_hits >= 0.80 * n_scenes, f"deactivation peaks: {deact_hits}/{n_scenes}"


# -- 5 -------------------------------------------------------------------

def test_criterion_5_threshold_failure_mode():
    n_scenes = 100
    cfg = RunConfig.wired()
    with criterion(5, "threshold detector degrades with deactivations, "
                      f"{n_scenes}+{n_scenes} scenes", 300.0):
        def run_split(scene_cfg, seed_base):
            matches = 0
            total = 0
            for i in range(n_scenes):
                sc = generate_scene(
                    scene_cfg.__class__(**{**scene_cfg.__dict__,
                                           "seed": seed_base + i})
                )
                counts, _, _ = detect_stream(sc.samples, cfg)
                truth = ground_truth_count(sc.components, cfg.stft)
                t = np.clip(truth.count, 0, cfg.detector.k_max)
                matches += int((counts == t).sum())
                total += len(counts)
            return 100.0 * matches / total

        base = dict(n_channels=3, k_max=4, snr_db=(5.0, 15.0), noise_kind="white")
        acc_activation_only = run_split(
            SceneConfig(duration=10.0, allow_deactivations=False, **base), 40_000
        )
        acc_dataset_b = run_split(
            SceneConfig(duration=20.0, allow_deactivations=True, **base), 50_000
        )
        assert acc_dataset_b < acc_activation_only, (
            f"B-style {acc_dataset_b:.1f}% vs activation-only "
            f"{acc_activation_only:.1f}%"
        )


# -- 6 -------------------------------------------------------------------

def test_criterion_6_tcn_receptive_field(tmp_path):
    rng = np.random.default_rng(606)
    with criterion(6, "TCN receptive field 43 and bit-exact causality", 10.0):
        spec = ModelSpec(kind="tcn", input_dim=64)
        path = tmp_path / "tcn.scw"
        save_weights(path, random_model(spec, rng))
        from sourcecount.inference import load_weights

        model = load_weights(path)
        assert model.spec.receptive_field == 43
        xs = rng.standard_normal((120, 64)).astype(np.float32)
        base = tcn_forward(model, xs)
        t = 119
        outside = xs.copy()
        outside[t - 43] += 1.0
        assert np.array_equal(tcn_forward(model, outside)[t], base[t])
        inside = xs.copy()
        inside[t - 42] += 1.0
        assert not np.array_equal(tcn_forward(model, inside)[t], base[t])
        future = xs.copy()
        future[60] += 1.0
        assert np.array_equal(tcn_forward(model, future)[:60], base[:60])


# -- 7 -------------------------------------------------------------------

def test_criterion_7_softmax_argmax_contracts():
    rng = np.random.default_rng(707)
    with criterion(7, "softmax/argmax contracts over 10^4 random logits", 5.0):
        logits = (rng.standard_normal((10_000, 5)) * 10).astype(np.float32)
        probs = softmax(logits)
        assert np.abs(probs.sum(axis=1) - 1.0).max() <= 1e-6
        for row in probs[:2000]:
            k = argmax_count(row)
            assert 0 <= k <= 4
        assert argmax_count([0.2, 0.2, 0.2, 0.2, 0.2]) == 0
        assert argmax_count([0.1, 0.25, 0.25, 0.25, 0.15]) == 1


# -- 8 -------------------------------------------------------------------

def test_criterion_8_metrics():
    rng = np.random.default_rng(808)
    with criterion(8, "metrics unit vectors and MAE bound", 1.0):
        assert abs(accuracy([1, 1, 2], [1, 2, 2]) - 66.66666666666667) < 1e-9
        assert abs(mae([1, 1, 2], [1, 2, 2]) - 1 / 3) < 1e-12
        for _ in range(200):
            n = int(rng.integers(1, 100))
            est = rng.integers(0, 5, n)
            truth = rng.integers(0, 5, n)
            assert mae(est, truth) <= 4


# -- 9 -------------------------------------------------------------------

def test_criterion_9_real_time_bound(tmp_path):
    with criterion(9, "real-time factor < 0.5 on a 60 s 4-channel scene", 60.0):
        from sourcecount.cli import main

        rc = main(["simulate", "--preset", "B", "--n", "1",
                   "--out", str(tmp_path), "--seed", "99", "--mics", "4"])
        assert rc == 0
        env = dict(os.environ,
                   OPENBLAS_NUM_THREADS="1", OMP_NUM_THREADS="1",
                   MKL_NUM_THREADS="1", NUMBA_NUM_THREADS="1")
        proc = subprocess.run(
            [sys.executable, "-m", "sourcecount", "bench",
             str(tmp_path / "scene_0000.wav")],
            capture_output=True, text=True, env=env, timeout=55,
        )
        assert proc.returncode == 0, proc.stderr
        rtf = float(proc.stdout.split("real_time_factor=")[1].split()[0])
        print(f"  bench: {proc.stdout.strip()}")
        assert rtf < 0.5, f"real-time factor {rtf}"
