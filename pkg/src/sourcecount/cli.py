"""Command-line pipeline driver.

Subcommands: simulate, extract, detect, infer, evaluate, gridsearch, bench.
Exit codes: 0 success, 2 usage error, 3 data-format error, 4 numeric failure.

Configuration is line-oriented ``key = value`` text in sections ([stft],
[tracker], [detector], [scene]); every value falls back to the documented
default and the effective configuration is echoed into output manifests.
"""

from __future__ import annotations

import argparse
import configparser
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import scene as scene_mod
from . import wavio
from .covariance import CovTrackerConfig
from .detector import DetectorConfig
from .errors import DataFormatError, NumericError
from .features import read_feature_file, write_feature_file
from .inference import GruRunner, TcnStream, load_weights
from .metrics import evaluate_scenes, grid_search_thresholds
from .pipeline import RunConfig, detect_stream, feature_matrix
from .scene import SceneConfig, generate_scene, ground_truth_count, read_truth_sidecar
from .stft import StftConfig


# ---------------------------------------------------------------------------
# Configuration files.
# ---------------------------------------------------------------------------

def _get(cp, section, key, cast, default):
    if cp is None or not cp.has_option(section, key):
        return default
    raw = cp.get(section, key)
    if cast is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return cast(raw)


def load_run_config(path=None, warmup_override=None) -> RunConfig:
    cp = None
    if path is not None:
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        if not cp.read(path):
            raise DataFormatError(f"{path}: cannot read config file")
    stft = StftConfig(
        sample_rate=_get(cp, "stft", "sample_rate", int, 8000),
        frame_len=_get(cp, "stft", "frame_len", int, 800),
        frame_shift=_get(cp, "stft", "frame_shift", int, 200),
    )
    tracker = CovTrackerConfig(
        t_alpha=_get(cp, "tracker", "t_alpha", float, 0.5),
        window_len=_get(cp, "tracker", "window_len", int, 14),
        reference_delay=_get(cp, "tracker", "reference_delay", int, 20),
        diag_load=_get(cp, "tracker", "diag_load", float, 1e-6),
    )
    detector = DetectorConfig(
        t_gamma=_get(cp, "detector", "t_gamma", float, 0.5),
        thr_act=_get(cp, "detector", "thr_act", float, 0.24),
        thr_deact=_get(cp, "detector", "thr_deact", float, 0.62),
        refractory=_get(cp, "detector", "refractory", int, 20),
        k_max=_get(cp, "detector", "k_max", int, 4),
        enable_deactivation=_get(cp, "detector", "enable_deactivation", bool, True),
    )
    if warmup_override is None and cp is not None and cp.has_option("detector", "warmup_frames"):
        warmup_override = cp.getint("detector", "warmup_frames")
    scene_cfg = SceneConfig(
        n_channels=_get(cp, "scene", "n_channels", int, 4),
        k_max=_get(cp, "scene", "k_max", int, 4),
        duration=_get(cp, "scene", "duration", float, 20.0),
        event_interval=(
            _get(cp, "scene", "event_interval_min", float, 2.0),
            _get(cp, "scene", "event_interval_max", float, 5.0),
        ),
        snr_db=(
            _get(cp, "scene", "snr_db_min", float, 5.0),
            _get(cp, "scene", "snr_db_max", float, 15.0),
        ),
        allow_deactivations=_get(cp, "scene", "allow_deactivations", bool, False),
        noise_kind=_get(cp, "scene", "noise_kind", str, "white"),
    )
    return RunConfig.wired(stft=stft, tracker=tracker, detector=detector,
                           scene=scene_cfg, warmup_override=warmup_override)


def effective_config_lines(cfg: RunConfig) -> list:
    s, t, d, sc = cfg.stft, cfg.tracker, cfg.detector, cfg.scene
    return [
        "[stft]",
        f"sample_rate = {s.sample_rate}",
        f"frame_len = {s.frame_len}",
        f"frame_shift = {s.frame_shift}",
        "[tracker]",
        f"t_alpha = {t.t_alpha}",
        f"window_len = {t.window_len}",
        f"reference_delay = {t.reference_delay}",
        f"diag_load = {t.diag_load}",
        "[detector]",
        f"t_gamma = {d.t_gamma}",
        f"thr_act = {d.thr_act}",
        f"thr_deact = {d.thr_deact}",
        f"refractory = {d.refractory}",
        f"k_max = {d.k_max}",
        f"enable_deactivation = {d.enable_deactivation}",
        f"warmup_frames = {d.warmup_frames}",
        "[scene]",
        f"n_channels = {sc.n_channels}",
        f"k_max = {sc.k_max}",
        f"duration = {sc.duration}",
        f"event_interval_min = {sc.event_interval[0]}",
        f"event_interval_max = {sc.event_interval[1]}",
        f"snr_db_min = {sc.snr_db[0]}",
        f"snr_db_max = {sc.snr_db[1]}",
        f"allow_deactivations = {sc.allow_deactivations}",
        f"noise_kind = {sc.noise_kind}",
    ]


# ---------------------------------------------------------------------------
# Subcommands.
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = load_run_config(args.config)
    scene_cfg = cfg.scene
    if args.preset == "A":
        scene_cfg = replace(scene_cfg, duration=20.0, allow_deactivations=False)
    elif args.preset == "B":
        scene_cfg = replace(scene_cfg, duration=60.0, allow_deactivations=True)
    if args.mics is not None:
        scene_cfg = replace(scene_cfg, n_channels=args.mics)
    if args.duration is not None:
        scene_cfg = replace(scene_cfg, duration=args.duration)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for i in range(args.n):
        sc = replace(scene_cfg, seed=args.seed + i)
        realized = generate_scene(sc)
        wav_name = f"scene_{i:04d}.wav"
        truth_name = f"scene_{i:04d}.truth.txt"
        wavio.write_wav(out / wav_name, sc.sample_rate, realized.samples)
        truth = ground_truth_count(realized.components, cfg.stft)
        scene_mod.write_truth_sidecar(out / truth_name, truth)
        manifest.append(
            f"{wav_name} {truth_name} seed={sc.seed} "
            f"snr_db={realized.target_snr_db:.3f}"
        )
    cfg_echo = effective_config_lines(replace(cfg, scene=scene_cfg))
    with open(out / "manifest.txt", "w") as fh:
        for line in cfg_echo:
            fh.write(f"# {line}\n")
        for line in manifest:
            fh.write(line + "\n")
    print(f"wrote {args.n} scene(s) to {out}")
    return 0


def _load_counts_for(wav_path, truth_arg, n_frames, k_max):
    path = Path(truth_arg) if truth_arg else Path(wav_path).with_suffix("").with_suffix(".truth.txt")
    if not path.exists():
        print(f"warning: no truth sidecar at {path}, writing zero counts",
              file=sys.stderr)
        return np.zeros(n_frames, dtype=np.uint8)
    truth = read_truth_sidecar(path)
    if truth.count.shape[0] != n_frames:
        raise DataFormatError(
            f"{path}: {truth.count.shape[0]} truth frames but {n_frames} "
            "feature frames (config mismatch?)"
        )
    return np.clip(truth.count, 0, k_max).astype(np.uint8)


def cmd_extract(args) -> int:
    cfg = load_run_config(args.config)
    rate, samples = wavio.read_wav(args.wav, expected_rate=cfg.stft.sample_rate)
    feats = feature_matrix(samples, cfg, activation_only=args.activation_only)
    counts = _load_counts_for(args.wav, args.truth, feats.shape[0],
                              cfg.detector.k_max)
    write_feature_file(args.out, feats, counts, cfg.stft.n_bins,
                       cfg.detector.k_max)
    print(f"wrote {feats.shape[0]} frames x {feats.shape[1]} features to {args.out}")
    return 0


def cmd_detect(args) -> int:
    cfg = load_run_config(args.config)
    rate, samples = wavio.read_wav(args.wav, expected_rate=cfg.stft.sample_rate)
    counts, bars_a, bars_d = detect_stream(samples, cfg)
    sink = open(args.out, "w") if args.out else sys.stdout
    try:
        for line in effective_config_lines(cfg):
            sink.write(f"# {line}\n")
        for t in range(len(counts)):
            sink.write(f"{t} {bars_a[t]:.6f} {bars_d[t]:.6f} {counts[t]}\n")
    finally:
        if args.out:
            sink.close()
    return 0


def cmd_infer(args) -> int:
    feats, _counts, _n_bins, _k_max = read_feature_file(args.features)
    model = load_weights(args.model)
    if feats.shape[1] != model.spec.input_dim:
        raise DataFormatError(
            f"feature dimension {feats.shape[1]} does not match model "
            f"input_dim {model.spec.input_dim}"
        )
    sink = open(args.out, "w") if args.out else sys.stdout
    try:
        if model.spec.kind == "gru":
            runner = GruRunner(model)
            stepper = runner.step
        else:
            stream = TcnStream(model)
            stepper = stream.step
        for t in range(feats.shape[0]):
            probs = stepper(feats[t])
            k = int(np.argmax(probs))
            pstr = " ".join(f"{p:.6f}" for p in probs)
            sink.write(f"{t} {k} {pstr}\n")
    finally:
        if args.out:
            sink.close()
    return 0


def _read_estimates(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 2:
                raise DataFormatError(f"{path}: malformed estimate line {line!r}")
            rows.append(int(parts[1]))
    if not rows:
        raise DataFormatError(f"{path}: no estimates")
    return np.asarray(rows, dtype=np.int64)


def cmd_evaluate(args) -> int:
    if len(args.est) != len(args.truth):
        raise DataFormatError("need matching --est and --truth file lists")
    pairs = []
    for est_path, truth_path in zip(args.est, args.truth):
        est = _read_estimates(est_path)
        truth = read_truth_sidecar(truth_path).count
        if est.shape[0] != truth.shape[0]:
            raise DataFormatError(
                f"{est_path}: {est.shape[0]} estimates vs "
                f"{truth.shape[0]} truth frames"
            )
        pairs.append((Path(est_path).stem, est, truth))
    report = evaluate_scenes(pairs)
    print(report.render())
    if args.records:
        with open(args.records, "w") as fh:
            for line in report.records():
                fh.write(line + "\n")
    return 0


def _parse_grid(spec_str):
    try:
        lo, hi, n = spec_str.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError as exc:
        raise DataFormatError(f"bad grid spec {spec_str!r} (want lo:hi:n)") from exc


def cmd_gridsearch(args) -> int:
    cfg = load_run_config(args.config)
    scenes = []
    for wav_path in args.wavs:
        rate, samples = wavio.read_wav(wav_path, expected_rate=cfg.stft.sample_rate)
        _counts, bars_a, bars_d = detect_stream(samples, cfg)
        truth_path = Path(wav_path).with_suffix("").with_suffix(".truth.txt")
        truth = read_truth_sidecar(truth_path).count
        if truth.shape[0] != bars_a.shape[0]:
            raise DataFormatError(f"{truth_path}: frame count mismatch")
        scenes.append((bars_a, bars_d, np.clip(truth, 0, cfg.detector.k_max)))
    thr_a, thr_d, acc = grid_search_thresholds(
        scenes, _parse_grid(args.grid_act), _parse_grid(args.grid_deact),
        cfg.detector,
    )
    print(f"thr_act={thr_a:.4f} thr_deact={thr_d:.4f} accuracy={acc:.2f}")
    return 0


def cmd_bench(args) -> int:
    cfg = load_run_config(args.config)
    rate, samples = wavio.read_wav(args.wav, expected_rate=cfg.stft.sample_rate)
    audio_seconds = samples.shape[1] / rate
    # Warm pass over a prefix so one-time JIT compilation stays out of the
    # measurement.
    prefix = samples[:, : min(samples.shape[1], 2 * cfg.stft.sample_rate)]
    detect_stream(prefix, cfg)
    t0 = time.perf_counter()
    counts, _, _ = detect_stream(samples, cfg)
    elapsed = time.perf_counter() - t0
    rtf = elapsed / audio_seconds
    print(f"audio_seconds={audio_seconds:.3f} processing_seconds={elapsed:.3f} "
          f"real_time_factor={rtf:.4f} frames={len(counts)}")
    return 0


# ---------------------------------------------------------------------------
# Parser / entry point.
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sourcecount",
        description="Online sound-source counting from multichannel audio.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic scenes")
    p.add_argument("--preset", choices=["A", "B"], default=None,
                   help="A: 20 s activations only; B: 60 s with deactivations")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mics", type=int, default=None)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("extract", help="WAV -> SCF1 feature file")
    p.add_argument("wav")
    p.add_argument("--out", "-o", required=True)
    p.add_argument("--activation-only", action="store_true")
    p.add_argument("--truth", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("detect", help="threshold detection over a WAV")
    p.add_argument("wav")
    p.add_argument("--out", "-o", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("infer", help="neural count estimates over an SCF1 file")
    p.add_argument("features")
    p.add_argument("--model", required=True)
    p.add_argument("--out", "-o", default=None)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", help="score estimate files against truth")
    p.add_argument("--est", nargs="+", required=True)
    p.add_argument("--truth", nargs="+", required=True)
    p.add_argument("--records", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gridsearch", help="threshold grid search over scenes")
    p.add_argument("wavs", nargs="+")
    p.add_argument("--grid-act", default="0.1:0.5:9")
    p.add_argument("--grid-deact", default="0.4:0.8:9")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("bench", help="measure the real-time factor")
    p.add_argument("wav")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DataFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
