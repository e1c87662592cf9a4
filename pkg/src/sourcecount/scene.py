"""Synthetic multichannel acoustic scenes with a time-varying source count.

A scene is built from up to k_max spatially fixed sources, each rendered to
the array through a far-field gain-and-delay transfer function and gated by
activity intervals drawn so that every event changes the active count by
exactly one. Source signals are amplitude-modulated Gaussian noise with
slow (4 Hz) syllabic power envelopes, applied per log-spaced sub-band so
that different frequency regions fluctuate independently, as in speech.
This keeps the nonstationary-PSD character the downstream features rely on
without bundling any speech data.

Noise is either spatially white or a diffuse approximation (many white
sources through random transfer functions plus a small sensor floor), scaled
to a drawn broadband SNR.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, sosfilt

from .stft import StftConfig, frame_count

SPEED_OF_SOUND = 343.0
ARRAY_RADIUS = 0.1           # mics drawn inside this box, metres
RAMP_SECONDS = 0.010         # raised-cosine on/off fade
ENVELOPE_CUTOFF_HZ = 4.0
ENVELOPE_FLOOR_DB = -25.0    # min syllabic power relative to its mean, so an
                             # active source never dips below the truth VAD
SOURCE_BANDS = 8             # independently modulated sub-bands per source;
                             # a single shared envelope would make all bins
                             # fluctuate coherently, unlike real speech
SOURCE_BAND_LO_HZ = 100.0
DIFFUSE_SOURCES = 24
DIFFUSE_FLOOR_DB = -20.0     # sensor-white floor below the diffuse field
DEFAULT_VAD_DB = -35.0


@dataclass(frozen=True)
class SceneConfig:
    n_channels: int = 4
    k_max: int = 4
    duration: float = 20.0
    event_interval: tuple = (2.0, 5.0)
    snr_db: tuple = (5.0, 15.0)
    allow_deactivations: bool = False
    noise_kind: str = "white"  # "white" | "diffuse"
    seed: int = 0
    sample_rate: int = 8000

    def __post_init__(self):
        if not 2 <= self.n_channels <= 6:
            raise ValueError("n_channels must be in 2..6")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        lo, hi = self.event_interval
        if not 0 < lo <= hi:
            raise ValueError("event_interval must satisfy 0 < min <= max")
        if self.snr_db[0] > self.snr_db[1]:
            raise ValueError("snr_db must satisfy min <= max")
        if self.noise_kind not in ("white", "diffuse"):
            raise ValueError(f"unknown noise_kind {self.noise_kind!r}")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))


@dataclass
class SourceSpec:
    """Geometry and activity of one source."""

    gains: np.ndarray            # (M,) per-microphone gain
    delays: np.ndarray           # (M,) arrival delay, seconds, min 0
    activity: list               # [(on_sample, off_sample), ...] disjoint, sorted

    def atf(self, freqs_hz) -> np.ndarray:
        """Transfer-function vectors at the given frequencies, (F, M)."""
        f = np.asarray(freqs_hz, dtype=np.float64)
        return self.gains[None, :] * np.exp(
            -2j * np.pi * f[:, None] * self.delays[None, :]
        )


@dataclass
class SceneTruth:
    """Per-step source activity indicators and their sum."""

    indicators: np.ndarray   # (k_max, T) uint8
    count: np.ndarray        # (T,) int

    def __post_init__(self):
        if not np.array_equal(self.indicators.sum(axis=0), self.count):
            raise ValueError("count must equal the indicator column sums")

    @classmethod
    def from_indicators(cls, indicators) -> "SceneTruth":
        ind = np.asarray(indicators, dtype=np.uint8)
        return cls(indicators=ind, count=ind.sum(axis=0).astype(np.int64))


@dataclass
class Scene:
    samples: np.ndarray        # (M, N) mixture
    components: np.ndarray     # (k_max, M, N) rendered, gated sources
    noise: np.ndarray          # (M, N)
    truth: SceneTruth          # sample-rate intended activity
    sources: list
    target_snr_db: float
    config: SceneConfig


def draw_activity_pattern(rng, config: SceneConfig):
    """Event schedule: per-source sample intervals, each event a +-1 change."""
    n = config.n_samples
    sr = config.sample_rate
    lo, hi = config.event_interval
    intervals = [[] for _ in range(config.k_max)]
    open_since = {}
    t = 0.0
    while True:
        t += rng.uniform(lo, hi)
        sample = int(round(t * sr))
        if sample >= n:
            break
        active = sorted(open_since)
        if config.allow_deactivations and active:
            if len(active) == config.k_max:
                act = False
            else:
                act = rng.uniform() < 0.5
        else:
            if len(active) == config.k_max:
                break  # activations-only scene is full
            act = True
        if act:
            idle = [k for k in range(config.k_max) if k not in open_since]
            k = idle[rng.integers(len(idle))]
            open_since[k] = sample
        else:
            k = active[rng.integers(len(active))]
            intervals[k].append((open_since.pop(k), sample))
    for k, since in sorted(open_since.items()):
        intervals[k].append((since, n))
    for iv in intervals:
        iv.sort()
    return intervals


def _syllabic_envelope(rng, n, sample_rate):
    sos = butter(2, ENVELOPE_CUTOFF_HZ / (sample_rate / 2), output="sos")
    modulator = sosfilt(sos, rng.standard_normal(n))
    power = modulator ** 2
    power /= power.mean()
    np.maximum(power, 10.0 ** (ENVELOPE_FLOOR_DB / 10.0), out=power)
    return np.sqrt(power)


def source_dry_signal(rng, n, sample_rate):
    """Speech-like nonstationary source signal, unit average power.

    Gaussian noise split into log-spaced sub-bands, each amplitude-modulated
    by its own slow syllabic envelope so different frequency regions
    fluctuate independently.
    """
    edges = np.geomspace(SOURCE_BAND_LO_HZ, 0.475 * sample_rate, SOURCE_BANDS + 1)
    total = np.zeros(n)
    for lo, hi in zip(edges[:-1], edges[1:]):
        sos = butter(3, [lo / (sample_rate / 2), hi / (sample_rate / 2)],
                     btype="band", output="sos")
        carrier = sosfilt(sos, rng.standard_normal(n))
        total += carrier * _syllabic_envelope(rng, n, sample_rate)
    return total / np.sqrt((total ** 2).mean() + 1e-30)


def _activity_gate(intervals, n, sample_rate):
    gate = np.zeros(n)
    ramp = max(int(round(RAMP_SECONDS * sample_rate)), 1)
    fade = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
    for on, off in intervals:
        gate[on:off] = 1.0
        up = min(ramp, off - on)
        gate[on:on + up] = fade[:up]
        down = min(ramp, off - on)
        gate[off - down:off] = fade[:down][::-1]
    return gate


def render_component(dry, gains, delays, sample_rate):
    """Render a dry signal to the array: per-mic gain and fractional delay.

    Exact frequency-domain realization over the (padded) full-signal
    spectrum; returns (M, N).
    """
    dry = np.asarray(dry, dtype=np.float64)
    gains = np.asarray(gains, dtype=np.float64)
    delays = np.asarray(delays, dtype=np.float64)
    n = dry.shape[0]
    # The fractional delay is a circular sinc interpolation whose tails decay
    # only like 1/distance; pad far enough that wrap-around stays ~100 dB
    # below the signal.
    pad = n + max(4 * int(np.ceil(delays.max() * sample_rate)), 8192)
    spec = np.fft.rfft(dry, pad)
    freqs = np.fft.rfftfreq(pad, 1.0 / sample_rate)
    out = np.empty((gains.shape[0], n))
    for m in range(gains.shape[0]):
        phase = np.exp(-2j * np.pi * freqs * delays[m])
        out[m] = np.fft.irfft(spec * gains[m] * phase, pad)[:n]
    return out


def _random_geometry(rng, m):
    positions = rng.uniform(-ARRAY_RADIUS, ARRAY_RADIUS, (m, 3))
    return positions


def _random_direction(rng):
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def _source_gains_delays(rng, positions):
    direction = _random_direction(rng)
    delays = -(positions @ direction) / SPEED_OF_SOUND
    delays -= delays.min()
    gains = rng.uniform(0.5, 1.0, positions.shape[0])
    return gains, delays


def generate_scene(config: SceneConfig) -> Scene:
    """Fully seeded scene realization."""
    rng = np.random.default_rng(config.seed)
    m, n = config.n_channels, config.n_samples
    positions = _random_geometry(rng, m)
    intervals = draw_activity_pattern(rng, config)

    sources = []
    components = np.zeros((config.k_max, m, n))
    for k in range(config.k_max):
        gains, delays = _source_gains_delays(rng, positions)
        spec = SourceSpec(gains=gains, delays=delays, activity=intervals[k])
        sources.append(spec)
        dry = source_dry_signal(rng, n, config.sample_rate)
        gated = dry * _activity_gate(intervals[k], n, config.sample_rate)
        if intervals[k]:
            components[k] = render_component(gated, gains, delays, config.sample_rate)

    if config.noise_kind == "white":
        noise = rng.standard_normal((m, n))
    else:
        noise = np.zeros((m, n))
        for _ in range(DIFFUSE_SOURCES):
            gains, delays = _source_gains_delays(rng, positions)
            noise += render_component(rng.standard_normal(n), gains, delays, config.sample_rate)
        floor = np.sqrt(10.0 ** (DIFFUSE_FLOOR_DB / 10.0) * (noise ** 2).mean())
        noise += floor * rng.standard_normal((m, n))

    target_snr = rng.uniform(*config.snr_db)
    comp_energy = float((components ** 2).sum())
    noise_energy = float((noise ** 2).sum())
    if comp_energy > 0.0 and noise_energy > 0.0:
        noise *= np.sqrt(comp_energy / (noise_energy * 10.0 ** (target_snr / 10.0)))

    samples = components.sum(axis=0) + noise
    peak = np.abs(samples).max()
    if peak > 0.9:
        scale = 0.9 / peak
        samples *= scale
        components *= scale
        noise *= scale

    indicators = np.zeros((config.k_max, n), dtype=np.uint8)
    for k, iv in enumerate(intervals):
        for on, off in iv:
            indicators[k, on:off] = 1
    truth = SceneTruth.from_indicators(indicators)
    return Scene(
        samples=samples,
        components=components,
        noise=noise,
        truth=truth,
        sources=sources,
        target_snr_db=float(target_snr),
        config=config,
    )


def ground_truth_count(
    components,
    stft_config: StftConfig = StftConfig(),
    vad_threshold_db: float = DEFAULT_VAD_DB,
) -> SceneTruth:
    """Frame-grid activity from rendered components via a power threshold.

    A source counts as active in a frame when the frame-averaged power of
    its component exceeds vad_threshold_db relative to that source's mean
    power over its own active segments (frames within 40 dB of its peak).
    """
    comp = np.asarray(components, dtype=np.float64)
    if comp.ndim != 3 or comp.shape[2] == 0:
        raise ValueError("components must be a nonempty (k, m, n) array")
    k_max, _, n = comp.shape
    n_frames = frame_count(n, stft_config)
    if n_frames < 1:
        raise ValueError("components shorter than one frame")
    power = _frame_power(comp, stft_config, n_frames)
    indicators = np.zeros((k_max, n_frames), dtype=np.uint8)
    for k in range(k_max):
        p = power[k]
        peak = p.max()
        if peak <= 0.0:
            continue
        active = p >= peak * 1e-4
        reference = p[active].mean()
        indicators[k] = p > reference * 10.0 ** (vad_threshold_db / 10.0)
    return SceneTruth.from_indicators(indicators)


def _frame_power(comp, cfg, n_frames):
    """Mean squared amplitude per source and frame, (k, T)."""
    energy = np.cumsum((comp ** 2).sum(axis=1), axis=1)  # over channels
    energy = np.concatenate([np.zeros((comp.shape[0], 1)), energy], axis=1)
    starts = np.arange(n_frames) * cfg.frame_shift
    stops = starts + cfg.frame_len
    per_frame = energy[:, stops] - energy[:, starts]
    return per_frame / (cfg.frame_len * comp.shape[1])


# ---------------------------------------------------------------------------
# Sidecar ground-truth files: one line per frame, "t K I_1 ... I_kmax".
# ---------------------------------------------------------------------------

def write_truth_sidecar(path, truth: SceneTruth) -> None:
    k_max, n_frames = truth.indicators.shape
    with open(path, "w") as fh:
        for t in range(n_frames):
            flags = " ".join(str(int(v)) for v in truth.indicators[:, t])
            fh.write(f"{t} {int(truth.count[t])} {flags}\n")


def read_truth_sidecar(path) -> SceneTruth:
    from .errors import DataFormatError

    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 3:
                raise DataFormatError(f"{path}: malformed truth line {line!r}")
            rows.append([int(v) for v in parts])
    if not rows:
        raise DataFormatError(f"{path}: empty truth sidecar")
    arr = np.asarray(rows, dtype=np.int64)
    indicators = arr[:, 2:].T.astype(np.uint8)
    truth = SceneTruth.from_indicators(indicators)
    if not np.array_equal(truth.count, arr[:, 1]):
        raise DataFormatError(f"{path}: count column inconsistent with indicators")
    return truth
