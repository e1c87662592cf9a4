import numpy as np
import pytest

from sourcecount.errors import DataFormatError
from sourcecount.stft import (
    SpectralFrame,
    StftConfig,
    analyze,
    analyze_array,
    frame_count,
    sqrt_hann_window,
)
from sourcecount.wavio import read_wav, write_wav

from oracles import direct_dft_onesided

CFG = StftConfig()


def test_config_defaults():
    assert CFG.n_bins == 401
    assert CFG.frame_period == 0.025


@pytest.mark.parametrize("kwargs", [
    dict(frame_shift=0),
    dict(frame_len=1),
    dict(frame_shift=300),   # does not divide 800
    dict(sample_rate=0),
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        StftConfig(**dict(dict(sample_rate=8000, frame_len=800, frame_shift=200), **kwargs))


def test_zero_input_five_frames():
    frames = list(analyze(np.zeros((2, 1600)), CFG))
    assert len(frames) == 5
    for fr in frames:
        assert fr.bins.shape == (401, 2)
        assert np.all(fr.bins == 0)


def test_single_frame_count():
    frames = list(analyze(np.zeros((2, 800)), CFG))
    assert len(frames) == 1
    assert frame_count(800, CFG) == 1
    assert frame_count(799, CFG) == 0


def test_cosine_peak_bin_matches_direct_dft(rng):
    n = 1600
    t = np.arange(n)
    tone = np.cos(2 * np.pi * 1000.0 * t / 8000.0)
    x = np.stack([tone, rng.standard_normal(n) * 0.01])
    frames = list(analyze(x, CFG))
    for fr in frames:
        assert np.argmax(np.abs(fr.bins[:, 0])) == 100
    # frame 0 of the tone channel against a direct DFT of the windowed frame
    windowed = tone[:800] * sqrt_hann_window(800)
    oracle = direct_dft_onesided(windowed)
    got = frames[0].bins[:, 0]
    assert np.abs(got - oracle).max() <= 1e-9 * np.abs(oracle).max()


def test_parseval_energy_consistency(rng):
    x = rng.standard_normal((2, 1200))
    w = sqrt_hann_window(800)
    for fr in analyze(x, CFG):
        for m in range(2):
            seg = x[m, fr.t * 200:fr.t * 200 + 800] * w
            weights = np.full(401, 2.0)
            weights[0] = weights[-1] = 1.0
            lhs = float((weights * np.abs(fr.bins[:, m]) ** 2).sum())
            rhs = 800.0 * float((seg ** 2).sum())
            assert abs(lhs - rhs) <= 1e-6 * rhs


def test_linearity(rng):
    x = rng.standard_normal((3, 1000))
    y = rng.standard_normal((3, 1000))
    a, b = 2.5, -0.7
    fx = analyze_array(x, CFG)
    fy = analyze_array(y, CFG)
    fz = analyze_array(a * x + b * y, CFG)
    ref = a * fx + b * fy
    assert np.abs(fz - ref).max() <= 1e-9 * np.abs(ref).max()


def test_determinism(rng):
    x = rng.standard_normal((2, 1200))
    f1 = analyze_array(x, CFG)
    f2 = analyze_array(x, CFG)
    assert np.array_equal(f1, f2)


def test_causality(rng):
    x = rng.standard_normal((2, 1400))
    before = analyze_array(x, CFG)
    x2 = x.copy()
    # frame 1 covers samples [200, 1000); touching sample 1000 must not
    # change frames 0 and 1
    x2[:, 1000:] += 5.0
    after = analyze_array(x2, CFG)
    assert np.array_equal(before[:2], after[:2])
    assert not np.array_equal(before[2], after[2])


def test_errors():
    with pytest.raises(ValueError, match="length mismatch"):
        list(analyze([np.zeros(800), np.zeros(900)], CFG))
    with pytest.raises(ValueError, match="channels"):
        list(analyze(np.zeros((1, 1600)), CFG))
    with pytest.raises(ValueError, match="too short"):
        list(analyze(np.zeros((2, 700)), CFG))


def test_spectral_frame_fields():
    fr = SpectralFrame(t=3, bins=np.zeros((401, 4), dtype=complex))
    assert fr.n_channels == 4


# --- WAV ingestion ---------------------------------------------------------

def test_wav_float32_roundtrip(tmp_path, rng):
    x = rng.standard_normal((4, 4000)) * 0.1
    path = tmp_path / "a.wav"
    write_wav(path, 8000, x)
    rate, back = read_wav(path, expected_rate=8000)
    assert rate == 8000
    assert back.shape == (4, 4000)
    assert np.abs(back - x).max() <= 1e-7


def test_wav_int16(tmp_path):
    from scipy.io import wavfile

    data = (np.linspace(-0.5, 0.5, 800)[:, None] * np.ones((1, 2)) * 32767).astype(np.int16)
    path = tmp_path / "pcm.wav"
    wavfile.write(path, 8000, data)
    rate, x = read_wav(path)
    assert x.shape == (2, 800)
    assert np.abs(x).max() <= 1.0


def test_wav_rate_mismatch(tmp_path, rng):
    path = tmp_path / "b.wav"
    write_wav(path, 16000, rng.standard_normal((2, 100)))
    with pytest.raises(DataFormatError, match="sample rate"):
        read_wav(path, expected_rate=8000)


def test_wav_unsupported_dtype(tmp_path):
    from scipy.io import wavfile

    path = tmp_path / "c.wav"
    wavfile.write(path, 8000, np.zeros((100, 2), dtype=np.int32))
    with pytest.raises(DataFormatError, match="unsupported"):
        read_wav(path)
