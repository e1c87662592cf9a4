import numpy as np
import pytest

from sourcecount import _kernels
from sourcecount.covariance import CovarianceTracker, CovTrackerConfig
from sourcecount.errors import DataFormatError, NumericError
from sourcecount.features import (
    extract,
    gmsc,
    read_feature_file,
    whiten,
    write_feature_file,
)
from sourcecount.stft import SpectralFrame

from conftest import random_hermitian


def random_pd(rng, m, floor=0.1):
    a = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    return a @ a.conj().T + floor * np.eye(m)


def unit_modulus_vector(rng, m):
    return np.exp(2j * np.pi * rng.uniform(size=m)) / np.sqrt(m)


# --- whiten ------------------------------------------------------------------

def test_whiten_self_is_identity(rng):
    for m in (2, 4, 6):
        r = random_pd(rng, m)
        rw = whiten(r, r, diag_load=0.0)
        assert np.abs(rw.matrix - np.eye(m)).max() <= 1e-10
        assert abs(rw.trace - m) <= 1e-9


def test_whiten_identity_reference(rng):
    r = random_pd(rng, 4)
    rw = whiten(r, np.eye(4), diag_load=0.0)
    assert np.abs(rw.matrix - r).max() <= 1e-12


def test_whiten_white_noise_plus_rank1(rng):
    m, sigma2, phi = 4, 2.3, 5.0
    a = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    num = sigma2 * np.eye(m) + phi * np.outer(a, a.conj())
    rw = whiten(num, sigma2 * np.eye(m), diag_load=0.0)
    expect = np.eye(m) + (phi / sigma2) * np.outer(a, a.conj())
    assert np.abs(rw.matrix - expect).max() <= 1e-9 * np.abs(expect).max()


def test_whiten_escalation_and_failure(rng):
    m = 4
    # small negative eigenvalue: 1e-6 relative loading fails, 1e-3 rescues
    ref = np.diag([1.0, 1.0, 1.0, -2e-5]).astype(complex)
    rw = whiten(np.eye(m), ref)
    assert np.isfinite(rw.matrix).all()
    with pytest.raises(NumericError, match="not positive definite"):
        whiten(np.eye(m), -np.eye(m))


def test_whiten_trace_nonnegative(rng):
    rw = whiten(np.zeros((3, 3)), np.eye(3), diag_load=0.0)
    assert rw.trace == 0.0


# --- gmsc --------------------------------------------------------------------

def test_gmsc_identity_is_zero():
    for m in (2, 3, 4, 5, 6):
        assert gmsc(np.eye(m)) == 0.0


def test_gmsc_rank_one_is_one(rng):
    for m in (2, 3, 4, 5, 6):
        a = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        a[np.abs(a) < 0.3] += 0.5  # keep all entries well away from zero
        g = gmsc(np.outer(a, a.conj()))
        assert abs(g - 1.0) <= 1e-9


def test_gmsc_closed_form_uniform_modulus(rng):
    # I + phi aa^H with |a_i|^2 = 1/M: gamma = phi / (M + phi)
    for m, phi in ((4, 4.0), (2, 1.0), (6, 10.0)):
        a = unit_modulus_vector(rng, m)
        mat = np.eye(m) + phi * np.outer(a, a.conj())
        g = gmsc(mat)
        assert abs(g - phi / (m + phi)) <= 1e-8
        # independent dense Hermitian eigensolver oracle
        d = np.real(np.diag(mat))
        coh = mat / np.sqrt(np.outer(d, d))
        lam = np.linalg.eigvalsh(coh)[-1]
        assert abs(g - (lam - 1) / (m - 1)) <= 1e-10


def test_gmsc_silent_bins():
    assert gmsc(np.zeros((4, 4))) == 0.0
    assert gmsc(np.diag([1e-31, 1.0, 1.0, 1.0])) == 0.0


def test_gmsc_needs_multichannel():
    with pytest.raises(ValueError):
        gmsc(np.eye(1))


def test_gmsc_scale_invariance(rng):
    for _ in range(50):
        m = int(rng.integers(2, 7))
        r = random_pd(rng, m)
        g0 = gmsc(r)
        for c in (1e-6, 3.7, 1e8):
            assert abs(gmsc(c * r) - g0) <= 1e-10


def test_gmsc_bounded_random_psd(rng):
    for _ in range(2000):
        m = int(rng.integers(2, 7))
        r = random_pd(rng, m, floor=0.0)
        g = gmsc(r)
        assert 0.0 <= g <= 1.0


def test_whiten_gmsc_spectrum_invariance_general_congruence(rng):
    # eigenvalues of the whitened matrix survive joint congruence by any
    # invertible Q (gamma itself does not: it depends on the diagonal)
    for _ in range(20):
        m = int(rng.integers(2, 7))
        num, ref = random_pd(rng, m), random_pd(rng, m)
        q = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
        e0 = np.linalg.eigvalsh(whiten(num, ref, 0.0).matrix)
        e1 = np.linalg.eigvalsh(
            whiten(q @ num @ q.conj().T, q @ ref @ q.conj().T, 0.0).matrix
        )
        assert np.abs(e0 - e1).max() <= 1e-8 * max(np.abs(e0).max(), 1.0)


def test_whiten_gmsc_invariance_diagonal_congruence(rng):
    # per-channel complex gains leave the composed whiten->gmsc map invariant
    for _ in range(20):
        m = int(rng.integers(2, 7))
        num, ref = random_pd(rng, m), random_pd(rng, m)
        q = np.diag(rng.uniform(0.2, 3.0, m) * np.exp(2j * np.pi * rng.uniform(size=m)))
        g0 = gmsc(whiten(num, ref, 0.0))
        g1 = gmsc(whiten(q @ num @ q.conj().T, q @ ref @ q.conj().T, 0.0))
        assert abs(g0 - g1) <= 1e-10


def test_principal_eigenvalue_matches_dense_oracle(rng):
    for m in (2, 3, 4, 5, 6):
        h = np.stack([random_hermitian(rng, m) for _ in range(100)])
        lm = _kernels.principal_eigenvalue(h)
        ref = np.linalg.eigvalsh(h)[:, -1]
        assert np.abs(lm - ref).max() <= 1e-8 * np.abs(ref).max()


def test_batch_kernel_matches_contract_path(rng):
    nums = np.stack([random_pd(rng, 4, floor=0.0) for _ in range(40)])
    refs = np.stack([random_pd(rng, 4) for _ in range(40)])
    g, tr, bad = _kernels.whiten_gmsc_batch(nums, refs, 1e-6)
    assert bad == -1
    for i in range(40):
        wm = whiten(nums[i], refs[i], 1e-6)
        assert abs(g[i] - gmsc(wm)) <= 1e-10
        assert abs(tr[i] - wm.trace) <= 1e-10 * max(wm.trace, 1.0)


# --- extract over streams ----------------------------------------------------

def _iid_frames(rng, n_frames, n_bins, m):
    return (
        rng.standard_normal((n_frames, n_bins, m))
        + 1j * rng.standard_normal((n_frames, n_bins, m))
    ) / np.sqrt(2)


def test_extract_noise_only_levels(rng):
    # Steady-state null levels of both features. The deactivation floor is
    # inherently higher: its sliding window averages only L = 14 frames.
    n_bins, m = 64, 4
    tracker = CovarianceTracker(n_bins, m, CovTrackerConfig())
    act_means, deact_means = [], []
    for t, bins in enumerate(_iid_frames(rng, 400, n_bins, m)):
        tracker.update(SpectralFrame(t=t, bins=bins))
        feats = extract(tracker)
        if t >= 134:
            act_means.append(feats.activation.mean())
            deact_means.append(feats.deactivation.mean())
    assert 0.02 < np.mean(act_means) < 0.25
    assert 0.02 < np.mean(deact_means) < 0.55


def test_extract_activation_response(rng):
    # a coherent source appearing in white noise lifts the activation
    # feature well above its pre-event level
    n_bins, m = 32, 4
    a = rng.standard_normal((n_bins, m)) + 1j * rng.standard_normal((n_bins, m))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    tracker = CovarianceTracker(n_bins, m, CovTrackerConfig())
    onset = 250
    med = []
    for t in range(onset + 21):
        bins = _iid_frames(rng, 1, n_bins, m)[0]
        if t >= onset:
            s = np.sqrt(10.0) * (
                rng.standard_normal(n_bins) + 1j * rng.standard_normal(n_bins)
            ) / np.sqrt(2)
            bins = bins + s[:, None] * a
        tracker.update(SpectralFrame(t=t, bins=bins))
        med.append(np.median(extract(tracker).activation))
    med = np.asarray(med)
    pre = np.median(med[134:onset])
    post = med[onset:onset + 21].max()
    assert post >= 3.0 * pre


def test_extract_deactivation_peak_window(rng):
    # a source disappearing produces a deactivation peak within
    # [d, d + 2 t_v] (inherent delay of about t_v frames)
    n_bins, m = 32, 4
    cfg = CovTrackerConfig()
    a = rng.standard_normal((n_bins, m)) + 1j * rng.standard_normal((n_bins, m))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    tracker = CovarianceTracker(n_bins, m, cfg)
    d = 300
    total = d + 3 * cfg.reference_delay
    deact = []
    for t in range(total):
        bins = _iid_frames(rng, 1, n_bins, m)[0]
        if t < d:
            s = np.sqrt(10.0) * (
                rng.standard_normal(n_bins) + 1j * rng.standard_normal(n_bins)
            ) / np.sqrt(2)
            bins = bins + s[:, None] * a
        tracker.update(SpectralFrame(t=t, bins=bins))
        deact.append(np.median(extract(tracker).deactivation))
    deact = np.asarray(deact)
    peak = 134 + int(np.argmax(deact[134:]))
    assert d <= peak <= d + 2 * cfg.reference_delay


def test_extract_combined_ordering(rng):
    tracker = CovarianceTracker(8, 3, CovTrackerConfig())
    tracker.update(SpectralFrame(t=0, bins=_iid_frames(rng, 1, 8, 3)[0]))
    feats = extract(tracker)
    assert feats.combined.shape == (16,)
    assert np.array_equal(feats.combined[:8], feats.activation)
    assert np.array_equal(feats.combined[8:], feats.deactivation)
    assert np.all((feats.activation >= 0) & (feats.activation <= 1))
    assert np.all((feats.deactivation >= 0) & (feats.deactivation <= 1))


def test_extract_zero_stream_is_silent(rng):
    tracker = CovarianceTracker(8, 3, CovTrackerConfig())
    for t in range(30):
        tracker.update(SpectralFrame(t=t, bins=np.zeros((8, 3), dtype=complex)))
    feats = extract(tracker)
    assert np.all(feats.activation == 0)
    assert np.all(feats.deactivation == 0)
    assert np.all(feats.deact_traces == 0)


# --- SCF1 --------------------------------------------------------------------

def test_scf1_roundtrip(tmp_path, rng):
    feats = rng.random((11, 10), dtype=np.float64).astype(np.float32)
    counts = rng.integers(0, 5, 11).astype(np.uint8)
    path = tmp_path / "x.scf"
    write_feature_file(path, feats, counts, n_bins=5, k_max=4)
    back, cback, n_bins, k_max = read_feature_file(path)
    assert np.array_equal(back, feats)
    assert np.array_equal(cback, counts)
    assert (n_bins, k_max) == (5, 4)


def test_scf1_activation_only_width(tmp_path, rng):
    feats = rng.random((4, 5)).astype(np.float32)
    path = tmp_path / "a.scf"
    write_feature_file(path, feats, np.zeros(4, dtype=np.uint8), n_bins=5, k_max=4)
    back, _, n_bins, _ = read_feature_file(path)
    assert back.shape == (4, 5) and n_bins == 5


def test_scf1_errors(tmp_path, rng):
    path = tmp_path / "bad.scf"
    path.write_bytes(b"XXXX" + b"\0" * 40)
    with pytest.raises(DataFormatError, match="magic"):
        read_feature_file(path)
    good = tmp_path / "good.scf"
    write_feature_file(good, rng.random((3, 5)).astype(np.float32),
                       np.zeros(3, dtype=np.uint8), n_bins=5, k_max=4)
    blob = good.read_bytes()
    (tmp_path / "trunc.scf").write_bytes(blob[:-2])
    with pytest.raises(DataFormatError, match="truncated"):
        read_feature_file(tmp_path / "trunc.scf")
    with pytest.raises(ValueError, match="n_feat"):
        write_feature_file(tmp_path / "w.scf", rng.random((3, 7)).astype(np.float32),
                           np.zeros(3, dtype=np.uint8), n_bins=5, k_max=4)
