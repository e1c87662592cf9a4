"""Whitened spatial-coherence features.

Per frequency bin, a Hermitian covariance estimate is whitened by a
reference covariance (Cholesky congruence) and condensed to a coherence
scalar in [0, 1]: the principal eigenvalue of the diagonally renormalized
whitened matrix, rescaled by 1/(M-1). A value near 0 means the bin looks
like the reference; a value near 1 means a single fully coherent component
appeared on top of it.

The activation path whitens the current recursive estimate by the delayed
one; the deactivation path swaps roles and uses the sliding-window
estimator on both sides.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .covariance import CovarianceTracker
from .errors import DataFormatError, NumericError

SILENT_EPS = _kernels.SILENT_EPS


@dataclass
class WhitenedMatrix:
    matrix: np.ndarray  # (M, M) complex Hermitian
    trace: float


def whiten(numerator, reference, diag_load: float = 1e-6) -> WhitenedMatrix:
    """Congruence-whiten numerator by reference: C^{-H} numerator C^{-1}.

    C is the upper Cholesky factor of reference plus relative diagonal
    loading. On factorization failure the loading escalates once to 1e-3
    relative; a second failure raises NumericError.
    """
    num = np.asarray(numerator, dtype=np.complex128)
    ref = np.asarray(reference, dtype=np.complex128)
    m = num.shape[0]
    mean_diag = np.trace(ref).real / m
    rw = None
    for load in (diag_load, _kernels.ESCALATED_LOAD):
        try:
            low = np.linalg.cholesky(ref + load * mean_diag * np.eye(m))
        except np.linalg.LinAlgError:
            continue
        inv = np.linalg.inv(low)
        rw = inv @ num @ inv.conj().T
        break
    if rw is None:
        raise NumericError("reference not positive definite")
    rw = 0.5 * (rw + rw.conj().T)
    return WhitenedMatrix(matrix=rw, trace=max(float(np.trace(rw).real), 0.0))


def gmsc(rw) -> float:
    """Coherence scalar of a whitened matrix, clamped to [0, 1].

    Degenerate bins (any diagonal entry <= SILENT_EPS) return 0.
    """
    mat = rw.matrix if isinstance(rw, WhitenedMatrix) else np.asarray(rw)
    m = mat.shape[0]
    if m < 2:
        raise ValueError("need at least 2 channels")
    d = np.real(np.diag(mat)).copy()
    if d.min() <= SILENT_EPS:
        return 0.0
    ds = np.sqrt(d)
    coh = mat / np.outer(ds, ds)
    np.fill_diagonal(coh, 1.0)  # exact by construction
    lam = _kernels.principal_eigenvalue(coh)
    return float(np.clip((lam - 1.0) / (m - 1.0), 0.0, 1.0))


@dataclass
class GmscFeatures:
    """Per-frame feature bundle: one value and one trace weight per bin."""

    activation: np.ndarray      # (F,) in [0, 1]
    deactivation: np.ndarray    # (F,) in [0, 1]
    act_traces: np.ndarray      # (F,) whitened power, activation path
    deact_traces: np.ndarray    # (F,) whitened power, deactivation path

    @property
    def combined(self) -> np.ndarray:
        """Activation bins DC..Nyquist, then deactivation bins."""
        return np.concatenate([self.activation, self.deactivation])


def _batch(numerators, references, diag_load, what):
    gamma, trace, bad = _kernels.whiten_gmsc_batch(numerators, references, diag_load)
    if bad >= 0:
        raise NumericError(f"reference not positive definite ({what} path, bin {bad})")
    return gamma, trace


def extract(tracker: CovarianceTracker, diag_load: float | None = None) -> GmscFeatures:
    """Features for the tracker's current frame."""
    if tracker.frames_seen < 1:
        raise ValueError("tracker has seen no frames")
    load = tracker.config.diag_load if diag_load is None else diag_load
    act, act_tr = _batch(
        tracker.recursive, tracker.reference_recursive(), load, "activation"
    )
    current, past = tracker.pair_deactivation()
    deact, deact_tr = _batch(past, current, load, "deactivation")
    return GmscFeatures(act, deact, act_tr, deact_tr)


# ---------------------------------------------------------------------------
# SCF1 feature files: the cross-component contract consumed by the trainer.
# Layout (little-endian):
#   magic "SCF1" | version u32=1 | n_bins u32 | n_frames u32 | n_feat u32
#   | k_max u32 | n_frames*n_feat float32 row-major | n_frames u8 counts
# ---------------------------------------------------------------------------

_SCF_MAGIC = b"SCF1"
_SCF_VERSION = 1
_SCF_HEADER = struct.Struct("<4sIIIII")


def write_feature_file(path, features, counts, n_bins: int, k_max: int) -> None:
    """Write a (T, n_feat) float feature matrix plus per-frame true counts."""
    feats = np.ascontiguousarray(features, dtype=np.float32)
    cnt = np.asarray(counts)
    if feats.ndim != 2:
        raise ValueError("features must be (frames, n_feat)")
    n_frames, n_feat = feats.shape
    if n_feat not in (n_bins, 2 * n_bins):
        raise ValueError(f"n_feat {n_feat} must be n_bins or 2*n_bins ({n_bins})")
    if cnt.shape != (n_frames,):
        raise ValueError("counts length must match frame count")
    if cnt.min(initial=0) < 0 or cnt.max(initial=0) > 255:
        raise ValueError("counts must fit in a byte")
    with open(path, "wb") as fh:
        fh.write(_SCF_HEADER.pack(
            _SCF_MAGIC, _SCF_VERSION, n_bins, n_frames, n_feat, k_max
        ))
        fh.write(feats.tobytes())
        fh.write(cnt.astype(np.uint8).tobytes())


def read_feature_file(path):
    """Read an SCF1 file -> (features (T, n_feat) f32, counts (T,) u8, n_bins, k_max)."""
    with open(path, "rb") as fh:
        head = fh.read(_SCF_HEADER.size)
        if len(head) < _SCF_HEADER.size:
            raise DataFormatError(f"{path}: truncated SCF1 header")
        magic, version, n_bins, n_frames, n_feat, k_max = _SCF_HEADER.unpack(head)
        if magic != _SCF_MAGIC:
            raise DataFormatError(f"{path}: bad magic {magic!r}")
        if version != _SCF_VERSION:
            raise DataFormatError(f"{path}: unsupported SCF version {version}")
        if n_feat not in (n_bins, 2 * n_bins):
            raise DataFormatError(
                f"{path}: n_feat {n_feat} inconsistent with n_bins {n_bins}"
            )
        payload = fh.read(4 * n_frames * n_feat)
        if len(payload) < 4 * n_frames * n_feat:
            raise DataFormatError(f"{path}: truncated feature payload")
        footer = fh.read(n_frames)
        if len(footer) < n_frames:
            raise DataFormatError(f"{path}: truncated count footer")
    feats = np.frombuffer(payload, dtype="<f4").reshape(n_frames, n_feat)
    counts = np.frombuffer(footer, dtype=np.uint8)
    return feats, counts, int(n_bins), int(k_max)
