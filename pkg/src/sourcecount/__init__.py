"""Online sound-source counting from multichannel audio.

Framewise pipeline: STFT -> per-bin spatial covariance tracking ->
whitened-coherence features -> threshold detector or compact neural
count classifiers (GRU / causal TCN).
"""

from .covariance import CovarianceTracker, CovTrackerConfig
from .detector import (
    DetectorConfig,
    ThresholdDetector,
    broadband,
    count_trajectory,
    default_warmup_frames,
    smooth_curve,
)
from .errors import DataFormatError, NumericError
from .features import (
    GmscFeatures,
    WhitenedMatrix,
    extract,
    gmsc,
    read_feature_file,
    whiten,
    write_feature_file,
)
from .inference import (
    CountModel,
    GruRunner,
    ModelSpec,
    TcnStream,
    argmax_count,
    expected_tensor_shapes,
    load_weights,
    random_model,
    save_weights,
    softmax,
    tcn_forward,
)
from .metrics import EvalReport, accuracy, evaluate_scenes, grid_search_thresholds, mae
from .pipeline import RunConfig, detect_stream, feature_matrix, iter_features
from .scene import (
    Scene,
    SceneConfig,
    SceneTruth,
    SourceSpec,
    draw_activity_pattern,
    generate_scene,
    ground_truth_count,
    read_truth_sidecar,
    render_component,
    source_dry_signal,
    write_truth_sidecar,
)
from .stft import SpectralFrame, StftConfig, analyze, analyze_array, frame_count, sqrt_hann_window
from .wavio import read_wav, write_wav

__version__ = "0.1.0"
