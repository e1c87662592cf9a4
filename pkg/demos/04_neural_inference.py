"""Neural count estimation over serialized weights.

Extracts combined features from one scene into the SCF1 format, builds
random-weight GRU and TCN models (stand-ins for trained SCW1 files, which
the trainer package produces), and streams the features through both,
showing the causal framewise class probabilities.
"""

import tempfile
from pathlib import Path

import numpy as np

from sourcecount import (
    GruRunner,
    ModelSpec,
    RunConfig,
    SceneConfig,
    TcnStream,
    feature_matrix,
    generate_scene,
    load_weights,
    random_model,
    save_weights,
)

rng = np.random.default_rng(0)
config = RunConfig.wired()
scene = generate_scene(SceneConfig(n_channels=4, duration=6.0, seed=8))
feats = feature_matrix(scene.samples, config)
print(f"features: {feats.shape[0]} frames x {feats.shape[1]} "
      f"(activation + deactivation bins)")

workdir = Path(tempfile.mkdtemp())
for kind in ("gru", "tcn"):
    spec = ModelSpec(kind=kind, input_dim=feats.shape[1])
    path = workdir / f"{kind}.scw"
    save_weights(path, random_model(spec, rng))
    model = load_weights(path)
    n_params = sum(t.size for t in model.tensors.values())
    if kind == "gru":
        runner = GruRunner(model)
        probs = np.stack([runner.step(x) for x in feats])
    else:
        stream = TcnStream(model)
        probs = np.stack([stream.step(x) for x in feats])
    counts = probs.argmax(axis=1)
    print(f"\n{kind.upper()} ({n_params:,} parameters, untrained):")
    print(f"  probabilities sum to 1 within {np.abs(probs.sum(1) - 1).max():.1e}")
    print(f"  framewise count histogram: {np.bincount(counts, minlength=5)}")
    print(f"  last frame probs: {np.round(probs[-1], 3)}")

print("\n(train real weights with the trainer package: see trainer/README.md)")
