"""Causal framewise count classification with portable serialized weights.

Two compact architectures over per-frame coherence feature vectors:

* a 3-layer GRU (hidden size = half the input dimension) with a linear
  head, stepped frame by frame with persistent hidden state, and
* a causal TCN: 1x1 projection to a 128-wide bottleneck, 3 stacks of 3
  residual blocks (dilations 1, 2, 4; kernel 3; 256-wide depthwise convs;
  scalar PReLU activations; per-frame channel normalization), then a 1x1
  head. Receptive field: 1 + 3 * (2*1 + 2*2 + 2*4) = 43 frames.

Weights travel in the little-endian "SCW1" container. All inference is
32-bit float end to end.

GRU recurrence (gate blocks stacked in z, r, h order inside each tensor):
    z = sigmoid(W_z x + U_z h + b_z)
    r = sigmoid(W_r x + U_r h + b_r)
    h~ = tanh(W_h x + U_h (r * h) + b_h)
    h' = (1 - z) * h + z * h~

Depthwise kernel tap order is oldest to newest: [t-2d, t-d, t].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError

GRU_LAYERS = 3
TCN_STACKS = 3
TCN_BLOCKS_PER_STACK = 3
TCN_KERNEL = 3
TCN_BOTTLENECK = 128
TCN_HIDDEN = 256
TCN_DILATIONS = (1, 2, 4)
LN_EPS = np.float32(1e-5)


@dataclass(frozen=True)
class ModelSpec:
    kind: str                # "gru" | "tcn"
    input_dim: int
    n_classes: int = 5

    def __post_init__(self):
        if self.kind not in ("gru", "tcn"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")

    @property
    def gru_hidden(self) -> int:
        return self.input_dim // 2

    @property
    def receptive_field(self) -> int:
        return 1 + TCN_STACKS * sum(d * (TCN_KERNEL - 1) for d in TCN_DILATIONS)


def expected_tensor_shapes(spec: ModelSpec) -> dict:
    """Canonical tensor names -> shapes, in canonical file order."""
    shapes: dict = {}
    if spec.kind == "gru":
        h = spec.gru_hidden
        for layer in range(GRU_LAYERS):
            d_in = spec.input_dim if layer == 0 else h
            shapes[f"gru.l{layer}.W"] = (3 * h, d_in)
            shapes[f"gru.l{layer}.U"] = (3 * h, h)
            shapes[f"gru.l{layer}.b"] = (3 * h,)
        shapes["head.weight"] = (spec.n_classes, h)
        shapes["head.bias"] = (spec.n_classes,)
    else:
        shapes["tcn.in.weight"] = (TCN_BOTTLENECK, spec.input_dim)
        shapes["tcn.in.bias"] = (TCN_BOTTLENECK,)
        for s in range(TCN_STACKS):
            for b in range(TCN_BLOCKS_PER_STACK):
                p = f"tcn.s{s}.b{b}."
                shapes[p + "in.weight"] = (TCN_HIDDEN, TCN_BOTTLENECK)
                shapes[p + "in.bias"] = (TCN_HIDDEN,)
                shapes[p + "prelu1"] = (1,)
                shapes[p + "norm1.gain"] = (TCN_HIDDEN,)
                shapes[p + "norm1.bias"] = (TCN_HIDDEN,)
                shapes[p + "dw.weight"] = (TCN_HIDDEN, TCN_KERNEL)
                shapes[p + "dw.bias"] = (TCN_HIDDEN,)
                shapes[p + "prelu2"] = (1,)
                shapes[p + "norm2.gain"] = (TCN_HIDDEN,)
                shapes[p + "norm2.bias"] = (TCN_HIDDEN,)
                shapes[p + "out.weight"] = (TCN_BOTTLENECK, TCN_HIDDEN)
                shapes[p + "out.bias"] = (TCN_BOTTLENECK,)
        shapes["head.weight"] = (spec.n_classes, TCN_BOTTLENECK)
        shapes["head.bias"] = (spec.n_classes,)
    return shapes


@dataclass
class CountModel:
    spec: ModelSpec
    tensors: dict  # name -> float32 ndarray

    def __post_init__(self):
        expected = expected_tensor_shapes(self.spec)
        for name, shape in expected.items():
            if name not in self.tensors:
                raise DataFormatError(f"missing tensor {name}")
            got = self.tensors[name]
            if got.shape != shape:
                raise DataFormatError(
                    f"tensor {name}: shape {got.shape} does not match expected {shape}"
                )
            if not np.isfinite(got).all():
                raise DataFormatError(f"tensor {name}: non-finite values")
        extra = set(self.tensors) - set(expected)
        if extra:
            raise DataFormatError(f"unexpected tensors: {sorted(extra)}")


# ---------------------------------------------------------------------------
# SCW1 container.
# Header: magic "SCW1" | version u32=1 | kind u8 (0 gru, 1 tcn)
#         | input_dim u32 | n_classes u32 | tensor_count u32
# Per tensor: name_len u16 | name ascii | ndim u8 | dims u32[ndim]
#             | float32 data, row-major.
# Writers emit canonical order; readers look tensors up by name.
# ---------------------------------------------------------------------------

_SCW_MAGIC = b"SCW1"
_SCW_VERSION = 1
_KIND_CODE = {"gru": 0, "tcn": 1}
_KIND_NAME = {0: "gru", 1: "tcn"}


def save_weights(path, model: CountModel) -> None:
    spec = model.spec
    with open(path, "wb") as fh:
        fh.write(_SCW_MAGIC)
        fh.write(struct.pack("<IBII", _SCW_VERSION, _KIND_CODE[spec.kind],
                             spec.input_dim, spec.n_classes))
        names = list(expected_tensor_shapes(spec))
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            data = np.ascontiguousarray(model.tensors[name], dtype=np.float32)
            raw = name.encode("ascii")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def load_weights(path) -> CountModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _SCW_MAGIC:
        raise DataFormatError(f"{path}: bad magic {blob[:4]!r}")
    try:
        version, kind_code, input_dim, n_classes = struct.unpack_from("<IBII", blob, 4)
        offset = 4 + struct.calcsize("<IBII")
        if version != _SCW_VERSION:
            raise DataFormatError(f"{path}: unsupported SCW version {version}")
        if kind_code not in _KIND_NAME:
            raise DataFormatError(f"{path}: unknown model kind code {kind_code}")
        (count,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset:offset + name_len].decode("ascii")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            dims = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            n_vals = int(np.prod(dims)) if ndim else 1
            data = np.frombuffer(blob, dtype="<f4", count=n_vals, offset=offset)
            offset += 4 * n_vals
            tensors[name] = data.reshape(dims).copy()
    except (struct.error, ValueError) as exc:
        raise DataFormatError(f"{path}: truncated or corrupt SCW1 file ({exc})") from exc
    spec = ModelSpec(kind=_KIND_NAME[kind_code], input_dim=input_dim,
                     n_classes=n_classes)
    return CountModel(spec=spec, tensors=tensors)


def random_model(spec: ModelSpec, rng, scale: float = 1.0) -> CountModel:
    """Valid random weights (fan-in scaled); used for fixtures and probes."""
    tensors = {}
    for name, shape in expected_tensor_shapes(spec).items():
        if name.endswith("prelu1") or name.endswith("prelu2"):
            tensors[name] = np.full(shape, 0.25, dtype=np.float32)
        elif ".norm" in name and name.endswith("gain"):
            tensors[name] = np.ones(shape, dtype=np.float32)
        elif name.endswith(".bias") or name.endswith(".b"):
            tensors[name] = np.zeros(shape, dtype=np.float32)
        else:
            fan_in = shape[-1] if len(shape) > 1 else 1
            tensors[name] = (
                scale / np.sqrt(fan_in) * rng.standard_normal(shape)
            ).astype(np.float32)
    return CountModel(spec=spec, tensors=tensors)


# ---------------------------------------------------------------------------
# Shared math.
# ---------------------------------------------------------------------------

def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float32)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def argmax_count(probs) -> int:
    """Most likely class; ties resolve to the smallest index."""
    p = np.asarray(probs)
    if p.size == 0:
        raise ValueError("empty probability vector")
    if abs(float(p.sum()) - 1.0) > 1e-6:
        raise ValueError(f"probabilities sum to {p.sum()}, not 1")
    return int(np.argmax(p))


def _sigmoid(x):
    return np.float32(1.0) / (np.float32(1.0) + np.exp(-x))


def gru_layer_step(w, u, b, x, h):
    """One step of one GRU layer. Gate blocks in z, r, h order."""
    n = h.shape[-1]
    wx = w @ x + b
    uh = u[: 2 * n] @ h
    z = _sigmoid(wx[:n] + uh[:n])
    r = _sigmoid(wx[n:2 * n] + uh[n:2 * n])
    cand = np.tanh(wx[2 * n:] + u[2 * n:] @ (r * h))
    return (np.float32(1.0) - z) * h + z * cand


class GruRunner:
    """Streaming GRU inference with persistent per-layer hidden state."""

    def __init__(self, model: CountModel):
        if model.spec.kind != "gru":
            raise ValueError("model is not a GRU")
        self.spec = model.spec
        self.layers = [
            (
                model.tensors[f"gru.l{i}.W"],
                model.tensors[f"gru.l{i}.U"],
                model.tensors[f"gru.l{i}.b"],
            )
            for i in range(GRU_LAYERS)
        ]
        self.head_w = model.tensors["head.weight"]
        self.head_b = model.tensors["head.bias"]
        self.reset()

    def reset(self) -> None:
        h = self.spec.gru_hidden
        self.hidden = [np.zeros(h, dtype=np.float32) for _ in range(GRU_LAYERS)]

    def step(self, x) -> np.ndarray:
        """Advance one frame; returns class probabilities."""
        a = np.asarray(x, dtype=np.float32)
        if a.shape != (self.spec.input_dim,):
            raise ValueError(
                f"input shape {a.shape} does not match input_dim {self.spec.input_dim}"
            )
        for i, (w, u, b) in enumerate(self.layers):
            self.hidden[i] = gru_layer_step(w, u, b, a, self.hidden[i])
            a = self.hidden[i]
        return softmax(self.head_w @ a + self.head_b)

    def forward(self, x_seq) -> np.ndarray:
        """Whole sequence (T, input_dim) -> (T, n_classes), state reset first."""
        self.reset()
        xs = np.asarray(x_seq, dtype=np.float32)
        out = np.empty((xs.shape[0], self.spec.n_classes), dtype=np.float32)
        for t in range(xs.shape[0]):
            out[t] = self.step(xs[t])
        return out


# ---------------------------------------------------------------------------
# TCN.
# ---------------------------------------------------------------------------

def _prelu(x, a):
    return np.where(x >= 0, x, np.float32(a) * x)


def _channel_norm(x, gain, bias):
    """Normalize across channels independently at every frame (causal-safe)."""
    mu = x.mean(axis=-1, keepdims=True)
    var = np.square(x - mu).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS) * gain + bias


def _causal_depthwise(x, kernel, bias, dilation):
    """y[t, c] = sum_j kernel[c, j] * x[t - (K-1-j)*d, c], zeros before start."""
    t_len, ch = x.shape
    pad = (TCN_KERNEL - 1) * dilation
    xp = np.vstack([np.zeros((pad, ch), dtype=np.float32), x])
    y = np.zeros_like(x)
    for j in range(TCN_KERNEL):
        y += kernel[:, j] * xp[j * dilation:j * dilation + t_len]
    return y + bias


def tcn_forward(model: CountModel, x_seq) -> np.ndarray:
    """Whole-sequence causal forward: (T, input_dim) -> (T, n_classes)."""
    if model.spec.kind != "tcn":
        raise ValueError("model is not a TCN")
    xs = np.asarray(x_seq, dtype=np.float32)
    if xs.ndim != 2 or xs.shape[1] != model.spec.input_dim:
        raise ValueError(
            f"input shape {xs.shape} does not match input_dim {model.spec.input_dim}"
        )
    ten = model.tensors
    z = xs @ ten["tcn.in.weight"].T + ten["tcn.in.bias"]
    for s in range(TCN_STACKS):
        for b, dilation in enumerate(TCN_DILATIONS):
            p = f"tcn.s{s}.b{b}."
            h = z @ ten[p + "in.weight"].T + ten[p + "in.bias"]
            h = _prelu(h, ten[p + "prelu1"][0])
            h = _channel_norm(h, ten[p + "norm1.gain"], ten[p + "norm1.bias"])
            h = _causal_depthwise(h, ten[p + "dw.weight"], ten[p + "dw.bias"], dilation)
            h = _prelu(h, ten[p + "prelu2"][0])
            h = _channel_norm(h, ten[p + "norm2.gain"], ten[p + "norm2.bias"])
            z = z + h @ ten[p + "out.weight"].T + ten[p + "out.bias"]
    logits = z @ ten["head.weight"].T + ten["head.bias"]
    return softmax(logits)


class TcnStream:
    """Streaming TCN inference over a rolling receptive-field window."""

    def __init__(self, model: CountModel):
        if model.spec.kind != "tcn":
            raise ValueError("model is not a TCN")
        self.model = model
        rf = model.spec.receptive_field
        self.window = np.zeros((rf, model.spec.input_dim), dtype=np.float32)
        self.frames_seen = 0

    def step(self, x) -> np.ndarray:
        """Advance one frame; returns class probabilities for that frame."""
        self.window[:-1] = self.window[1:]
        self.window[-1] = np.asarray(x, dtype=np.float32)
        self.frames_seen += 1
        # Feed only frames actually seen: pre-stream history must enter as
        # conv-level zero padding, not as explicit zero input frames.
        n = min(self.frames_seen, self.window.shape[0])
        return tcn_forward(self.model, self.window[-n:])[-1]
