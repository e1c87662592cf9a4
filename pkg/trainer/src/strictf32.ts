/**
 * Single-precision reference forward passes.
 *
 * The consumer of exported weights computes in 32-bit floats end to end;
 * these mirrors round every intermediate with Math.fround so exported
 * models can be verified against the consumer at tight tolerances. Used
 * for verification and test-set inference, not for training.
 */

import {
  LN_EPS,
  ModelKind,
  TCN_BLOCKS,
  TCN_BOTTLENECK,
  TCN_DILATIONS,
  TCN_HIDDEN,
  TCN_KERNEL,
  TCN_STACKS,
  WeightFile,
  gruHidden,
} from "./scw.js";

const f = Math.fround;

type F32 = Float32Array<ArrayBufferLike>;

function dotRowF32(w: F32, row: number, x: F32): number {
  const base = row * x.length;
  let acc = 0;
  for (let k = 0; k < x.length; k++) acc = f(acc + f(w[base + k] * x[k]));
  return acc;
}

function softmaxF32(logits: F32): F32 {
  let max = -Infinity;
  for (const v of logits) if (v > max) max = v;
  const out = new Float32Array(logits.length);
  let sum = 0;
  for (let i = 0; i < logits.length; i++) {
    out[i] = f(Math.exp(f(logits[i] - max)));
    sum = f(sum + out[i]);
  }
  for (let i = 0; i < out.length; i++) out[i] = f(out[i] / sum);
  return out;
}

/** GRU forward over (T x inputDim) features; returns (T x nClasses) probs. */
export function gruForwardF32(file: WeightFile, features: F32, nFrames: number): F32 {
  const spec = file.spec;
  const h = gruHidden(spec);
  const layers = [0, 1, 2].map((l) => ({
    W: file.tensors.get(`gru.l${l}.W`)!,
    U: file.tensors.get(`gru.l${l}.U`)!,
    b: file.tensors.get(`gru.l${l}.b`)!,
  }));
  const headW = file.tensors.get("head.weight")!;
  const headB = file.tensors.get("head.bias")!;
  const hidden = layers.map(() => new Float32Array(h));
  const probs = new Float32Array(nFrames * spec.nClasses);
  const sigmoid = (v: number) => f(1 / f(1 + f(Math.exp(f(-v)))));
  for (let t = 0; t < nFrames; t++) {
    let input = features.subarray(t * spec.inputDim, (t + 1) * spec.inputDim);
    for (let l = 0; l < layers.length; l++) {
      const { W, U, b } = layers[l];
      const hp = hidden[l];
      const hNew = new Float32Array(h);
      const z = new Float32Array(h);
      const r = new Float32Array(h);
      for (let j = 0; j < h; j++) {
        z[j] = sigmoid(f(f(dotRowF32(W, j, input) + dotRowF32(U, j, hp)) + b[j]));
        r[j] = sigmoid(f(f(dotRowF32(W, h + j, input) + dotRowF32(U, h + j, hp)) + b[h + j]));
      }
      const rh = new Float32Array(h);
      for (let j = 0; j < h; j++) rh[j] = f(r[j] * hp[j]);
      for (let j = 0; j < h; j++) {
        const cpre = f(f(dotRowF32(W, 2 * h + j, input) + dotRowF32(U, 2 * h + j, rh)) + b[2 * h + j]);
        const c = f(Math.tanh(cpre));
        hNew[j] = f(f(f(1 - z[j]) * hp[j]) + f(z[j] * c));
      }
      hidden[l] = hNew;
      input = hNew;
    }
    const logits = new Float32Array(spec.nClasses);
    for (let k = 0; k < spec.nClasses; k++) {
      logits[k] = f(dotRowF32(headW, k, hidden[layers.length - 1]) + headB[k]);
    }
    probs.set(softmaxF32(logits), t * spec.nClasses);
  }
  return probs;
}

/** TCN forward over (T x inputDim) features; returns (T x nClasses) probs. */
export function tcnForwardF32(file: WeightFile, features: F32, nFrames: number): F32 {
  const spec = file.spec;
  const T = nFrames;
  const proj = (src: F32, srcDim: number, w: F32, b: F32, outDim: number) => {
    const out = new Float32Array(T * outDim);
    for (let t = 0; t < T; t++) {
      const x = src.subarray(t * srcDim, (t + 1) * srcDim);
      for (let c = 0; c < outDim; c++) {
        out[t * outDim + c] = f(dotRowF32(w, c, x) + b[c]);
      }
    }
    return out;
  };
  let z: F32 = proj(features, spec.inputDim, file.tensors.get("tcn.in.weight")!,
               file.tensors.get("tcn.in.bias")!, TCN_BOTTLENECK);
  for (let s = 0; s < TCN_STACKS; s++) {
    for (let b = 0; b < TCN_BLOCKS; b++) {
      const pre = `tcn.s${s}.b${b}.`;
      const dilation = TCN_DILATIONS[b];
      let h: F32 = proj(z, TCN_BOTTLENECK, file.tensors.get(pre + "in.weight")!,
                   file.tensors.get(pre + "in.bias")!, TCN_HIDDEN);
      h = preluF32(h, file.tensors.get(pre + "prelu1")![0]);
      h = channelNormF32(h, T, file.tensors.get(pre + "norm1.gain")!, file.tensors.get(pre + "norm1.bias")!);
      h = depthwiseF32(h, T, file.tensors.get(pre + "dw.weight")!, file.tensors.get(pre + "dw.bias")!, dilation);
      h = preluF32(h, file.tensors.get(pre + "prelu2")![0]);
      h = channelNormF32(h, T, file.tensors.get(pre + "norm2.gain")!, file.tensors.get(pre + "norm2.bias")!);
      const zNew = proj(h, TCN_HIDDEN, file.tensors.get(pre + "out.weight")!,
                        file.tensors.get(pre + "out.bias")!, TCN_BOTTLENECK);
      for (let i = 0; i < zNew.length; i++) zNew[i] = f(zNew[i] + z[i]);
      z = zNew;
    }
  }
  const probs = new Float32Array(T * spec.nClasses);
  const headW = file.tensors.get("head.weight")!;
  const headB = file.tensors.get("head.bias")!;
  for (let t = 0; t < T; t++) {
    const logits = new Float32Array(spec.nClasses);
    const x = z.subarray(t * TCN_BOTTLENECK, (t + 1) * TCN_BOTTLENECK);
    for (let k = 0; k < spec.nClasses; k++) logits[k] = f(dotRowF32(headW, k, x) + headB[k]);
    probs.set(softmaxF32(logits), t * spec.nClasses);
  }
  return probs;
}

function preluF32(src: F32, alpha: number): F32 {
  const out = new Float32Array(src.length);
  for (let i = 0; i < src.length; i++) {
    out[i] = src[i] >= 0 ? src[i] : f(alpha * src[i]);
  }
  return out;
}

function channelNormF32(src: F32, T: number, gain: F32, bias: F32): F32 {
  const C = src.length / T;
  const out = new Float32Array(src.length);
  for (let t = 0; t < T; t++) {
    const base = t * C;
    let mu = 0;
    for (let c = 0; c < C; c++) mu = f(mu + src[base + c]);
    mu = f(mu / C);
    let varAcc = 0;
    for (let c = 0; c < C; c++) {
      const d = f(src[base + c] - mu);
      varAcc = f(varAcc + f(d * d));
    }
    const denom = f(Math.sqrt(f(f(varAcc / C) + f(LN_EPS))));
    for (let c = 0; c < C; c++) {
      out[base + c] = f(f(f(f(src[base + c] - mu) / denom) * gain[c]) + bias[c]);
    }
  }
  return out;
}

function depthwiseF32(src: F32, T: number, kernel: F32, bias: F32, dilation: number): F32 {
  const C = src.length / T;
  const out = new Float32Array(src.length);
  for (let t = 0; t < T; t++) {
    const base = t * C;
    for (let c = 0; c < C; c++) {
      let acc = 0;
      for (let j = 0; j < TCN_KERNEL; j++) {
        const ts = t - (TCN_KERNEL - 1 - j) * dilation;
        if (ts < 0) continue;
        acc = f(acc + f(kernel[c * TCN_KERNEL + j] * src[ts * C + c]));
      }
      out[base + c] = f(acc + bias[c]);
    }
  }
  return out;
}

export function forwardF32(file: WeightFile, features: F32, nFrames: number): F32 {
  return file.spec.kind === "gru"
    ? gruForwardF32(file, features, nFrames)
    : tcnForwardF32(file, features, nFrames);
}
