/**
 * Causal TCN forward/backward over one sequence.
 *
 * Architecture (fixed by the weight-file contract): 1x1 projection to a
 * 128-wide bottleneck, 3 stacks x 3 residual blocks with dilations 1, 2, 4,
 * each block = 1x1 up to 256 -> scalar PReLU -> per-frame channel norm ->
 * causal dilated depthwise conv (kernel 3, taps oldest to newest) -> PReLU
 * -> channel norm -> 1x1 back to 128 -> residual add; then a 1x1 head.
 */

import { Mat, zeros, gemmNT, gemmNN, gemmTN } from "./mat.js";
import {
  LN_EPS,
  ModelSpec,
  TCN_BLOCKS,
  TCN_BOTTLENECK,
  TCN_DILATIONS,
  TCN_HIDDEN,
  TCN_KERNEL,
  TCN_STACKS,
  WeightFile,
  expectedShapes,
} from "./scw.js";
import { Rng } from "./rng.js";

export interface TcnParams {
  spec: ModelSpec;
  tensors: Map<string, Float64Array>;
  shapes: Map<string, number[]>;
}

export function initTcn(spec: ModelSpec, rng: Rng): TcnParams {
  const shapes = expectedShapes(spec);
  const tensors = new Map<string, Float64Array>();
  for (const [name, shape] of shapes) {
    const n = shape.reduce((a, b) => a * b, 1);
    const buf = new Float64Array(n);
    if (name.endsWith("prelu1") || name.endsWith("prelu2")) {
      buf.fill(0.25);
    } else if (name.includes("norm") && name.endsWith("gain")) {
      buf.fill(1.0);
    } else if (!name.endsWith("bias") && !name.endsWith(".b")) {
      const fanIn = shape.length > 1 ? shape[shape.length - 1] : 1;
      const scale = 1.0 / Math.sqrt(fanIn);
      for (let i = 0; i < n; i++) buf[i] = rng.uniform(-scale, scale);
    }
    tensors.set(name, buf);
  }
  return { spec, tensors, shapes };
}

export function tcnToWeightFile(p: TcnParams): WeightFile {
  const tensors = new Map<string, Float32Array>();
  for (const [name, buf] of p.tensors) tensors.set(name, Float32Array.from(buf));
  return { spec: p.spec, tensors };
}

export function tcnFromWeightFile(file: WeightFile): TcnParams {
  const shapes = expectedShapes(file.spec);
  const tensors = new Map<string, Float64Array>();
  for (const [name] of shapes) {
    tensors.set(name, Float64Array.from(file.tensors.get(name)!));
  }
  return { spec: file.spec, tensors, shapes };
}

function asMat(p: TcnParams, name: string): Mat {
  const shape = p.shapes.get(name)!;
  return { rows: shape[0], cols: shape[1] ?? 1, data: p.tensors.get(name)! };
}

interface BlockCache {
  input: Mat; // bottleneck stream entering the block (T x 128)
  h1: Mat; // pre-PReLU1 (T x 256)
  xhat1: Mat;
  istd1: Float64Array;
  n1: Mat; // conv input (T x 256)
  y: Mat; // pre-PReLU2
  xhat2: Mat;
  istd2: Float64Array;
  n2: Mat;
}

export interface TcnCache {
  x: Mat; // input sequence (T x inputDim)
  blocks: BlockCache[];
  top: Mat; // bottleneck stream entering the head
}

function prelu(src: Mat, alpha: number): Mat {
  const out = zeros(src.rows, src.cols);
  for (let i = 0; i < src.data.length; i++) {
    const v = src.data[i];
    out.data[i] = v >= 0 ? v : alpha * v;
  }
  return out;
}

function channelNorm(src: Mat, gain: Float64Array, bias: Float64Array) {
  const T = src.rows, C = src.cols;
  const xhat = zeros(T, C);
  const out = zeros(T, C);
  const istd = new Float64Array(T);
  for (let t = 0; t < T; t++) {
    const base = t * C;
    let mu = 0;
    for (let c = 0; c < C; c++) mu += src.data[base + c];
    mu /= C;
    let varAcc = 0;
    for (let c = 0; c < C; c++) {
      const d = src.data[base + c] - mu;
      varAcc += d * d;
    }
    const is = 1 / Math.sqrt(varAcc / C + LN_EPS);
    istd[t] = is;
    for (let c = 0; c < C; c++) {
      const xh = (src.data[base + c] - mu) * is;
      xhat.data[base + c] = xh;
      out.data[base + c] = gain[c] * xh + bias[c];
    }
  }
  return { out, xhat, istd };
}

function causalDepthwise(src: Mat, kernel: Float64Array, bias: Float64Array, dilation: number): Mat {
  const T = src.rows, C = src.cols;
  const out = zeros(T, C);
  for (let t = 0; t < T; t++) {
    const base = t * C;
    for (let j = 0; j < TCN_KERNEL; j++) {
      const ts = t - (TCN_KERNEL - 1 - j) * dilation;
      if (ts < 0) continue;
      const sb = ts * C;
      for (let c = 0; c < C; c++) out.data[base + c] += kernel[c * TCN_KERNEL + j] * src.data[sb + c];
    }
    for (let c = 0; c < C; c++) out.data[base + c] += bias[c];
  }
  return out;
}

/** Forward over a whole sequence; returns logits (T x C). */
export function tcnForward(p: TcnParams, x: Mat, cache?: TcnCache): Mat {
  const T = x.rows;
  let z = zeros(T, TCN_BOTTLENECK);
  for (let t = 0; t < T; t++) z.data.set(p.tensors.get("tcn.in.bias")!, t * TCN_BOTTLENECK);
  gemmNT(x, asMat(p, "tcn.in.weight"), z);
  if (cache) {
    cache.x = x;
    cache.blocks = [];
  }
  for (let s = 0; s < TCN_STACKS; s++) {
    for (let b = 0; b < TCN_BLOCKS; b++) {
      const pre = `tcn.s${s}.b${b}.`;
      const dilation = TCN_DILATIONS[b];
      const h1 = zeros(T, TCN_HIDDEN);
      for (let t = 0; t < T; t++) h1.data.set(p.tensors.get(pre + "in.bias")!, t * TCN_HIDDEN);
      gemmNT(z, asMat(p, pre + "in.weight"), h1);
      const a1 = prelu(h1, p.tensors.get(pre + "prelu1")![0]);
      const norm1 = channelNorm(a1, p.tensors.get(pre + "norm1.gain")!, p.tensors.get(pre + "norm1.bias")!);
      const y = causalDepthwise(norm1.out, p.tensors.get(pre + "dw.weight")!, p.tensors.get(pre + "dw.bias")!, dilation);
      const a2 = prelu(y, p.tensors.get(pre + "prelu2")![0]);
      const norm2 = channelNorm(a2, p.tensors.get(pre + "norm2.gain")!, p.tensors.get(pre + "norm2.bias")!);
      // residual add: zNew = z + out.bias + n2 Wout^T
      const zNew = zeros(T, TCN_BOTTLENECK);
      const outBias = p.tensors.get(pre + "out.bias")!;
      for (let t = 0; t < T; t++) {
        const base = t * TCN_BOTTLENECK;
        for (let c = 0; c < TCN_BOTTLENECK; c++) {
          zNew.data[base + c] = z.data[base + c] + outBias[c];
        }
      }
      gemmNT(norm2.out, asMat(p, pre + "out.weight"), zNew);
      if (cache) {
        cache.blocks.push({
          input: z,
          h1,
          xhat1: norm1.xhat,
          istd1: norm1.istd,
          n1: norm1.out,
          y,
          xhat2: norm2.xhat,
          istd2: norm2.istd,
          n2: norm2.out,
        });
      }
      z = zNew;
    }
  }
  if (cache) cache.top = z;
  const logits = zeros(T, p.spec.nClasses);
  for (let t = 0; t < T; t++) logits.data.set(p.tensors.get("head.bias")!, t * p.spec.nClasses);
  gemmNT(z, asMat(p, "head.weight"), logits);
  return logits;
}

export type TcnGrads = Map<string, Float64Array>;

export function tcnZeroGrads(p: TcnParams): TcnGrads {
  const grads: TcnGrads = new Map();
  for (const [name, buf] of p.tensors) grads.set(name, new Float64Array(buf.length));
  return grads;
}

function channelNormBackward(
  dOut: Mat,
  xhat: Mat,
  istd: Float64Array,
  gain: Float64Array,
  dGain: Float64Array,
  dBias: Float64Array,
): Mat {
  const T = dOut.rows, C = dOut.cols;
  const dx = zeros(T, C);
  for (let t = 0; t < T; t++) {
    const base = t * C;
    let sum1 = 0, sum2 = 0;
    for (let c = 0; c < C; c++) {
      const dy = dOut.data[base + c];
      const xh = xhat.data[base + c];
      dGain[c] += dy * xh;
      dBias[c] += dy;
      const dxh = dy * gain[c];
      sum1 += dxh;
      sum2 += dxh * xh;
    }
    for (let c = 0; c < C; c++) {
      const dxh = dOut.data[base + c] * gain[c];
      dx.data[base + c] = istd[t] * (dxh - (sum1 + xhat.data[base + c] * sum2) / C);
    }
  }
  return dx;
}

function preluBackward(dOut: Mat, preAct: Mat, alpha: number, dAlpha: Float64Array): Mat {
  const dx = zeros(dOut.rows, dOut.cols);
  let da = 0;
  for (let i = 0; i < dOut.data.length; i++) {
    const v = preAct.data[i];
    if (v >= 0) {
      dx.data[i] = dOut.data[i];
    } else {
      dx.data[i] = dOut.data[i] * alpha;
      da += dOut.data[i] * v;
    }
  }
  dAlpha[0] += da;
  return dx;
}

/** Backward over a whole sequence; accumulates into grads. */
export function tcnBackward(p: TcnParams, cache: TcnCache, dLogits: Mat, grads: TcnGrads): void {
  const T = dLogits.rows;
  gemmTN(dLogits, cache.top, {
    rows: p.spec.nClasses,
    cols: TCN_BOTTLENECK,
    data: grads.get("head.weight")!,
  });
  const dHeadB = grads.get("head.bias")!;
  for (let t = 0; t < T; t++) {
    for (let k = 0; k < p.spec.nClasses; k++) dHeadB[k] += dLogits.data[t * p.spec.nClasses + k];
  }
  let dZ = zeros(T, TCN_BOTTLENECK);
  gemmNN(dLogits, asMat(p, "head.weight"), dZ);

  for (let s = TCN_STACKS - 1; s >= 0; s--) {
    for (let b = TCN_BLOCKS - 1; b >= 0; b--) {
      const pre = `tcn.s${s}.b${b}.`;
      const dilation = TCN_DILATIONS[b];
      const blk = cache.blocks[s * TCN_BLOCKS + b];
      // out projection
      const dN2 = zeros(T, TCN_HIDDEN);
      gemmNN(dZ, asMat(p, pre + "out.weight"), dN2);
      gemmTN(dZ, blk.n2, {
        rows: TCN_BOTTLENECK,
        cols: TCN_HIDDEN,
        data: grads.get(pre + "out.weight")!,
      });
      const dOutB = grads.get(pre + "out.bias")!;
      for (let t = 0; t < T; t++) {
        for (let c = 0; c < TCN_BOTTLENECK; c++) dOutB[c] += dZ.data[t * TCN_BOTTLENECK + c];
      }
      // norm2 <- prelu2 <- conv
      const dA2 = channelNormBackward(
        dN2, blk.xhat2, blk.istd2, p.tensors.get(pre + "norm2.gain")!,
        grads.get(pre + "norm2.gain")!, grads.get(pre + "norm2.bias")!,
      );
      const dY = preluBackward(dA2, blk.y, p.tensors.get(pre + "prelu2")![0], grads.get(pre + "prelu2")!);
      // depthwise conv
      const dN1 = zeros(T, TCN_HIDDEN);
      const kernel = p.tensors.get(pre + "dw.weight")!;
      const dKernel = grads.get(pre + "dw.weight")!;
      const dDwB = grads.get(pre + "dw.bias")!;
      for (let t = 0; t < T; t++) {
        const base = t * TCN_HIDDEN;
        for (let j = 0; j < TCN_KERNEL; j++) {
          const ts = t - (TCN_KERNEL - 1 - j) * dilation;
          if (ts < 0) continue;
          const sb = ts * TCN_HIDDEN;
          for (let c = 0; c < TCN_HIDDEN; c++) {
            const dy = dY.data[base + c];
            dN1.data[sb + c] += kernel[c * TCN_KERNEL + j] * dy;
            dKernel[c * TCN_KERNEL + j] += blk.n1.data[sb + c] * dy;
          }
        }
        for (let c = 0; c < TCN_HIDDEN; c++) dDwB[c] += dY.data[base + c];
      }
      // norm1 <- prelu1 <- in projection
      const dA1 = channelNormBackward(
        dN1, blk.xhat1, blk.istd1, p.tensors.get(pre + "norm1.gain")!,
        grads.get(pre + "norm1.gain")!, grads.get(pre + "norm1.bias")!,
      );
      const dH1 = preluBackward(dA1, blk.h1, p.tensors.get(pre + "prelu1")![0], grads.get(pre + "prelu1")!);
      gemmTN(dH1, blk.input, {
        rows: TCN_HIDDEN,
        cols: TCN_BOTTLENECK,
        data: grads.get(pre + "in.weight")!,
      });
      const dInB = grads.get(pre + "in.bias")!;
      for (let t = 0; t < T; t++) {
        for (let c = 0; c < TCN_HIDDEN; c++) dInB[c] += dH1.data[t * TCN_HIDDEN + c];
      }
      const dZprev = zeros(T, TCN_BOTTLENECK);
      gemmNN(dH1, asMat(p, pre + "in.weight"), dZprev);
      for (let i = 0; i < dZ.data.length; i++) dZprev.data[i] += dZ.data[i]; // residual
      dZ = dZprev;
    }
  }
  gemmTN(dZ, cache.x, {
    rows: TCN_BOTTLENECK,
    cols: p.spec.inputDim,
    data: grads.get("tcn.in.weight")!,
  });
  const dInB = grads.get("tcn.in.bias")!;
  for (let t = 0; t < T; t++) {
    for (let c = 0; c < TCN_BOTTLENECK; c++) dInB[c] += dZ.data[t * TCN_BOTTLENECK + c];
  }
}

export function emptyTcnCache(): TcnCache {
  return { x: zeros(0, 0), blocks: [], top: zeros(0, 0) };
}
