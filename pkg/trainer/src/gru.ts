/**
 * Batched GRU forward/backward in plain typed-array math.
 *
 * Recurrence (gate blocks stacked z, r, h in each parameter tensor, matching
 * the weight-file contract):
 *
 *   z = sig(W_z x + U_z h + b_z)
 *   r = sig(W_r x + U_r h + b_r)
 *   c = tanh(W_h x + U_h (r*h) + b_h)
 *   h' = (1 - z)*h + z*c
 *
 * Sequences are processed in lockstep batches (B x dim matrices per frame).
 * Training uses truncated backpropagation over fixed-length chunks with the
 * hidden state carried across chunk boundaries, so the forward pass is exact
 * over full sequences and only gradient flow is truncated.
 */

import { Mat, zeros, gemmNT, gemmNN, gemmTN, rowBlock } from "./mat.js";
import { GRU_LAYERS, ModelSpec, WeightFile, expectedShapes, gruHidden } from "./scw.js";
import { Rng } from "./rng.js";

export interface GruLayer {
  W: Mat; // (3h x dIn)
  U: Mat; // (3h x h)
  b: Float64Array; // (3h)
}

export interface GruParams {
  spec: ModelSpec;
  hidden: number;
  layers: GruLayer[];
  headW: Mat; // (C x h)
  headB: Float64Array;
}

export function initGru(spec: ModelSpec, rng: Rng): GruParams {
  const h = gruHidden(spec);
  const layers: GruLayer[] = [];
  for (let l = 0; l < GRU_LAYERS; l++) {
    const dIn = l === 0 ? spec.inputDim : h;
    layers.push({
      W: randMat(3 * h, dIn, rng),
      U: randMat(3 * h, h, rng),
      b: new Float64Array(3 * h),
    });
  }
  return {
    spec,
    hidden: h,
    layers,
    headW: randMat(spec.nClasses, h, rng),
    headB: new Float64Array(spec.nClasses),
  };
}

function randMat(rows: number, cols: number, rng: Rng): Mat {
  const m = zeros(rows, cols);
  const scale = 1.0 / Math.sqrt(cols);
  for (let i = 0; i < m.data.length; i++) m.data[i] = rng.uniform(-scale, scale);
  return m;
}

export function gruToWeightFile(p: GruParams): WeightFile {
  const tensors = new Map<string, Float32Array>();
  p.layers.forEach((layer, l) => {
    tensors.set(`gru.l${l}.W`, Float32Array.from(layer.W.data));
    tensors.set(`gru.l${l}.U`, Float32Array.from(layer.U.data));
    tensors.set(`gru.l${l}.b`, Float32Array.from(layer.b));
  });
  tensors.set("head.weight", Float32Array.from(p.headW.data));
  tensors.set("head.bias", Float32Array.from(p.headB));
  return { spec: p.spec, tensors };
}

export function gruFromWeightFile(file: WeightFile): GruParams {
  const h = gruHidden(file.spec);
  const layers: GruLayer[] = [];
  for (let l = 0; l < GRU_LAYERS; l++) {
    const dIn = l === 0 ? file.spec.inputDim : h;
    layers.push({
      W: { rows: 3 * h, cols: dIn, data: Float64Array.from(file.tensors.get(`gru.l${l}.W`)!) },
      U: { rows: 3 * h, cols: h, data: Float64Array.from(file.tensors.get(`gru.l${l}.U`)!) },
      b: Float64Array.from(file.tensors.get(`gru.l${l}.b`)!),
    });
  }
  return {
    spec: file.spec,
    hidden: h,
    layers,
    headW: {
      rows: file.spec.nClasses,
      cols: h,
      data: Float64Array.from(file.tensors.get("head.weight")!),
    },
    headB: Float64Array.from(file.tensors.get("head.bias")!),
  };
}

export interface GruGrads {
  layers: GruLayer[];
  headW: Mat;
  headB: Float64Array;
}

export function zeroGrads(p: GruParams): GruGrads {
  return {
    layers: p.layers.map((l) => ({
      W: zeros(l.W.rows, l.W.cols),
      U: zeros(l.U.rows, l.U.cols),
      b: new Float64Array(l.b.length),
    })),
    headW: zeros(p.headW.rows, p.headW.cols),
    headB: new Float64Array(p.headB.length),
  };
}

/** Per-frame, per-layer activations cached for the backward pass. */
export interface StepCache {
  hPrev: Mat[]; // per layer (B x h)
  z: Mat[];
  r: Mat[];
  c: Mat[];
  x: Mat[]; // layer inputs (x[0] is the data frame)
}

function sigmoid(v: number): number {
  return 1 / (1 + Math.exp(-v));
}

/**
 * One frame for a batch: consumes x (B x inputDim), updates hidden (per
 * layer, B x h, in place), returns logits (B x C). When cache is given the
 * intermediates needed by gruBackwardStep are recorded.
 */
export function gruStep(
  p: GruParams,
  x: Mat,
  hidden: Mat[],
  logits: Mat,
  cache?: StepCache,
): void {
  const B = x.rows;
  const h = p.hidden;
  let input = x;
  for (let l = 0; l < p.layers.length; l++) {
    const layer = p.layers[l];
    const hPrev = hidden[l];
    const pre = zeros(B, 3 * h);
    for (let i = 0; i < B; i++) {
      pre.data.set(layer.b, i * 3 * h);
    }
    gemmNT(input, layer.W, pre);
    const uhzr = zeros(B, 2 * h);
    gemmNT(hPrev, rowBlock(layer.U, 0, 2 * h), uhzr);
    const z = zeros(B, h);
    const r = zeros(B, h);
    const rh = zeros(B, h);
    for (let i = 0; i < B; i++) {
      const p3 = i * 3 * h, p2 = i * 2 * h, p1 = i * h;
      for (let j = 0; j < h; j++) {
        z.data[p1 + j] = sigmoid(pre.data[p3 + j] + uhzr.data[p2 + j]);
        r.data[p1 + j] = sigmoid(pre.data[p3 + h + j] + uhzr.data[p2 + h + j]);
        rh.data[p1 + j] = r.data[p1 + j] * hPrev.data[p1 + j];
      }
    }
    const cpre = zeros(B, h);
    for (let i = 0; i < B; i++) {
      for (let j = 0; j < h; j++) cpre.data[i * h + j] = pre.data[i * 3 * h + 2 * h + j];
    }
    gemmNT(rh, rowBlock(layer.U, 2 * h, 3 * h), cpre);
    const c = zeros(B, h);
    const hNew = zeros(B, h);
    for (let i = 0; i < B * h; i++) {
      c.data[i] = Math.tanh(cpre.data[i]);
      hNew.data[i] = (1 - z.data[i]) * hPrev.data[i] + z.data[i] * c.data[i];
    }
    if (cache) {
      cache.hPrev[l] = hPrev;
      cache.z[l] = z;
      cache.r[l] = r;
      cache.c[l] = c;
      cache.x[l] = input;
    }
    hidden[l] = hNew;
    input = hNew;
  }
  logits.data.fill(0);
  for (let i = 0; i < B; i++) logits.data.set(p.headB, i * p.spec.nClasses);
  gemmNT(input, p.headW, logits);
}

/**
 * Backward through one frame. dLogits is (B x C); dHidden carries the
 * gradient w.r.t. each layer's hidden output and is updated in place to the
 * gradient w.r.t. the previous frame's hidden state.
 */
export function gruBackwardStep(
  p: GruParams,
  cache: StepCache,
  dLogits: Mat,
  dHidden: Mat[],
  grads: GruGrads,
): void {
  const B = dLogits.rows;
  const h = p.hidden;
  const hTop = lastHidden(cache, p);
  gemmTN(dLogits, hTop, grads.headW);
  for (let i = 0; i < B; i++) {
    for (let k = 0; k < p.spec.nClasses; k++) {
      grads.headB[k] += dLogits.data[i * p.spec.nClasses + k];
    }
  }
  const dTop = dHidden[p.layers.length - 1];
  gemmNN(dLogits, p.headW, dTop);

  let dUpper: Mat | null = null; // gradient flowing into layer l's output
  for (let l = p.layers.length - 1; l >= 0; l--) {
    const layer = p.layers[l];
    const g = grads.layers[l];
    const dH = dHidden[l];
    if (dUpper) {
      for (let i = 0; i < dH.data.length; i++) dH.data[i] += dUpper.data[i];
    }
    const z = cache.z[l], r = cache.r[l], c = cache.c[l];
    const hPrev = cache.hPrev[l], x = cache.x[l];
    const dPre = zeros(B, 3 * h);
    const dCpre = zeros(B, h);
    const dhPrev = zeros(B, h);
    for (let i = 0; i < B; i++) {
      const p1 = i * h, p3 = i * 3 * h;
      for (let j = 0; j < h; j++) {
        const dh = dH.data[p1 + j];
        const zv = z.data[p1 + j], cv = c.data[p1 + j], hv = hPrev.data[p1 + j];
        const dz = dh * (cv - hv);
        dCpre.data[p1 + j] = dh * zv * (1 - cv * cv);
        dPre.data[p3 + j] = dz * zv * (1 - zv);
        dhPrev.data[p1 + j] = dh * (1 - zv);
      }
    }
    // candidate path: cpre = pre_h + (r*hPrev) U_h^T
    const uH = rowBlock(layer.U, 2 * h, 3 * h);
    const dRh = zeros(B, h);
    gemmNN(dCpre, uH, dRh);
    const rh = zeros(B, h);
    for (let i = 0; i < B * h; i++) {
      rh.data[i] = r.data[i] * hPrev.data[i];
      const dr = dRh.data[i] * hPrev.data[i];
      dhPrev.data[i] += dRh.data[i] * r.data[i];
      // reset-gate pre-activation goes into dPre block 1
      const b = Math.floor(i / h), j = i % h;
      dPre.data[b * 3 * h + h + j] = dr * r.data[i] * (1 - r.data[i]);
    }
    gemmTN(dCpre, rh, rowBlock(g.U, 2 * h, 3 * h));
    // candidate pre-activation occupies dPre block 2
    for (let i = 0; i < B; i++) {
      for (let j = 0; j < h; j++) {
        dPre.data[i * 3 * h + 2 * h + j] = dCpre.data[i * h + j];
      }
    }
    // gate path through U_{z,r}
    const dUhzr = zeros(B, 2 * h);
    for (let i = 0; i < B; i++) {
      for (let j = 0; j < 2 * h; j++) {
        dUhzr.data[i * 2 * h + j] = dPre.data[i * 3 * h + j];
      }
    }
    gemmNN(dUhzr, rowBlock(layer.U, 0, 2 * h), dhPrev);
    gemmTN(dUhzr, hPrev, rowBlock(g.U, 0, 2 * h));
    // input path
    gemmTN(dPre, x, g.W);
    for (let i = 0; i < B; i++) {
      for (let j = 0; j < 3 * h; j++) g.b[j] += dPre.data[i * 3 * h + j];
    }
    if (l > 0) {
      dUpper = zeros(B, h);
      gemmNN(dPre, layer.W, dUpper);
    }
    dHidden[l] = dhPrev;
  }
}

function lastHidden(cache: StepCache, p: GruParams): Mat {
  // hidden output of the top layer equals (1-z)h + z c reconstructed
  const l = p.layers.length - 1;
  const z = cache.z[l], c = cache.c[l], hPrev = cache.hPrev[l];
  const out = zeros(z.rows, z.cols);
  for (let i = 0; i < out.data.length; i++) {
    out.data[i] = (1 - z.data[i]) * hPrev.data[i] + z.data[i] * c.data[i];
  }
  return out;
}

export function emptyCache(): StepCache {
  return { hPrev: [], z: [], r: [], c: [], x: [] };
}

export function freshHidden(p: GruParams, batch: number): Mat[] {
  return p.layers.map(() => zeros(batch, p.hidden));
}
