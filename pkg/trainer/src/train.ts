/**
 * Framewise cross-entropy training for the count classifiers.
 *
 * Every frame is a labeled example within its sequence context. GRU batches
 * run sequences in lockstep with truncated backpropagation over fixed
 * chunks (hidden state carried exactly across chunk boundaries); the TCN
 * trains per sequence with causal padding, accumulating gradients over the
 * minibatch. The exported checkpoint is the one with the best validation
 * accuracy.
 */

import { AdamW, ADAMW_DEFAULTS, AdamWConfig } from "./adamw.js";
import { Dataset, Sequence, commonFrames, gatherFrame } from "./data.js";
import {
  GruParams,
  GruGrads,
  emptyCache,
  freshHidden,
  gruBackwardStep,
  gruStep,
  gruToWeightFile,
  initGru,
  zeroGrads,
} from "./gru.js";
import { Mat, zeros } from "./mat.js";
import { Rng } from "./rng.js";
import { ModelSpec, WeightFile } from "./scw.js";
import {
  TcnParams,
  emptyTcnCache,
  initTcn,
  tcnBackward,
  tcnForward,
  tcnToWeightFile,
  tcnZeroGrads,
} from "./tcn.js";

export interface TrainConfig {
  kind: "gru" | "tcn";
  epochs: number;
  batchSize: number;
  seed: number;
  chunkLen: number;
  optimizer: AdamWConfig;
}

export const TRAIN_DEFAULTS: TrainConfig = {
  kind: "gru",
  epochs: 100,
  batchSize: 30,
  seed: 0,
  chunkLen: 100,
  optimizer: { ...ADAMW_DEFAULTS },
};

export interface TrainResult {
  file: WeightFile;
  log: string[];
  bestValAccuracy: number;
}

/** Softmax cross-entropy over one frame batch; fills dLogits, returns loss sum. */
function crossEntropy(
  logits: Mat,
  labels: Uint8Array,
  seqOffset: number,
  dLogits: Mat | null,
  scale: number,
): number {
  const B = logits.rows, C = logits.cols;
  let lossSum = 0;
  for (let i = 0; i < B; i++) {
    const base = i * C;
    let max = -Infinity;
    for (let k = 0; k < C; k++) max = Math.max(max, logits.data[base + k]);
    let z = 0;
    for (let k = 0; k < C; k++) z += Math.exp(logits.data[base + k] - max);
    const label = labels[seqOffset * B + i];
    lossSum += Math.log(z) + max - logits.data[base + label];
    if (dLogits) {
      for (let k = 0; k < C; k++) {
        const p = Math.exp(logits.data[base + k] - max) / z;
        dLogits.data[base + k] = (p - (k === label ? 1 : 0)) * scale;
      }
    }
  }
  return lossSum;
}

function batchLabels(seqs: Sequence[], nFrames: number): Uint8Array {
  // frame-major: labels[t * B + i]
  const out = new Uint8Array(nFrames * seqs.length);
  for (let t = 0; t < nFrames; t++) {
    for (let i = 0; i < seqs.length; i++) out[t * seqs.length + i] = seqs[i].labels[t];
  }
  return out;
}

function applyGruStep(opt: AdamW, params: GruParams, grads: GruGrads): void {
  opt.beginStep();
  params.layers.forEach((layer, l) => {
    opt.update(`gru.l${l}.W`, layer.W.data, grads.layers[l].W.data);
    opt.update(`gru.l${l}.U`, layer.U.data, grads.layers[l].U.data);
    opt.update(`gru.l${l}.b`, layer.b, grads.layers[l].b, false);
  });
  opt.update("head.weight", params.headW.data, grads.headW.data);
  opt.update("head.bias", params.headB, grads.headB, false);
}

export function trainGru(
  train: Dataset,
  val: Dataset,
  config: TrainConfig,
  onEpoch?: (line: string) => void,
): TrainResult {
  const spec: ModelSpec = { kind: "gru", inputDim: train.dim, nClasses: train.nClasses };
  const rng = new Rng(config.seed);
  const params = initGru(spec, rng);
  const opt = new AdamW(config.optimizer);
  const log: string[] = [];
  let best = -1;
  let bestFile = gruToWeightFile(params);
  const order = train.sequences.map((_, i) => i);
  for (let epoch = 1; epoch <= config.epochs; epoch++) {
    rng.shuffle(order);
    let lossSum = 0;
    let frameCount = 0;
    for (let start = 0; start < order.length; start += config.batchSize) {
      const batch = order.slice(start, start + config.batchSize).map((i) => train.sequences[i]);
      const stats = gruBatch(params, opt, batch, config);
      lossSum += stats.lossSum;
      frameCount += stats.frames;
    }
    const valAcc = gruAccuracy(params, val.sequences);
    const line =
      `epoch=${epoch} train_loss=${(lossSum / frameCount).toFixed(6)} ` +
      `val_accuracy=${valAcc.toFixed(4)}`;
    log.push(line);
    onEpoch?.(line);
    if (valAcc > best) {
      best = valAcc;
      bestFile = gruToWeightFile(params);
    }
  }
  return { file: bestFile, log, bestValAccuracy: best };
}

function gruBatch(
  params: GruParams,
  opt: AdamW,
  batch: Sequence[],
  config: TrainConfig,
): { lossSum: number; frames: number } {
  const B = batch.length;
  const nFrames = commonFrames(batch);
  const labels = batchLabels(batch, nFrames);
  const grads = zeroGrads(params);
  const scale = 1 / (B * nFrames);
  let hidden = freshHidden(params, B);
  let lossSum = 0;
  for (let chunk = 0; chunk < nFrames; chunk += config.chunkLen) {
    const chunkEnd = Math.min(chunk + config.chunkLen, nFrames);
    const caches = [];
    const dLogitsList: Mat[] = [];
    for (let t = chunk; t < chunkEnd; t++) {
      const x = zeros(B, params.spec.inputDim);
      gatherFrame(batch, t, x);
      const cache = emptyCache();
      const logits = zeros(B, params.spec.nClasses);
      gruStep(params, x, hidden, logits, cache);
      const dLogits = zeros(B, params.spec.nClasses);
      lossSum += crossEntropy(logits, labels, t, dLogits, scale);
      caches.push(cache);
      dLogitsList.push(dLogits);
    }
    // backward through the chunk; gradient does not cross the chunk start
    const dHidden = freshHidden(params, B);
    for (let t = chunkEnd - 1; t >= chunk; t--) {
      gruBackwardStep(params, caches[t - chunk], dLogitsList[t - chunk], dHidden, grads);
    }
  }
  applyGruStep(opt, params, grads);
  return { lossSum, frames: B * nFrames };
}

export function gruAccuracy(params: GruParams, sequences: Sequence[]): number {
  let match = 0;
  let total = 0;
  const groups = 30;
  for (let start = 0; start < sequences.length; start += groups) {
    const batch = sequences.slice(start, start + groups);
    const B = batch.length;
    const nFrames = commonFrames(batch);
    let hidden = freshHidden(params, B);
    const logits = zeros(B, params.spec.nClasses);
    const x = zeros(B, params.spec.inputDim);
    for (let t = 0; t < nFrames; t++) {
      gatherFrame(batch, t, x);
      gruStep(params, x, hidden, logits);
      for (let i = 0; i < B; i++) {
        let argmax = 0;
        for (let k = 1; k < params.spec.nClasses; k++) {
          if (logits.data[i * params.spec.nClasses + k] >
              logits.data[i * params.spec.nClasses + argmax]) argmax = k;
        }
        if (argmax === batch[i].labels[t]) match++;
        total++;
      }
    }
  }
  return (100 * match) / total;
}

// ---------------------------------------------------------------------------
// TCN
// ---------------------------------------------------------------------------

export function trainTcn(
  train: Dataset,
  val: Dataset,
  config: TrainConfig,
  onEpoch?: (line: string) => void,
): TrainResult {
  const spec: ModelSpec = { kind: "tcn", inputDim: train.dim, nClasses: train.nClasses };
  const rng = new Rng(config.seed);
  const params = initTcn(spec, rng);
  const opt = new AdamW(config.optimizer);
  const log: string[] = [];
  let best = -1;
  let bestFile = tcnToWeightFile(params);
  const order = train.sequences.map((_, i) => i);
  for (let epoch = 1; epoch <= config.epochs; epoch++) {
    rng.shuffle(order);
    let lossSum = 0;
    let frameCount = 0;
    for (let start = 0; start < order.length; start += config.batchSize) {
      const batch = order.slice(start, start + config.batchSize).map((i) => train.sequences[i]);
      const grads = tcnZeroGrads(params);
      let frames = 0;
      for (const seq of batch) frames += seq.nFrames;
      const scale = 1 / frames;
      for (const seq of batch) {
        const x: Mat = {
          rows: seq.nFrames,
          cols: seq.dim,
          data: Float64Array.from(seq.features),
        };
        const cache = emptyTcnCache();
        const logits = tcnForward(params, x, cache);
        const dLogits = zeros(seq.nFrames, spec.nClasses);
        for (let t = 0; t < seq.nFrames; t++) {
          const row: Mat = {
            rows: 1,
            cols: spec.nClasses,
            data: logits.data.subarray(t * spec.nClasses, (t + 1) * spec.nClasses),
          };
          const dRow: Mat = {
            rows: 1,
            cols: spec.nClasses,
            data: dLogits.data.subarray(t * spec.nClasses, (t + 1) * spec.nClasses),
          };
          lossSum += crossEntropy(row, seq.labels, t, dRow, scale);
        }
        tcnBackward(params, cache, dLogits, grads);
        frameCount += seq.nFrames;
      }
      opt.beginStep();
      for (const [name, buf] of params.tensors) {
        const decay = !(name.endsWith("bias") || name.endsWith("prelu1") ||
                        name.endsWith("prelu2") || name.includes("norm"));
        opt.update(name, buf, grads.get(name)!, decay);
      }
    }
    const valAcc = tcnAccuracy(params, val.sequences);
    const line =
      `epoch=${epoch} train_loss=${(lossSum / frameCount).toFixed(6)} ` +
      `val_accuracy=${valAcc.toFixed(4)}`;
    log.push(line);
    onEpoch?.(line);
    if (valAcc > best) {
      best = valAcc;
      bestFile = tcnToWeightFile(params);
    }
  }
  return { file: bestFile, log, bestValAccuracy: best };
}

export function tcnAccuracy(params: TcnParams, sequences: Sequence[]): number {
  let match = 0;
  let total = 0;
  for (const seq of sequences) {
    const x: Mat = { rows: seq.nFrames, cols: seq.dim, data: Float64Array.from(seq.features) };
    const logits = tcnForward(params, x);
    const C = params.spec.nClasses;
    for (let t = 0; t < seq.nFrames; t++) {
      let argmax = 0;
      for (let k = 1; k < C; k++) {
        if (logits.data[t * C + k] > logits.data[t * C + argmax]) argmax = k;
      }
      if (argmax === seq.labels[t]) match++;
      total++;
    }
  }
  return (100 * match) / total;
}

export function train(
  trainSet: Dataset,
  valSet: Dataset,
  config: TrainConfig,
  onEpoch?: (line: string) => void,
): TrainResult {
  if (config.epochs < 1) throw new Error("epochs must be >= 1");
  if (config.batchSize < 1) throw new Error("batch_size must be >= 1");
  if (config.chunkLen < 1) throw new Error("chunk length must be >= 1");
  if (config.kind === "gru") return trainGru(trainSet, valSet, config, onEpoch);
  return trainTcn(trainSet, valSet, config, onEpoch);
}
