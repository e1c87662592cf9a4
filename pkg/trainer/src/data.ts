/** Dataset loading and batching over SCF1 feature files. */

import * as fs from "node:fs";
import * as path from "node:path";
import { Mat, zeros } from "./mat.js";
import { FeatureFile, readScf } from "./scf.js";

export interface Sequence {
  /** (nFrames x dim) row-major, already sliced to the training view. */
  features: Float32Array;
  labels: Uint8Array;
  nFrames: number;
  dim: number;
}

export interface Dataset {
  sequences: Sequence[];
  dim: number;
  nClasses: number;
}

export function listScfFiles(dir: string, limit?: number): string[] {
  const names = fs.readdirSync(dir).filter((n) => n.endsWith(".scf")).sort();
  const sel = limit ? names.slice(0, limit) : names;
  return sel.map((n) => path.join(dir, n));
}

/**
 * Load feature files into training sequences.
 *
 * activationOnly keeps only the first n_bins columns of combined files.
 * labelDelay > 0 makes the target at frame t the true count from
 * labelDelay frames earlier (clamped at the sequence start), exposing the
 * deactivation features' inherent latency as an experiment knob.
 */
export function loadDataset(
  paths: string[],
  opts: { activationOnly?: boolean; labelDelay?: number } = {},
): Dataset {
  if (paths.length === 0) throw new Error("no feature files");
  const sequences: Sequence[] = [];
  let dim = -1;
  let nClasses = -1;
  for (const p of paths) {
    const file = readScf(p);
    const seq = toSequence(file, opts);
    if (dim < 0) {
      dim = seq.dim;
      nClasses = file.kMax + 1;
    } else if (seq.dim !== dim) {
      throw new Error(`${p}: dim ${seq.dim} inconsistent with ${dim}`);
    }
    sequences.push(seq);
  }
  return { sequences, dim, nClasses };
}

export function toSequence(
  file: FeatureFile,
  opts: { activationOnly?: boolean; labelDelay?: number } = {},
): Sequence {
  const delay = opts.labelDelay ?? 0;
  let features = file.features;
  let dim = file.nFeat;
  if (opts.activationOnly && file.nFeat === 2 * file.nBins) {
    dim = file.nBins;
    features = new Float32Array(file.nFrames * dim);
    for (let t = 0; t < file.nFrames; t++) {
      features.set(file.features.subarray(t * file.nFeat, t * file.nFeat + dim), t * dim);
    }
  }
  const labels = new Uint8Array(file.nFrames);
  for (let t = 0; t < file.nFrames; t++) {
    labels[t] = file.counts[Math.max(0, t - delay)];
  }
  return { features, labels, nFrames: file.nFrames, dim };
}

/** Gather frame t of several sequences into a (B x dim) matrix. */
export function gatherFrame(seqs: Sequence[], t: number, out: Mat): void {
  for (let i = 0; i < seqs.length; i++) {
    const s = seqs[i];
    const row = s.features.subarray(t * s.dim, (t + 1) * s.dim);
    for (let j = 0; j < s.dim; j++) out.data[i * s.dim + j] = row[j];
  }
}

export function commonFrames(seqs: Sequence[]): number {
  return Math.min(...seqs.map((s) => s.nFrames));
}
