/**
 * SCF1 feature files: the contract produced by the primary pipeline's
 * `extract` command. Little-endian; header "SCF1", version 1, n_bins,
 * n_frames, n_feat (n_bins or 2*n_bins), k_max; then n_frames x n_feat
 * float32 row-major; then n_frames bytes of true counts.
 */

import * as fs from "node:fs";

export interface FeatureFile {
  nBins: number;
  nFrames: number;
  nFeat: number;
  kMax: number;
  /** Row-major (nFrames x nFeat). */
  features: Float32Array;
  counts: Uint8Array;
}

const MAGIC = 0x31464353; // "SCF1" little-endian

export function readScf(path: string): FeatureFile {
  const buf = fs.readFileSync(path);
  if (buf.length < 24) throw new Error(`${path}: truncated SCF1 header`);
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  if (view.getUint32(0, true) !== MAGIC) throw new Error(`${path}: bad magic`);
  const version = view.getUint32(4, true);
  if (version !== 1) throw new Error(`${path}: unsupported SCF version ${version}`);
  const nBins = view.getUint32(8, true);
  const nFrames = view.getUint32(12, true);
  const nFeat = view.getUint32(16, true);
  const kMax = view.getUint32(20, true);
  if (nFeat !== nBins && nFeat !== 2 * nBins) {
    throw new Error(`${path}: n_feat ${nFeat} inconsistent with n_bins ${nBins}`);
  }
  const payload = 4 * nFrames * nFeat;
  if (buf.length < 24 + payload + nFrames) {
    throw new Error(`${path}: truncated SCF1 payload`);
  }
  const features = new Float32Array(nFrames * nFeat);
  for (let i = 0; i < features.length; i++) {
    features[i] = view.getFloat32(24 + 4 * i, true);
  }
  const counts = new Uint8Array(buf.subarray(24 + payload, 24 + payload + nFrames));
  return { nBins, nFrames, nFeat, kMax, features, counts };
}

/** Writer counterpart, used by tests and fixture generation. */
export function writeScf(path: string, file: FeatureFile): void {
  const payload = 4 * file.nFrames * file.nFeat;
  const buf = Buffer.alloc(24 + payload + file.nFrames);
  buf.writeUInt32LE(MAGIC, 0);
  buf.writeUInt32LE(1, 4);
  buf.writeUInt32LE(file.nBins, 8);
  buf.writeUInt32LE(file.nFrames, 12);
  buf.writeUInt32LE(file.nFeat, 16);
  buf.writeUInt32LE(file.kMax, 20);
  for (let i = 0; i < file.features.length; i++) {
    buf.writeFloatLE(file.features[i], 24 + 4 * i);
  }
  Buffer.from(file.counts).copy(buf, 24 + payload);
  fs.writeFileSync(path, buf);
}
