/**
 * SCW1 weight containers: the cross-component contract consumed by the
 * primary inference engine. Tensor names, shapes, and canonical emission
 * order must match the consumer exactly; loaders look tensors up by name.
 */

import * as fs from "node:fs";

export type ModelKind = "gru" | "tcn";

export interface ModelSpec {
  kind: ModelKind;
  inputDim: number;
  nClasses: number;
}

export const GRU_LAYERS = 3;
export const TCN_STACKS = 3;
export const TCN_BLOCKS = 3;
export const TCN_KERNEL = 3;
export const TCN_BOTTLENECK = 128;
export const TCN_HIDDEN = 256;
export const TCN_DILATIONS = [1, 2, 4];
export const LN_EPS = 1e-5;

export function gruHidden(spec: ModelSpec): number {
  return Math.floor(spec.inputDim / 2);
}

export function receptiveField(): number {
  let reach = 0;
  for (let s = 0; s < TCN_STACKS; s++) {
    for (const d of TCN_DILATIONS) reach += d * (TCN_KERNEL - 1);
  }
  return 1 + reach;
}

/** Canonical tensor names and shapes, in file-emission order. */
export function expectedShapes(spec: ModelSpec): Map<string, number[]> {
  const shapes = new Map<string, number[]>();
  if (spec.kind === "gru") {
    const h = gruHidden(spec);
    for (let l = 0; l < GRU_LAYERS; l++) {
      const dIn = l === 0 ? spec.inputDim : h;
      shapes.set(`gru.l${l}.W`, [3 * h, dIn]);
      shapes.set(`gru.l${l}.U`, [3 * h, h]);
      shapes.set(`gru.l${l}.b`, [3 * h]);
    }
    shapes.set("head.weight", [spec.nClasses, h]);
    shapes.set("head.bias", [spec.nClasses]);
  } else {
    shapes.set("tcn.in.weight", [TCN_BOTTLENECK, spec.inputDim]);
    shapes.set("tcn.in.bias", [TCN_BOTTLENECK]);
    for (let s = 0; s < TCN_STACKS; s++) {
      for (let b = 0; b < TCN_BLOCKS; b++) {
        const p = `tcn.s${s}.b${b}.`;
        shapes.set(p + "in.weight", [TCN_HIDDEN, TCN_BOTTLENECK]);
        shapes.set(p + "in.bias", [TCN_HIDDEN]);
        shapes.set(p + "prelu1", [1]);
        shapes.set(p + "norm1.gain", [TCN_HIDDEN]);
        shapes.set(p + "norm1.bias", [TCN_HIDDEN]);
        shapes.set(p + "dw.weight", [TCN_HIDDEN, TCN_KERNEL]);
        shapes.set(p + "dw.bias", [TCN_HIDDEN]);
        shapes.set(p + "prelu2", [1]);
        shapes.set(p + "norm2.gain", [TCN_HIDDEN]);
        shapes.set(p + "norm2.bias", [TCN_HIDDEN]);
        shapes.set(p + "out.weight", [TCN_BOTTLENECK, TCN_HIDDEN]);
        shapes.set(p + "out.bias", [TCN_BOTTLENECK]);
      }
    }
    shapes.set("head.weight", [spec.nClasses, TCN_BOTTLENECK]);
    shapes.set("head.bias", [spec.nClasses]);
  }
  return shapes;
}

export interface WeightFile {
  spec: ModelSpec;
  /** name -> float32 values, row-major in the canonical shape. */
  tensors: Map<string, Float32Array>;
}

export function validateTensors(file: WeightFile): void {
  const expected = expectedShapes(file.spec);
  for (const [name, shape] of expected) {
    const t = file.tensors.get(name);
    if (!t) throw new Error(`missing tensor ${name}`);
    const n = shape.reduce((a, b) => a * b, 1);
    if (t.length !== n) {
      throw new Error(`tensor ${name}: ${t.length} values, expected ${shape.join("x")}`);
    }
    for (let i = 0; i < t.length; i++) {
      if (!Number.isFinite(t[i])) throw new Error(`tensor ${name}: non-finite values`);
    }
  }
  for (const name of file.tensors.keys()) {
    if (!expected.has(name)) throw new Error(`unexpected tensor ${name}`);
  }
}

export function writeScw(path: string, file: WeightFile): void {
  validateTensors(file);
  const expected = expectedShapes(file.spec);
  const chunks: Buffer[] = [];
  const head = Buffer.alloc(21);
  head.write("SCW1", 0, "ascii");
  head.writeUInt32LE(1, 4);
  head.writeUInt8(file.spec.kind === "gru" ? 0 : 1, 8);
  head.writeUInt32LE(file.spec.inputDim, 9);
  head.writeUInt32LE(file.spec.nClasses, 13);
  head.writeUInt32LE(expected.size, 17);
  chunks.push(head);
  for (const [name, shape] of expected) {
    const data = file.tensors.get(name)!;
    const nameBuf = Buffer.from(name, "ascii");
    const meta = Buffer.alloc(2 + nameBuf.length + 1 + 4 * shape.length);
    meta.writeUInt16LE(nameBuf.length, 0);
    nameBuf.copy(meta, 2);
    meta.writeUInt8(shape.length, 2 + nameBuf.length);
    shape.forEach((d, i) => meta.writeUInt32LE(d, 2 + nameBuf.length + 1 + 4 * i));
    chunks.push(meta);
    chunks.push(Buffer.from(data.buffer.slice(data.byteOffset, data.byteOffset + 4 * data.length)));
  }
  fs.writeFileSync(path, Buffer.concat(chunks));
}

export function readScw(path: string): WeightFile {
  const buf = fs.readFileSync(path);
  if (buf.subarray(0, 4).toString("ascii") !== "SCW1") {
    throw new Error(`${path}: bad magic`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== 1) throw new Error(`${path}: unsupported version ${version}`);
  const kind: ModelKind = buf.readUInt8(8) === 0 ? "gru" : "tcn";
  const spec: ModelSpec = {
    kind,
    inputDim: buf.readUInt32LE(9),
    nClasses: buf.readUInt32LE(13),
  };
  const count = buf.readUInt32LE(17);
  const tensors = new Map<string, Float32Array>();
  let off = 21;
  for (let i = 0; i < count; i++) {
    const nameLen = buf.readUInt16LE(off);
    off += 2;
    const name = buf.subarray(off, off + nameLen).toString("ascii");
    off += nameLen;
    const ndim = buf.readUInt8(off);
    off += 1;
    let n = 1;
    for (let d = 0; d < ndim; d++) {
      n *= buf.readUInt32LE(off);
      off += 4;
    }
    const data = new Float32Array(n);
    for (let v = 0; v < n; v++) data[v] = buf.readFloatLE(off + 4 * v);
    off += 4 * n;
    tensors.set(name, data);
  }
  const file = { spec, tensors };
  validateTensors(file);
  return file;
}
