/**
 * Trainer command line.
 *
 *   train   --kind gru|tcn --train-dir D --val-dir D --out model.scw
 *           [--epochs N] [--lr X] [--weight-decay X] [--batch-size N]
 *           [--seed N] [--chunk N] [--label-delay N] [--activation-only]
 *           [--limit N] [--val-limit N] [--log FILE]
 *   forward --model model.scw --features file.scf [--out FILE]
 *
 * `forward` emits one line per frame: "t k p0 .. p{C-1}", computed with
 * the strict single-precision mirror of the consumer's inference.
 */

import * as fs from "node:fs";
import { listScfFiles, loadDataset } from "./data.js";
import { readScf } from "./scf.js";
import { readScw, writeScw } from "./scw.js";
import { forwardF32 } from "./strictf32.js";
import { TRAIN_DEFAULTS, train } from "./train.js";

function parseArgs(argv: string[]): Map<string, string | boolean> {
  const out = new Map<string, string | boolean>();
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (!a.startsWith("--")) throw new Error(`unexpected argument ${a}`);
    const key = a.slice(2);
    if (i + 1 < argv.length && !argv[i + 1].startsWith("--")) {
      out.set(key, argv[++i]);
    } else {
      out.set(key, true);
    }
  }
  return out;
}

function req(args: Map<string, string | boolean>, key: string): string {
  const v = args.get(key);
  if (typeof v !== "string") throw new Error(`missing --${key}`);
  return v;
}

function num(args: Map<string, string | boolean>, key: string, fallback: number): number {
  const v = args.get(key);
  return typeof v === "string" ? Number(v) : fallback;
}

function cmdTrain(argv: string[]): number {
  const args = parseArgs(argv);
  const kind = req(args, "kind");
  if (kind !== "gru" && kind !== "tcn") throw new Error(`bad --kind ${kind}`);
  const activationOnly = args.get("activation-only") === true;
  const labelDelay = num(args, "label-delay", 0);
  const limit = num(args, "limit", 0) || undefined;
  const valLimit = num(args, "val-limit", 0) || undefined;
  const trainSet = loadDataset(listScfFiles(req(args, "train-dir"), limit),
                               { activationOnly, labelDelay });
  const valSet = loadDataset(listScfFiles(req(args, "val-dir"), valLimit),
                             { activationOnly, labelDelay });
  const config = {
    ...TRAIN_DEFAULTS,
    kind: kind as "gru" | "tcn",
    epochs: num(args, "epochs", TRAIN_DEFAULTS.epochs),
    batchSize: num(args, "batch-size", TRAIN_DEFAULTS.batchSize),
    seed: num(args, "seed", TRAIN_DEFAULTS.seed),
    chunkLen: num(args, "chunk", TRAIN_DEFAULTS.chunkLen),
    optimizer: {
      ...TRAIN_DEFAULTS.optimizer,
      lr: num(args, "lr", TRAIN_DEFAULTS.optimizer.lr),
      weightDecay: num(args, "weight-decay", TRAIN_DEFAULTS.optimizer.weightDecay),
    },
  };
  const t0 = Date.now();
  const result = train(trainSet, valSet, config, (line) => console.log(line));
  const outPath = req(args, "out");
  writeScw(outPath, result.file);
  const logPath = args.get("log");
  if (typeof logPath === "string") {
    fs.writeFileSync(logPath, result.log.join("\n") + "\n");
  }
  console.log(
    `wrote ${outPath} (best val accuracy ${result.bestValAccuracy.toFixed(2)}%, ` +
    `${((Date.now() - t0) / 1000).toFixed(0)}s)`,
  );
  return 0;
}

function cmdForward(argv: string[]): number {
  const args = parseArgs(argv);
  const model = readScw(req(args, "model"));
  const feat = readScf(req(args, "features"));
  let features = feat.features;
  let dim = feat.nFeat;
  if (model.spec.inputDim === feat.nBins && feat.nFeat === 2 * feat.nBins) {
    // activation-only model over a combined feature file: take the first half
    dim = feat.nBins;
    features = new Float32Array(feat.nFrames * dim);
    for (let t = 0; t < feat.nFrames; t++) {
      features.set(feat.features.subarray(t * feat.nFeat, t * feat.nFeat + dim), t * dim);
    }
  }
  if (dim !== model.spec.inputDim) {
    throw new Error(`feature dim ${dim} does not match model input_dim ${model.spec.inputDim}`);
  }
  const probs = forwardF32(model, features, feat.nFrames);
  const C = model.spec.nClasses;
  const lines: string[] = [];
  for (let t = 0; t < feat.nFrames; t++) {
    let argmax = 0;
    for (let k = 1; k < C; k++) {
      if (probs[t * C + k] > probs[t * C + argmax]) argmax = k;
    }
    const p = Array.from(probs.subarray(t * C, (t + 1) * C), (v) => v.toFixed(6));
    lines.push(`${t} ${argmax} ${p.join(" ")}`);
  }
  const text = lines.join("\n") + "\n";
  const outPath = args.get("out");
  if (typeof outPath === "string") fs.writeFileSync(outPath, text);
  else process.stdout.write(text);
  return 0;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === "train") return cmdTrain(rest);
    if (command === "forward") return cmdForward(rest);
    console.error("usage: cli.js <train|forward> [options]");
    return 2;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
