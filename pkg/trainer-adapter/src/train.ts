/** From-scratch training over exported pairs, plus the trainer CLI.
 *
 * Every invocation reinitializes the model; nothing carries over between
 * rounds. The CLI obeys the pipeline's trainer contract: read
 * --train-file, train, write --out-dir/endpoint.json once a serving
 * process is up. Exit 3 flags bad training data, exit 4 a diverged run.
 */

import { spawn } from "node:child_process";
import * as fs from "node:fs";
import * as path from "node:path";

import { DataError, TrainingExample, loadTrainingExamples } from "./data.js";
import {
  MATS,
  Params,
  exampleGrad,
  initParams,
  sgdStep,
  zeroGrads,
} from "./model.js";
import { makeRng, shuffle } from "./rng.js";
import { Tokenizer, buildTokenizer, encodeText, vocabSize } from "./tokenizer.js";

export interface TrainerConfig {
  epochs: number;
  learningRate: number;
  batchSize: number;
  hidden: number;
  seed: number;
  maxDecodeLen: number;
}

export const DEFAULT_CONFIG: TrainerConfig = {
  epochs: 10,
  learningRate: 5e-4,
  batchSize: 32,
  hidden: 48,
  seed: 0,
  maxDecodeLen: 64,
};

export interface TrainRunRecord {
  exampleCount: number;
  epochs: number;
  learningRate: number;
  batchSize: number;
  hidden: number;
  seed: number;
  epochMeanLoss: number[]; // mean per-example loss (token NLLs summed)
  finalLoss: number;
  wallTimeMs: number;
}

export interface TrainedModel {
  params: Params;
  tokenizer: Tokenizer;
  record: TrainRunRecord;
  maxDecodeLen: number;
}

export class TrainingDiverged extends Error {}

export function validateConfig(cfg: TrainerConfig): void {
  if (!Number.isInteger(cfg.epochs) || cfg.epochs < 1) throw new Error("epochs must be >= 1");
  if (!(cfg.learningRate > 0)) throw new Error("learning rate must be positive");
  if (!Number.isInteger(cfg.batchSize) || cfg.batchSize < 1) throw new Error("batch size must be >= 1");
  if (!Number.isInteger(cfg.hidden) || cfg.hidden < 2) throw new Error("hidden size must be >= 2");
}

export function trainModel(examples: TrainingExample[], cfg: TrainerConfig): TrainedModel {
  validateConfig(cfg);
  const started = Date.now();
  const tokenizer = buildTokenizer(examples.flatMap((ex) => [ex.input, ex.output]));
  const encoded = examples.map((ex) => ({
    input: encodeText(tokenizer, ex.input),
    target: encodeText(tokenizer, ex.output),
  }));
  const rng = makeRng(cfg.seed);
  const params = initParams(vocabSize(tokenizer), cfg.hidden, rng);

  const order = encoded.map((_, i) => i);
  const epochMeanLoss: number[] = [];
  for (let epoch = 0; epoch < cfg.epochs; epoch++) {
    shuffle(order, rng);
    let epochLoss = 0;
    for (let start = 0; start < order.length; start += cfg.batchSize) {
      const grads = zeroGrads(params);
      const end = Math.min(start + cfg.batchSize, order.length);
      for (let k = start; k < end; k++) {
        const ex = encoded[order[k]];
        epochLoss += exampleGrad(params, ex.input, ex.target, grads);
      }
      // the batch gradient is a plain sum over examples, so the learning
      // rate is per summed-token-NLL, not per mean
      sgdStep(params, grads, cfg.learningRate);
    }
    const mean = epochLoss / encoded.length;
    if (!Number.isFinite(mean)) throw new TrainingDiverged(`epoch ${epoch + 1} loss is ${mean}`);
    epochMeanLoss.push(mean);
  }

  return {
    params,
    tokenizer,
    maxDecodeLen: cfg.maxDecodeLen,
    record: {
      exampleCount: examples.length,
      epochs: cfg.epochs,
      learningRate: cfg.learningRate,
      batchSize: cfg.batchSize,
      hidden: cfg.hidden,
      seed: cfg.seed,
      epochMeanLoss,
      finalLoss: epochMeanLoss[epochMeanLoss.length - 1],
      wallTimeMs: Date.now() - started,
    },
  };
}

// ------------------------------------------------------------ persistence

export function saveModel(model: TrainedModel, file: string): void {
  const params: Record<string, number[]> = {};
  for (const name of MATS) params[name] = Array.from(model.params[name] as Float64Array);
  const doc = {
    format: "fdd-trainer-adapter/1",
    V: model.params.V,
    d: model.params.d,
    maxDecodeLen: model.maxDecodeLen,
    vocab: model.tokenizer.idToToken,
    params,
  };
  fs.writeFileSync(file, JSON.stringify(doc));
}

export interface ModelBundle {
  params: Params;
  tokenizer: Tokenizer;
  maxDecodeLen: number;
}

export function loadModel(file: string): ModelBundle {
  const doc = JSON.parse(fs.readFileSync(file, "utf-8"));
  const idToToken: string[] = doc.vocab;
  const tokenToId: Record<string, number> = {};
  idToToken.forEach((t, i) => (tokenToId[t] = i));
  const params = { V: doc.V, d: doc.d } as Params;
  for (const name of MATS) {
    (params[name] as Float64Array) = Float64Array.from(doc.params[name]);
  }
  return { params, tokenizer: { idToToken, tokenToId }, maxDecodeLen: doc.maxDecodeLen };
}

// ------------------------------------------------------------ CLI

interface CliArgs {
  trainFile: string;
  round: number;
  outDir: string;
  cfg: TrainerConfig;
  serve: boolean;
  port: number; // 0 = ephemeral
}

export function parseArgs(argv: string[]): CliArgs {
  const cfg = { ...DEFAULT_CONFIG };
  let trainFile = "";
  let outDir = "";
  let round = 0;
  let serve = true;
  let port = 0;
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    if (flag === "--no-serve") {
      serve = false;
      continue;
    }
    const value = argv[++i];
    if (value === undefined) throw new Error(`${flag} needs a value`);
    switch (flag) {
      case "--train-file": trainFile = value; break;
      case "--round": round = Number(value); break;
      case "--out-dir": outDir = value; break;
      case "--epochs": cfg.epochs = Number(value); break;
      case "--lr": cfg.learningRate = Number(value); break;
      case "--batch-size": cfg.batchSize = Number(value); break;
      case "--hidden": cfg.hidden = Number(value); break;
      case "--seed": cfg.seed = Number(value); break;
      case "--max-decode-len": cfg.maxDecodeLen = Number(value); break;
      case "--port": port = Number(value); break;
      default: throw new Error(`unknown flag ${flag}`);
    }
  }
  if (!trainFile || !outDir) throw new Error("--train-file and --out-dir are required");
  if (!Number.isInteger(round) || round < 0) throw new Error("--round must be a non-negative integer");
  return { trainFile, round, outDir, cfg, serve, port };
}

async function waitFor(check: () => Promise<boolean>, timeoutMs: number, what: string): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (await check()) return;
    await new Promise((r) => setTimeout(r, 50));
  }
  throw new Error(`timed out waiting for ${what}`);
}

async function launchServer(modelFile: string, outDir: string, port: number): Promise<number> {
  const portFile = path.join(outDir, ".port");
  fs.rmSync(portFile, { force: true });
  const child = spawn(
    process.execPath,
    [path.join(__dirname, "serve.js"), "--model", modelFile, "--port", String(port), "--port-file", portFile],
    { detached: true, stdio: "ignore" }
  );
  child.unref();
  await waitFor(async () => fs.existsSync(portFile) && fs.readFileSync(portFile, "utf-8").trim() !== "", 10_000, "server port file");
  const actual = Number(fs.readFileSync(portFile, "utf-8").trim());
  await waitFor(async () => {
    try {
      const res = await fetch(`http://127.0.0.1:${actual}/health`);
      return res.status === 200;
    } catch {
      return false;
    }
  }, 10_000, "server health");
  return actual;
}

export async function main(argv: string[]): Promise<number> {
  let args: CliArgs;
  try {
    args = parseArgs(argv);
  } catch (err) {
    process.stderr.write(`usage error: ${(err as Error).message}\n`);
    return 2;
  }
  try {
    const examples = loadTrainingExamples(args.trainFile);
    const model = trainModel(examples, args.cfg);
    fs.mkdirSync(args.outDir, { recursive: true });
    const modelFile = path.join(args.outDir, "model.json");
    saveModel(model, modelFile);
    fs.writeFileSync(
      path.join(args.outDir, "train_record.json"),
      JSON.stringify(model.record, null, 2) + "\n"
    );
    process.stdout.write(
      `trained on ${model.record.exampleCount} examples: ` +
      `epoch1 ${model.record.epochMeanLoss[0].toFixed(4)} -> final ${model.record.finalLoss.toFixed(4)}\n`
    );
    if (args.serve) {
      const port = await launchServer(modelFile, args.outDir, args.port);
      // written last: its presence tells the pipeline the endpoint is live
      fs.writeFileSync(
        path.join(args.outDir, "endpoint.json"),
        JSON.stringify({
          base_url: `http://127.0.0.1:${port}/v1`,
          model_name: `student-round-${args.round}`,
        }, null, 2) + "\n"
      );
      process.stdout.write(`serving on port ${port}\n`);
    }
    return 0;
  } catch (err) {
    if (err instanceof DataError) {
      process.stderr.write(`data error: ${err.message}\n`);
      return 3;
    }
    if (err instanceof TrainingDiverged) {
      process.stderr.write(`training diverged: ${err.message}\n`);
      return 4;
    }
    process.stderr.write(`error: ${(err as Error).stack ?? err}\n`);
    return 1;
  }
}

if (require.main === module) {
  main(process.argv.slice(2)).then((code) => process.exit(code));
}
