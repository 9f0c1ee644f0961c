/** Training-pair JSONL: one {"input", "output"} object per line. */

import * as fs from "node:fs";

export interface TrainingExample {
  input: string;
  output: string;
}

export class DataError extends Error {
  line: number;

  constructor(message: string, line: number) {
    super(line > 0 ? `line ${line}: ${message}` : message);
    this.line = line;
  }
}

export function loadTrainingExamples(path: string): TrainingExample[] {
  let raw: string;
  try {
    raw = fs.readFileSync(path, "utf-8");
  } catch (err) {
    throw new DataError(`cannot read train file ${path}: ${(err as Error).message}`, 0);
  }
  const out: TrainingExample[] = [];
  const lines = raw.split("\n");
  for (let i = 0; i < lines.length; i++) {
    if (!lines[i].trim()) continue;
    let doc: unknown;
    try {
      doc = JSON.parse(lines[i]);
    } catch (err) {
      throw new DataError(`bad JSON: ${(err as Error).message}`, i + 1);
    }
    const rec = doc as Record<string, unknown>;
    if (typeof rec !== "object" || rec === null || Array.isArray(rec)) {
      throw new DataError("record is not an object", i + 1);
    }
    const { input, output } = rec;
    if (typeof input !== "string" || input.length === 0) {
      throw new DataError("missing or empty \"input\"", i + 1);
    }
    if (typeof output !== "string" || output.length === 0) {
      throw new DataError("missing or empty \"output\"", i + 1);
    }
    out.push({ input, output });
  }
  if (out.length === 0) throw new DataError("train file has no examples", 0);
  return out;
}
