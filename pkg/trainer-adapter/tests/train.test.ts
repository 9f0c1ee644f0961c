import { describe, expect, it } from "vitest";

import {
  DEFAULT_CONFIG,
  TrainingDiverged,
  trainModel,
  validateConfig,
} from "../src/train.js";
import { toyExamples } from "./toyset.js";

describe("trainModel at the default configuration", () => {
  // 10 epochs, lr 5e-4, batch 32
  const examples = toyExamples();
  const model = trainModel(examples, DEFAULT_CONFIG);

  it("halves the mean loss between the first and last epoch", () => {
    const { epochMeanLoss, finalLoss } = model.record;
    const ratio = finalLoss / epochMeanLoss[0];
    expect(ratio).toBeLessThanOrEqual(0.5);
    console.log(
      `acceptance: final mean loss ${finalLoss.toFixed(3)} is ` +
      `${(ratio * 100).toFixed(1)}% of epoch 1 (<= 50%)`
    );
  });

  it("records one finite non-negative mean loss per epoch", () => {
    const rec = model.record;
    expect(rec.exampleCount).toBe(50);
    expect(rec.epochMeanLoss).toHaveLength(rec.epochs);
    for (const loss of rec.epochMeanLoss) {
      expect(Number.isFinite(loss)).toBe(true);
      expect(loss).toBeGreaterThanOrEqual(0);
    }
    expect(rec.finalLoss).toBe(rec.epochMeanLoss[rec.epochMeanLoss.length - 1]);
    expect(rec.wallTimeMs).toBeGreaterThanOrEqual(0);
  });

  it("reproduces the final loss exactly under the same seed", () => {
    const again = trainModel(toyExamples(), DEFAULT_CONFIG);
    expect(again.record.finalLoss).toBe(model.record.finalLoss);
    expect(again.record.epochMeanLoss).toEqual(model.record.epochMeanLoss);
  });

  it("moves the loss under a different seed", () => {
    const other = trainModel(toyExamples(), { ...DEFAULT_CONFIG, seed: 7 });
    expect(other.record.finalLoss).not.toBe(model.record.finalLoss);
  });
});

describe("trainModel failure modes", () => {
  it("raises TrainingDiverged once the loss leaves the reals", () => {
    const cfg = { ...DEFAULT_CONFIG, epochs: 3, learningRate: 100 };
    expect(() => trainModel(toyExamples(), cfg)).toThrow(TrainingDiverged);
  });

  it("rejects malformed configurations", () => {
    expect(() => validateConfig({ ...DEFAULT_CONFIG, epochs: 0 })).toThrow(/epochs/);
    expect(() => validateConfig({ ...DEFAULT_CONFIG, epochs: 2.5 })).toThrow(/epochs/);
    expect(() => validateConfig({ ...DEFAULT_CONFIG, learningRate: 0 })).toThrow(/learning rate/);
    expect(() => validateConfig({ ...DEFAULT_CONFIG, learningRate: NaN })).toThrow(/learning rate/);
    expect(() => validateConfig({ ...DEFAULT_CONFIG, batchSize: 0 })).toThrow(/batch/);
    expect(() => validateConfig({ ...DEFAULT_CONFIG, hidden: 1 })).toThrow(/hidden/);
  });
});
