import { describe, expect, it } from "vitest";

import {
  MATS,
  Params,
  exampleGrad,
  exampleLoss,
  exampleTokenLosses,
  greedyDecode,
  initParams,
  zeroGrads,
} from "../src/model.js";
import { makeRng } from "../src/rng.js";
import { DEFAULT_CONFIG, trainModel } from "../src/train.js";
import { encodeText } from "../src/tokenizer.js";
import { toyExamples } from "./toyset.js";

function tinyParams(): Params {
  const p = initParams(9, 5, makeRng(42));
  // push the copy gate off its zero init so its gradients are exercised
  for (let i = 0; i < p.wg.length; i++) p.wg[i] = 0.3 * Math.sin(i + 1);
  p.bg[0] = -0.2;
  return p;
}

const INPUT = [4, 7, 5, 8, 4];
const TARGET = [5, 4, 6, 8];

describe("gradients", () => {
  it("match central finite differences on every parameter block", () => {
    const p = tinyParams();
    const g = zeroGrads(p);
    exampleGrad(p, INPUT, TARGET, g);

    const eps = 1e-6;
    for (const name of MATS) {
      const arr = p[name] as Float64Array;
      const grads = g[name] as Float64Array;
      const stride = Math.max(1, Math.floor(arr.length / 17));
      for (let k = 0; k < arr.length; k += stride) {
        const orig = arr[k];
        arr[k] = orig + eps;
        const up = exampleLoss(p, INPUT, TARGET);
        arr[k] = orig - eps;
        const down = exampleLoss(p, INPUT, TARGET);
        arr[k] = orig;
        const fd = (up - down) / (2 * eps);
        const rel = Math.abs(fd - grads[k]) / Math.max(1, Math.abs(fd), Math.abs(grads[k]));
        expect(rel, `${name}[${k}]`).toBeLessThan(1e-6);
      }
    }
  });

  it("report the same loss from exampleGrad and exampleLoss", () => {
    const p = tinyParams();
    const loss = exampleGrad(p, INPUT, TARGET, zeroGrads(p));
    expect(loss).toBeCloseTo(exampleLoss(p, INPUT, TARGET), 12);
  });
});

describe("loss decomposition", () => {
  it("splits the example loss into one NLL per target token plus EOS", () => {
    const p = tinyParams();
    const tokenLosses = exampleTokenLosses(p, INPUT, TARGET);
    expect(tokenLosses).toHaveLength(TARGET.length + 1);
    for (const l of tokenLosses) {
      expect(Number.isFinite(l)).toBe(true);
      expect(l).toBeGreaterThan(0);
    }
    const sum = tokenLosses.reduce((a, b) => a + b, 0);
    expect(Math.abs(sum - exampleLoss(p, INPUT, TARGET))).toBeLessThan(1e-9);
  });

  it("matches the training objective to 1e-5 on the toy set", () => {
    // One epoch at a vanishing lr leaves the parameters at their
    // initialization, so the recorded epoch loss must equal the sum over
    // examples and tokens of the per-token NLLs, divided by the count.
    const examples = toyExamples();
    const cfg = { ...DEFAULT_CONFIG, epochs: 1, learningRate: 1e-30 };
    const { params, tokenizer, record } = trainModel(examples, cfg);
    let total = 0;
    for (const ex of examples) {
      const tokenLosses = exampleTokenLosses(
        params,
        encodeText(tokenizer, ex.input),
        encodeText(tokenizer, ex.output)
      );
      total += tokenLosses.reduce((a, b) => a + b, 0);
    }
    const diff = Math.abs(total / examples.length - record.epochMeanLoss[0]);
    expect(diff).toBeLessThan(1e-5);
    console.log(`acceptance: per-token loss decomposition off by ${diff.toExponential(2)} (< 1e-5)`);
  });
});

describe("greedyDecode", () => {
  it("is deterministic and stops within the cap", () => {
    const p = tinyParams();
    const a = greedyDecode(p, INPUT, 8);
    const b = greedyDecode(p, INPUT, 8);
    expect(a).toEqual(b);
    expect(a.length).toBeLessThanOrEqual(8);
  });
});
