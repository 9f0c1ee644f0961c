/** Tiny attention seq2seq over token ids, all math in float64.
 *
 * Encoder: Elman RNN over the input; decoder: Elman RNN seeded from the
 * final encoder state, with dot-product attention over encoder states at
 * every step. Output tokens come from a pointer-generator mixture: a learned
 * gate blends the vocabulary softmax with the attention mass sitting on
 * input positions, so copying a rare token out of the question only requires
 * attending to it. The training objective is the summed negative
 * log-likelihood of the target tokens given the input, i.e. the loss on one
 * example is sum_t -log P(y_t | y_<t, x); batches sum over their examples.
 */

import { Rng, gaussian } from "./rng.js";
import { BOS, EOS } from "./tokenizer.js";

export interface Params {
  V: number; // vocab size
  d: number; // hidden size
  E: Float64Array; // (V, d) token embeddings, shared by both sides
  Wx: Float64Array; // (d, d) encoder input projection
  Wh: Float64Array; // (d, d) encoder recurrence
  bh: Float64Array; // (d,)
  Ux: Float64Array; // (d, d) decoder input projection
  Uh: Float64Array; // (d, d) decoder recurrence
  bs: Float64Array; // (d,)
  Wo: Float64Array; // (V, 2d) output projection over [state; context]
  bo: Float64Array; // (V,)
  wg: Float64Array; // (2d,) copy-gate weights over [state; context]
  bg: Float64Array; // (1,) copy-gate bias
}

export const MATS: (keyof Params)[] = ["E", "Wx", "Wh", "bh", "Ux", "Uh", "bs", "Wo", "bo", "wg", "bg"];

export function initParams(V: number, d: number, rng: Rng): Params {
  const mat = (n: number, scale: number) => {
    const a = new Float64Array(n);
    for (let i = 0; i < n; i++) a[i] = gaussian(rng) * scale;
    return a;
  };
  const s = 1 / Math.sqrt(d);
  return {
    V,
    d,
    E: mat(V * d, 0.1),
    Wx: mat(d * d, s),
    Wh: mat(d * d, s),
    bh: new Float64Array(d),
    Ux: mat(d * d, s),
    Uh: mat(d * d, s),
    bs: new Float64Array(d),
    Wo: mat(V * 2 * d, s),
    bo: new Float64Array(V),
    // zero gate weights start the mixture at an even split
    wg: new Float64Array(2 * d),
    bg: new Float64Array(1),
  };
}

export function zeroGrads(p: Params): Params {
  return {
    V: p.V,
    d: p.d,
    E: new Float64Array(p.E.length),
    Wx: new Float64Array(p.Wx.length),
    Wh: new Float64Array(p.Wh.length),
    bh: new Float64Array(p.bh.length),
    Ux: new Float64Array(p.Ux.length),
    Uh: new Float64Array(p.Uh.length),
    bs: new Float64Array(p.bs.length),
    Wo: new Float64Array(p.Wo.length),
    bo: new Float64Array(p.bo.length),
    wg: new Float64Array(p.wg.length),
    bg: new Float64Array(p.bg.length),
  };
}

// y = tanh(A x + B h + b) helper pieces; A, B are (d, d) row-major
function cell(
  p: Params,
  A: Float64Array,
  B: Float64Array,
  b: Float64Array,
  emb: number, // row offset into E
  prev: Float64Array
): Float64Array {
  const d = p.d;
  const out = new Float64Array(d);
  for (let i = 0; i < d; i++) {
    let z = b[i];
    const arow = i * d;
    for (let j = 0; j < d; j++) {
      z += A[arow + j] * p.E[emb + j] + B[arow + j] * prev[j];
    }
    out[i] = Math.tanh(z);
  }
  return out;
}

export function logSoftmax(logits: Float64Array): Float64Array {
  let max = -Infinity;
  for (const v of logits) if (v > max) max = v;
  let sum = 0;
  for (const v of logits) sum += Math.exp(v - max);
  const logZ = max + Math.log(sum);
  const out = new Float64Array(logits.length);
  for (let i = 0; i < logits.length; i++) out[i] = logits[i] - logZ;
  return out;
}

interface StepCache {
  state: Float64Array; // s_t
  attn: Float64Array; // attention weights over encoder states
  ctx: Float64Array; // attention-weighted context
  gate: number; // copy probability
  vocabLogProbs: Float64Array; // softmax branch alone
  logProbs: Float64Array; // log of the gated mixture
}

interface Trace {
  encIds: number[];
  decIds: number[]; // BOS-prefixed targets
  hs: Float64Array[]; // encoder states
  steps: StepCache[];
}

function encodeSeq(p: Params, encIds: number[]): Float64Array[] {
  const hs: Float64Array[] = [];
  let prev: Float64Array = new Float64Array(p.d);
  for (const id of encIds) {
    prev = cell(p, p.Wx, p.Wh, p.bh, id * p.d, prev);
    hs.push(prev);
  }
  return hs;
}

function decodeStep(
  p: Params,
  hs: Float64Array[],
  encIds: number[],
  prevId: number,
  prevState: Float64Array
): StepCache {
  const d = p.d;
  const state = cell(p, p.Ux, p.Uh, p.bs, prevId * d, prevState);
  const scale = 1 / Math.sqrt(d);
  const scores = new Float64Array(hs.length);
  for (let j = 0; j < hs.length; j++) {
    let dot = 0;
    const h = hs[j];
    for (let i = 0; i < d; i++) dot += state[i] * h[i];
    scores[j] = dot * scale;
  }
  const attnLog = logSoftmax(scores);
  const attn = new Float64Array(hs.length);
  for (let j = 0; j < hs.length; j++) attn[j] = Math.exp(attnLog[j]);
  const ctx = new Float64Array(d);
  for (let j = 0; j < hs.length; j++) {
    const h = hs[j];
    const a = attn[j];
    for (let i = 0; i < d; i++) ctx[i] += a * h[i];
  }
  const logits = new Float64Array(p.V);
  for (let v = 0; v < p.V; v++) {
    let z = p.bo[v];
    const row = v * 2 * d;
    for (let i = 0; i < d; i++) z += p.Wo[row + i] * state[i] + p.Wo[row + d + i] * ctx[i];
    logits[v] = z;
  }
  const vocabLogProbs = logSoftmax(logits);

  let gz = p.bg[0];
  for (let i = 0; i < d; i++) gz += p.wg[i] * state[i] + p.wg[d + i] * ctx[i];
  // clamp keeps log(1 - gate) finite once the sigmoid saturates to 1.0
  const gate = Math.min(1 - 1e-12, 1 / (1 + Math.exp(-gz)));

  const copyMass = new Float64Array(p.V);
  for (let j = 0; j < encIds.length; j++) copyMass[encIds[j]] += attn[j];
  const logProbs = new Float64Array(p.V);
  for (let v = 0; v < p.V; v++) {
    logProbs[v] = Math.log((1 - gate) * Math.exp(vocabLogProbs[v]) + gate * copyMass[v]);
  }
  return { state, attn, ctx, gate, vocabLogProbs, logProbs };
}

function runForward(p: Params, inputIds: number[], targetIds: number[]): Trace {
  // EOS-terminate the input so even an empty one yields an encoder state;
  // targets are consumed BOS-shifted and EOS-terminated.
  const encIds = [...inputIds, EOS];
  const decIds = [BOS, ...targetIds, EOS];
  const hs = encodeSeq(p, encIds);
  const steps: StepCache[] = [];
  let state = hs[hs.length - 1];
  for (let t = 0; t + 1 < decIds.length; t++) {
    const step = decodeStep(p, hs, encIds, decIds[t], state);
    steps.push(step);
    state = step.state;
  }
  return { encIds, decIds, hs, steps };
}

/** Per-token negative log-likelihoods of the target sequence (with EOS). */
export function exampleTokenLosses(p: Params, inputIds: number[], targetIds: number[]): number[] {
  const trace = runForward(p, inputIds, targetIds);
  return trace.steps.map((step, t) => -step.logProbs[trace.decIds[t + 1]]);
}

export function exampleLoss(p: Params, inputIds: number[], targetIds: number[]): number {
  let sum = 0;
  for (const l of exampleTokenLosses(p, inputIds, targetIds)) sum += l;
  return sum;
}

/** Backprop one example, accumulating into grads; returns the example loss. */
export function exampleGrad(p: Params, inputIds: number[], targetIds: number[], g: Params): number {
  const d = p.d;
  const scale = 1 / Math.sqrt(d);
  const trace = runForward(p, inputIds, targetIds);
  const { hs, steps, encIds, decIds } = trace;
  const T = steps.length;

  let loss = 0;
  const dH = hs.map(() => new Float64Array(d));
  let dState: Float64Array = new Float64Array(d); // flows into s_{t} from step t+1

  for (let t = T - 1; t >= 0; t--) {
    const step = steps[t];
    const target = decIds[t + 1];
    loss += -step.logProbs[target];

    // mixture backward: loss = -log((1-g) pvocab_t + g pcopy_t)
    const gate = step.gate;
    const dpT = -Math.exp(-step.logProbs[target]); // d loss / d p(target)
    const pvocabT = Math.exp(step.vocabLogProbs[target]);
    let pcopyT = 0;
    for (let j = 0; j < encIds.length; j++) {
      if (encIds[j] === target) pcopyT += step.attn[j];
    }

    // vocab branch; at gate 0 this reduces to softmax - onehot
    const cT = dpT * (1 - gate);
    const S = cT * pvocabT;
    const dLogits = new Float64Array(p.V);
    for (let v = 0; v < p.V; v++) dLogits[v] = -S * Math.exp(step.vocabLogProbs[v]);
    dLogits[target] += cT * pvocabT;

    const ds = new Float64Array(d);
    const dCtx = new Float64Array(d);
    for (let v = 0; v < p.V; v++) {
      const dl = dLogits[v];
      if (dl === 0) continue;
      const row = v * 2 * d;
      g.bo[v] += dl;
      for (let i = 0; i < d; i++) {
        g.Wo[row + i] += dl * step.state[i];
        g.Wo[row + d + i] += dl * step.ctx[i];
        ds[i] += dl * p.Wo[row + i];
        dCtx[i] += dl * p.Wo[row + d + i];
      }
    }

    // gate branch: z = wg . [state; ctx] + bg, g = sigmoid(z)
    const dgz = dpT * (pcopyT - pvocabT) * gate * (1 - gate);
    g.bg[0] += dgz;
    for (let i = 0; i < d; i++) {
      g.wg[i] += dgz * step.state[i];
      g.wg[d + i] += dgz * step.ctx[i];
      ds[i] += dgz * p.wg[i];
      dCtx[i] += dgz * p.wg[d + i];
    }

    for (let i = 0; i < d; i++) ds[i] += dState[i];

    // attention backward: ctx = sum_j a_j h_j, scores_j = s.h_j * scale,
    // plus the copy branch pcopy_t = sum of attn on positions holding target
    const da = new Float64Array(hs.length);
    for (let j = 0; j < hs.length; j++) {
      const h = hs[j];
      let dot = 0;
      for (let i = 0; i < d; i++) {
        dot += dCtx[i] * h[i];
        dH[j][i] += step.attn[j] * dCtx[i];
      }
      da[j] = dot;
      if (encIds[j] === target) da[j] += dpT * gate;
    }
    let aDotDa = 0;
    for (let j = 0; j < hs.length; j++) aDotDa += step.attn[j] * da[j];
    for (let j = 0; j < hs.length; j++) {
      const dScore = step.attn[j] * (da[j] - aDotDa);
      const h = hs[j];
      for (let i = 0; i < d; i++) {
        ds[i] += dScore * h[i] * scale;
        dH[j][i] += dScore * step.state[i] * scale;
      }
    }

    // decoder cell backward
    const prevState = t === 0 ? hs[hs.length - 1] : steps[t - 1].state;
    const dz = new Float64Array(d);
    for (let i = 0; i < d; i++) dz[i] = ds[i] * (1 - step.state[i] * step.state[i]);
    const emb = decIds[t] * d;
    dState = new Float64Array(d);
    for (let i = 0; i < d; i++) {
      const zi = dz[i];
      if (zi === 0) continue;
      const row = i * d;
      g.bs[i] += zi;
      for (let j = 0; j < d; j++) {
        g.Ux[row + j] += zi * p.E[emb + j];
        g.Uh[row + j] += zi * prevState[j];
        g.E[emb + j] += zi * p.Ux[row + j];
        dState[j] += zi * p.Uh[row + j];
      }
    }
    if (t === 0) {
      // s_0 is the final encoder state
      for (let i = 0; i < d; i++) dH[hs.length - 1][i] += dState[i];
      dState = new Float64Array(d);
    }
  }

  // encoder backward
  let carry: Float64Array = new Float64Array(d);
  for (let t = hs.length - 1; t >= 0; t--) {
    const h = hs[t];
    const dz = new Float64Array(d);
    for (let i = 0; i < d; i++) dz[i] = (dH[t][i] + carry[i]) * (1 - h[i] * h[i]);
    const prev = t === 0 ? new Float64Array(d) : hs[t - 1];
    const emb = encIds[t] * d;
    carry = new Float64Array(d);
    for (let i = 0; i < d; i++) {
      const zi = dz[i];
      if (zi === 0) continue;
      const row = i * d;
      g.bh[i] += zi;
      for (let j = 0; j < d; j++) {
        g.Wx[row + j] += zi * p.E[emb + j];
        g.Wh[row + j] += zi * prev[j];
        g.E[emb + j] += zi * p.Wx[row + j];
        carry[j] += zi * p.Wh[row + j];
      }
    }
  }
  return loss;
}

/** Greedy argmax decoding; ties break toward the lowest token id. */
export function greedyDecode(p: Params, inputIds: number[], maxLen: number): number[] {
  const encIds = [...inputIds, EOS];
  const hs = encodeSeq(p, encIds);
  let state = hs[hs.length - 1];
  let prev = BOS;
  const out: number[] = [];
  for (let t = 0; t < maxLen; t++) {
    const step = decodeStep(p, hs, encIds, prev, state);
    let best = 0;
    for (let v = 1; v < p.V; v++) {
      if (step.logProbs[v] > step.logProbs[best]) best = v;
    }
    if (best === EOS) break;
    out.push(best);
    prev = best;
    state = step.state;
  }
  return out;
}

export function sgdStep(p: Params, g: Params, lr: number): void {
  for (const name of MATS) {
    const pv = p[name] as Float64Array;
    const gv = g[name] as Float64Array;
    for (let i = 0; i < pv.length; i++) pv[i] -= lr * gv[i];
  }
}
