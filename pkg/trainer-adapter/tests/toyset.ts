/** Shared 50-example toy corpus shaped like the pipeline's exported pairs. */

import { TrainingExample } from "../src/data.js";

export const PROMPT = "Let's generate a python program to solve the question.";

export function toyExamples(): TrainingExample[] {
  const out: TrainingExample[] = [];
  for (let i = 0; i < 50; i++) {
    const x = 2 + (i % 17);
    const y = 3 + (i * 7) % 23;
    out.push({
      input: `Compute ${x} + ${y}.\n${PROMPT}`,
      output: `print(${x} + ${y})`,
    });
  }
  return out;
}
