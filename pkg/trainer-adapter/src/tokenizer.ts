/** Lossless word/number/punctuation tokenizer.
 *
 * Text splits into whitespace runs, identifier runs, digit runs, and single
 * punctuation characters, so decode is plain concatenation and a memorized
 * program comes back byte-identical. Keeping numbers and punctuation as
 * separate tokens lets questions and programs share them, which is what
 * makes attention-based copying (and hence memorization) learnable. The
 * vocabulary is built from the training set; unseen tokens map to UNK.
 */

export const PAD = 0;
export const BOS = 1;
export const EOS = 2;
export const UNK = 3;
const SPECIALS = ["<pad>", "<bos>", "<eos>", "<unk>"];

export interface Tokenizer {
  tokenToId: Record<string, number>;
  idToToken: string[];
}

export function splitRuns(text: string): string[] {
  const runs = text.match(/\s+|[0-9]+|[A-Za-z_]+|[^\sA-Za-z0-9_]/g);
  return runs === null ? [] : runs;
}

export function buildTokenizer(texts: string[]): Tokenizer {
  const idToToken = SPECIALS.slice();
  const tokenToId: Record<string, number> = {};
  SPECIALS.forEach((t, i) => (tokenToId[t] = i));
  for (const text of texts) {
    for (const run of splitRuns(text)) {
      if (!(run in tokenToId)) {
        tokenToId[run] = idToToken.length;
        idToToken.push(run);
      }
    }
  }
  return { tokenToId, idToToken };
}

export function encodeText(tok: Tokenizer, text: string): number[] {
  return splitRuns(text).map((run) => tok.tokenToId[run] ?? UNK);
}

/** Ids back to text; specials vanish. Concatenation, not joining. */
export function decodeIds(tok: Tokenizer, ids: number[]): string {
  let out = "";
  for (const id of ids) {
    if (id >= SPECIALS.length && id < tok.idToToken.length) out += tok.idToToken[id];
  }
  return out;
}

export function vocabSize(tok: Tokenizer): number {
  return tok.idToToken.length;
}
