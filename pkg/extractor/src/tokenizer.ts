/**
 * Deterministic subword tokenizer with character offsets.
 *
 * Words split on whitespace, punctuation splits off as its own token, and
 * long words break into up-to-4-character subtokens (continuations are
 * marked so the encoder can distinguish them). Offsets always refer to the
 * original sentence, which is what aspect-span alignment needs.
 */

export interface Token {
  text: string
  /** inclusive char offset into the source sentence */
  start: number
  /** exclusive char offset */
  end: number
  /** true when this is a continuation piece of a longer word */
  continuation: boolean
}

const PUNCT = /[.,!?;:()"'@#$%&*~`^+=|/\\[\]{}<>-]/
const MAX_PIECE = 4

export function tokenize(sentence: string): Token[] {
  const tokens: Token[] = []
  let i = 0
  while (i < sentence.length) {
    const ch = sentence[i]
    if (/\s/.test(ch)) {
      i++
      continue
    }
    if (PUNCT.test(ch)) {
      tokens.push({ text: ch, start: i, end: i + 1, continuation: false })
      i++
      continue
    }
    let j = i
    while (j < sentence.length && !/\s/.test(sentence[j]) && !PUNCT.test(sentence[j])) {
      j++
    }
    for (let k = i; k < j; k += MAX_PIECE) {
      const end = Math.min(k + MAX_PIECE, j)
      tokens.push({
        text: sentence.slice(k, end),
        start: k,
        end,
        continuation: k > i,
      })
    }
    i = j
  }
  return tokens
}

/** Indices of all tokens overlapping a half-open character span. */
export function alignSpan(tokens: Token[], spanStart: number, spanEnd: number): number[] {
  const out: number[] = []
  tokens.forEach((token, idx) => {
    if (token.start < spanEnd && token.end > spanStart) out.push(idx)
  })
  return out
}
