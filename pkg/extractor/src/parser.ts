/**
 * Dependency adjacency builders, selected by name.
 *
 * Arcs are taken as undirected and every token gets a self-loop, so the
 * matrix is symmetric with a unit diagonal regardless of backend. The
 * offline default is a deterministic head heuristic: continuation pieces
 * attach to their word start, punctuation attaches to the previous word,
 * and words attach to the most recent earlier word (sentence-initial words
 * to the next one). A real parser backend would register another name.
 */

import { Token } from './tokenizer.js'

export interface DependencyParser {
  readonly name: string
  adjacency(tokens: Token[]): Uint8Array
}

const PUNCT = /^[^\p{L}\p{N}]+$/u

function heuristicHead(tokens: Token[], index: number): number | null {
  if (tokens.length < 2) return null
  if (tokens[index].continuation) return index - 1
  for (let j = index - 1; j >= 0; j--) {
    if (!PUNCT.test(tokens[j].text)) return j
  }
  return index + 1 < tokens.length ? index + 1 : index - 1
}

class HeuristicParser implements DependencyParser {
  readonly name = 'chain-heuristic'

  adjacency(tokens: Token[]): Uint8Array {
    const n = tokens.length
    const adj = new Uint8Array(n * n)
    for (let i = 0; i < n; i++) adj[i * n + i] = 1
    for (let i = 0; i < n; i++) {
      const head = heuristicHead(tokens, i)
      if (head !== null && head >= 0 && head < n && head !== i) {
        adj[i * n + head] = 1
        adj[head * n + i] = 1
      }
    }
    return adj
  }
}

const PARSERS: Record<string, () => DependencyParser> = {
  'chain-heuristic': () => new HeuristicParser(),
}

export function resolveParser(name: string): DependencyParser {
  const factory = PARSERS[name]
  if (!factory) {
    const known = Object.keys(PARSERS).join(', ')
    throw new Error(`unknown parser '${name}' (available offline: ${known})`)
  }
  return factory()
}
