/**
 * Token encoders producing 768-dim states, selected by name.
 *
 * The deliverable role is normally played by a pretrained 12-layer
 * transformer; this environment cannot download weights, so the default
 * backend is a deterministic stand-in: hash-seeded token embeddings
 * refined by 12 rounds of neighbour mixing, which gives context-sensitive
 * (position- and neighbour-dependent) states with the right shape and
 * scale. Plugging a real encoder means registering another name here.
 */

import { Rand, fnv1a, mix } from './hash.js'
import { Token } from './tokenizer.js'

export const TEXT_DIM = 768
const LAYERS = 12

export interface TokenEncoder {
  readonly name: string
  encode(tokens: Token[]): Float32Array[]
}

function baseEmbedding(token: Token): Float64Array {
  const seed = mix(fnv1a(token.text.toLowerCase()), token.continuation ? 7 : 3)
  const rand = new Rand(seed)
  const vec = new Float64Array(TEXT_DIM)
  for (let d = 0; d < TEXT_DIM; d++) vec[d] = rand.gauss()
  return vec
}

function renormalize(vec: Float64Array): void {
  let sumSq = 0
  for (let d = 0; d < vec.length; d++) sumSq += vec[d] * vec[d]
  const scale = Math.sqrt(vec.length) / Math.max(Math.sqrt(sumSq), 1e-8)
  for (let d = 0; d < vec.length; d++) vec[d] *= scale
}

class HashedEncoder implements TokenEncoder {
  readonly name = 'hashed-768'

  encode(tokens: Token[]): Float32Array[] {
    const states = tokens.map(baseEmbedding)
    for (let layer = 0; layer < LAYERS; layer++) {
      const prev = states.map((s) => Float64Array.from(s))
      for (let t = 0; t < states.length; t++) {
        const here = states[t]
        const left = prev[t - 1]
        const right = prev[t + 1]
        for (let d = 0; d < TEXT_DIM; d++) {
          let value = 0.7 * prev[t][d]
          if (left) value += 0.2 * left[d]
          if (right) value += 0.1 * right[d]
          here[d] = value
        }
        renormalize(here)
      }
    }
    return states.map((s) => Float32Array.from(s))
  }
}

const ENCODERS: Record<string, () => TokenEncoder> = {
  'hashed-768': () => new HashedEncoder(),
}

export function resolveTokenEncoder(name: string): TokenEncoder {
  const factory = ENCODERS[name]
  if (!factory) {
    const known = Object.keys(ENCODERS).join(', ')
    throw new Error(
      `unknown text encoder '${name}' (available offline: ${known}; ` +
        `pretrained weights are not downloadable in this environment)`,
    )
  }
  return factory()
}
