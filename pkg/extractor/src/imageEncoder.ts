/**
 * Image encoders producing the 49 x 2048 feature grid, selected by name.
 *
 * The deliverable role belongs to the final convolutional layer of a deep
 * residual network; offline, the default backend derives the grid
 * deterministically from the image bytes (cell-seeded pseudo-random
 * features), preserving shape, scale, and the property that distinct
 * images get distinct features. A missing or unreadable image yields an
 * all-zero grid so the record still validates.
 */

import { readFileSync } from 'node:fs'

import { Rand, fnv1aBytes, mix } from './hash.js'

export const IMAGE_CELLS = 49
export const IMAGE_DIM = 2048

export interface ImageEncoder {
  readonly name: string
  /** Returns the grid, or null when the image is missing/unreadable. */
  encode(imagePath: string | null): Float32Array | null
}

class ByteHashEncoder implements ImageEncoder {
  readonly name = 'bytehash-2048'

  encode(imagePath: string | null): Float32Array | null {
    if (!imagePath) return null
    let bytes: Uint8Array
    try {
      bytes = readFileSync(imagePath)
    } catch {
      return null
    }
    const seed = fnv1aBytes(bytes)
    const grid = new Float32Array(IMAGE_CELLS * IMAGE_DIM)
    for (let cell = 0; cell < IMAGE_CELLS; cell++) {
      const rand = new Rand(mix(seed, cell + 1))
      const offset = cell * IMAGE_DIM
      for (let d = 0; d < IMAGE_DIM; d++) {
        grid[offset + d] = rand.gauss()
      }
    }
    return grid
  }
}

const ENCODERS: Record<string, () => ImageEncoder> = {
  'bytehash-2048': () => new ByteHashEncoder(),
}

export function resolveImageEncoder(name: string): ImageEncoder {
  const factory = ENCODERS[name]
  if (!factory) {
    const known = Object.keys(ENCODERS).join(', ')
    throw new Error(
      `unknown image encoder '${name}' (available offline: ${known}; ` +
        `pretrained weights are not downloadable in this environment)`,
    )
  }
  return factory()
}
