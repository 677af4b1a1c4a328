/**
 * The extraction pipeline: raw examples in, GMAB records plus manifest out.
 *
 * Per example: tokenize the sentence, encode token states, encode the
 * aspect term separately, map the aspect's character span to overlapping
 * subtokens, build the dependency adjacency (undirected, self-looped),
 * and derive the image grid. Missing images produce a zero grid and a
 * "-noimg" id suffix; examples whose aspect span aligns to no token are
 * skipped with a logged reason.
 */

import { mkdirSync, writeFileSync } from 'node:fs'
import { join } from 'node:path'

import { RawExample } from './corpus.js'
import { GmabRecord, ManifestEntry, encodeManifest, encodeRecord, labelIndex } from './gmab.js'
import { IMAGE_CELLS, IMAGE_DIM, ImageEncoder, resolveImageEncoder } from './imageEncoder.js'
import { DependencyParser, resolveParser } from './parser.js'
import { TEXT_DIM, TokenEncoder, resolveTokenEncoder } from './textEncoder.js'
import { alignSpan, tokenize } from './tokenizer.js'

export const MAX_TOKENS = 128

export interface ExtractOptions {
  textModel?: string
  imageModel?: string
  parser?: string
  imageDir?: string
  split?: string
  idPrefix?: string
  log?: (message: string) => void
}

export interface ExtractResult {
  records: GmabRecord[]
  entries: ManifestEntry[]
  skipped: { line: number; reason: string }[]
}

function flatten(states: Float32Array[]): Float32Array {
  const out = new Float32Array(states.length * TEXT_DIM)
  states.forEach((state, idx) => out.set(state, idx * TEXT_DIM))
  return out
}

function truncateAdjacency(adj: Uint8Array, fullN: number, n: number): Uint8Array {
  if (n === fullN) return adj
  const out = new Uint8Array(n * n)
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) out[i * n + j] = adj[i * fullN + j]
  }
  return out
}

export function extractExample(
  example: RawExample,
  encoders: { text: TokenEncoder; image: ImageEncoder; parser: DependencyParser },
  options: ExtractOptions,
  index: number,
): GmabRecord | { reason: string } {
  const tokens = tokenize(example.sentence)
  if (tokens.length === 0) return { reason: 'sentence has no tokens' }

  const explicit = example.spanStart !== null && example.spanEnd !== null
  let positions: number[] = []
  if (explicit) {
    positions = alignSpan(tokens, example.spanStart!, example.spanEnd!)
    if (positions.length === 0) return { reason: 'aspect span aligns to no token' }
  }

  const kept = tokens.slice(0, MAX_TOKENS)
  positions = positions.filter((p) => p < kept.length)
  if (explicit && positions.length === 0) {
    return { reason: 'aspect span truncated away' }
  }

  const aspectTokens = tokenize(example.aspect)
  if (aspectTokens.length === 0) return { reason: 'aspect term has no tokens' }

  const tokenFeats = flatten(encoders.text.encode(kept))
  const aspectFeats = flatten(encoders.text.encode(aspectTokens))
  const fullAdj = encoders.parser.adjacency(tokens)
  const adjacency = truncateAdjacency(fullAdj, tokens.length, kept.length)

  const imagePath = example.imageFile && options.imageDir
    ? join(options.imageDir, example.imageFile)
    : example.imageFile
  const grid = encoders.image.encode(imagePath ?? null)
  const missingImage = grid === null

  const prefix = options.idPrefix ?? 'ex'
  const id = `${prefix}-${String(index).padStart(5, '0')}${missingImage ? '-noimg' : ''}`
  return {
    id,
    nTokens: kept.length,
    tokenFeats,
    aspectPositions: positions,
    aspectFeats,
    imageGrid: grid ?? new Float32Array(IMAGE_CELLS * IMAGE_DIM),
    adjacency,
    label: labelIndex(example.label),
  }
}

export function extractCorpus(examples: RawExample[], options: ExtractOptions = {}): ExtractResult {
  const encoders = {
    text: resolveTokenEncoder(options.textModel ?? 'hashed-768'),
    image: resolveImageEncoder(options.imageModel ?? 'bytehash-2048'),
    parser: resolveParser(options.parser ?? 'chain-heuristic'),
  }
  const log = options.log ?? (() => undefined)
  const result: ExtractResult = { records: [], entries: [], skipped: [] }
  examples.forEach((example, index) => {
    const outcome = extractExample(example, encoders, options, index)
    if ('reason' in outcome) {
      result.skipped.push({ line: example.line, reason: outcome.reason })
      log(`skipping line ${example.line}: ${outcome.reason}`)
      return
    }
    result.records.push(outcome)
    result.entries.push({ path: `${outcome.id}.gmab`, split: options.split ?? 'train' })
  })
  return result
}

export function writeDataset(result: ExtractResult, outDir: string): string {
  mkdirSync(outDir, { recursive: true })
  result.records.forEach((record, idx) => {
    writeFileSync(join(outDir, result.entries[idx].path), encodeRecord(record))
  })
  const manifestPath = join(outDir, 'manifest.json')
  writeFileSync(manifestPath, encodeManifest(result.entries))
  return manifestPath
}
