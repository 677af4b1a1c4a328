/**
 * GMAB binary records: the wire format the downstream classifier consumes.
 *
 * Layout (little-endian): magic "GMAB" | version u32=1 | n_tokens u32 |
 * a_tokens u32 | label u32 | id_len u32 | id bytes | position count u32 |
 * positions u32[] | token_feats f32[n x 768] | aspect_feats f32[a x 768] |
 * image_grid f32[49 x 2048] | adjacency u8[n x n] row-major.
 */

import { IMAGE_CELLS, IMAGE_DIM } from './imageEncoder.js'
import { TEXT_DIM } from './textEncoder.js'

export const GMAB_MAGIC = 'GMAB'
export const GMAB_VERSION = 1

export const LABELS = ['negative', 'neutral', 'positive'] as const
export type Label = (typeof LABELS)[number]

export interface GmabRecord {
  id: string
  nTokens: number
  tokenFeats: Float32Array // nTokens * 768
  aspectPositions: number[] // sorted, possibly empty
  aspectFeats: Float32Array // aTokens * 768
  imageGrid: Float32Array // 49 * 2048
  adjacency: Uint8Array // nTokens * nTokens
  label: number
}

export function labelIndex(label: string): number {
  const idx = LABELS.indexOf(label.trim().toLowerCase() as Label)
  if (idx < 0) {
    throw new Error(`unknown label '${label}' (expected one of ${LABELS.join(', ')})`)
  }
  return idx
}

const LITTLE_ENDIAN = (() => {
  const probe = new DataView(new Float32Array([1]).buffer)
  return probe.getFloat32(0, true) === 1
})()

function writeFloats(buf: Buffer, offset: number, values: Float32Array): number {
  if (LITTLE_ENDIAN) {
    Buffer.from(values.buffer, values.byteOffset, values.byteLength).copy(buf, offset)
    return offset + values.byteLength
  }
  for (let i = 0; i < values.length; i++) {
    buf.writeFloatLE(values[i], offset)
    offset += 4
  }
  return offset
}

function readFloatsAt(buf: Buffer, offset: number, count: number): Float32Array {
  if (LITTLE_ENDIAN) {
    const bytes = buf.subarray(offset, offset + 4 * count)
    return new Float32Array(bytes.buffer.slice(bytes.byteOffset, bytes.byteOffset + bytes.byteLength))
  }
  const out = new Float32Array(count)
  for (let i = 0; i < count; i++) out[i] = buf.readFloatLE(offset + 4 * i)
  return out
}

export function encodeRecord(record: GmabRecord): Buffer {
  const idBytes = Buffer.from(record.id, 'utf8')
  const n = record.nTokens
  const aTokens = record.aspectFeats.length / TEXT_DIM
  const total =
    4 + 5 * 4 + idBytes.length + 4 + 4 * record.aspectPositions.length +
    4 * record.tokenFeats.length + 4 * record.aspectFeats.length +
    4 * record.imageGrid.length + record.adjacency.length
  const buf = Buffer.alloc(total)
  let offset = 0
  buf.write(GMAB_MAGIC, offset, 'ascii')
  offset += 4
  for (const value of [GMAB_VERSION, n, aTokens, record.label, idBytes.length]) {
    buf.writeUInt32LE(value, offset)
    offset += 4
  }
  idBytes.copy(buf, offset)
  offset += idBytes.length
  buf.writeUInt32LE(record.aspectPositions.length, offset)
  offset += 4
  for (const pos of record.aspectPositions) {
    buf.writeUInt32LE(pos, offset)
    offset += 4
  }
  offset = writeFloats(buf, offset, record.tokenFeats)
  offset = writeFloats(buf, offset, record.aspectFeats)
  offset = writeFloats(buf, offset, record.imageGrid)
  Buffer.from(record.adjacency).copy(buf, offset)
  offset += record.adjacency.length
  if (offset !== total) throw new Error(`encode size mismatch: ${offset} != ${total}`)
  return buf
}

export function decodeRecord(buf: Buffer): GmabRecord {
  let offset = 0
  const take = (count: number): number => {
    if (offset + count > buf.length) {
      throw new Error(`record truncated at offset ${offset}`)
    }
    const at = offset
    offset += count
    return at
  }
  const magic = buf.toString('ascii', take(4), 4)
  if (magic !== GMAB_MAGIC) throw new Error(`bad magic '${magic}'`)
  const version = buf.readUInt32LE(take(4))
  if (version !== GMAB_VERSION) throw new Error(`unsupported version ${version}`)
  const n = buf.readUInt32LE(take(4))
  const aTokens = buf.readUInt32LE(take(4))
  const label = buf.readUInt32LE(take(4))
  const idLen = buf.readUInt32LE(take(4))
  const id = buf.toString('utf8', take(idLen), offset)
  const posCount = buf.readUInt32LE(take(4))
  const aspectPositions: number[] = []
  for (let i = 0; i < posCount; i++) aspectPositions.push(buf.readUInt32LE(take(4)))

  const readFloats = (count: number): Float32Array => readFloatsAt(buf, take(4 * count), count)
  const tokenFeats = readFloats(n * TEXT_DIM)
  const aspectFeats = readFloats(aTokens * TEXT_DIM)
  const imageGrid = readFloats(IMAGE_CELLS * IMAGE_DIM)
  const adjacency = new Uint8Array(buf.subarray(take(n * n), offset))
  return { id, nTokens: n, tokenFeats, aspectPositions, aspectFeats, imageGrid, adjacency, label }
}

export interface ManifestEntry {
  path: string
  split: string
}

export function encodeManifest(entries: ManifestEntry[]): string {
  return JSON.stringify(entries, null, 2) + '\n'
}
