/**
 * Raw corpus parsing: one example per TSV row.
 *
 * Columns: sentence, aspect term, span start, span end, label, image
 * filename. The span is in characters into the sentence; -1/-1 (or blank)
 * marks an implicit aspect. A blank image filename marks a missing image.
 */

export interface RawExample {
  sentence: string
  aspect: string
  spanStart: number | null
  spanEnd: number | null
  label: string
  imageFile: string | null
  line: number
}

export function parseCorpus(tsv: string): RawExample[] {
  const out: RawExample[] = []
  const lines = tsv.split('\n')
  lines.forEach((line, idx) => {
    if (!line.trim() || line.startsWith('#')) return
    const cols = line.split('\t')
    if (cols.length < 5) {
      throw new Error(`line ${idx + 1}: expected at least 5 tab-separated columns`)
    }
    const [sentence, aspect, rawStart, rawEnd, label] = cols
    const imageFile = cols.length > 5 && cols[5].trim() ? cols[5].trim() : null
    const start = rawStart.trim() === '' ? -1 : Number(rawStart)
    const end = rawEnd.trim() === '' ? -1 : Number(rawEnd)
    if (!Number.isInteger(start) || !Number.isInteger(end)) {
      throw new Error(`line ${idx + 1}: spans must be integers`)
    }
    const implicit = start < 0 || end < 0
    if (!implicit && (start >= end || end > sentence.length)) {
      throw new Error(`line ${idx + 1}: span [${start}, ${end}) outside sentence bounds`)
    }
    if (!aspect.trim()) {
      throw new Error(`line ${idx + 1}: aspect term must not be empty`)
    }
    out.push({
      sentence,
      aspect,
      spanStart: implicit ? null : start,
      spanEnd: implicit ? null : end,
      label,
      imageFile,
      line: idx + 1,
    })
  })
  return out
}
