#!/usr/bin/env node
/**
 * gmab-extract: convert a TSV corpus plus image directory into GMAB
 * records and a JSON manifest for the downstream classifier.
 */

import { readFileSync } from 'node:fs'
import { parseArgs } from 'node:util'

import { parseCorpus } from './corpus.js'
import { extractCorpus, writeDataset } from './extract.js'

const USAGE = `usage: gmab-extract --corpus corpus.tsv --out DIR [options]

options:
  --corpus PATH       TSV corpus: sentence, aspect, span-start, span-end,
                      label[, image-filename] per line (-1 spans = implicit)
  --images DIR        directory containing the referenced images
  --out DIR           output directory for records + manifest.json
  --split NAME        manifest split tag (default: train)
  --text-model NAME   token encoder backend (default: hashed-768)
  --image-model NAME  image encoder backend (default: bytehash-2048)
  --parser NAME       dependency backend (default: chain-heuristic)
  --id-prefix NAME    record id prefix (default: corpus file stem)
`

export function main(argv: string[]): number {
  let parsed
  try {
    parsed = parseArgs({
      args: argv,
      options: {
        corpus: { type: 'string' },
        images: { type: 'string' },
        out: { type: 'string' },
        split: { type: 'string', default: 'train' },
        'text-model': { type: 'string', default: 'hashed-768' },
        'image-model': { type: 'string', default: 'bytehash-2048' },
        parser: { type: 'string', default: 'chain-heuristic' },
        'id-prefix': { type: 'string' },
        help: { type: 'boolean', default: false },
      },
    })
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err))
    console.error(USAGE)
    return 1
  }
  const values = parsed.values
  if (values.help) {
    console.log(USAGE)
    return 0
  }
  if (!values.corpus || !values.out) {
    console.error('--corpus and --out are required')
    console.error(USAGE)
    return 1
  }
  let corpusText: string
  try {
    corpusText = readFileSync(values.corpus, 'utf8')
  } catch {
    console.error(`corpus not found: ${values.corpus}`)
    return 1
  }
  try {
    const examples = parseCorpus(corpusText)
    const stem = values.corpus.replace(/.*\//, '').replace(/\.[^.]*$/, '')
    const result = extractCorpus(examples, {
      textModel: values['text-model'],
      imageModel: values['image-model'],
      parser: values.parser,
      imageDir: values.images,
      split: values.split,
      idPrefix: values['id-prefix'] ?? stem,
      log: (message) => console.error(message),
    })
    const manifestPath = writeDataset(result, values.out)
    console.log(
      JSON.stringify({
        manifest: manifestPath,
        written: result.records.length,
        skipped: result.skipped.length,
      }),
    )
    return 0
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err))
    return 1
  }
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url.endsWith(process.argv[1].replace(/.*\//, ''))
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)))
}
