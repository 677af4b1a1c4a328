export { parseCorpus, RawExample } from './corpus.js'
export { extractCorpus, extractExample, writeDataset, ExtractOptions, ExtractResult, MAX_TOKENS } from './extract.js'
export { GmabRecord, ManifestEntry, LABELS, decodeRecord, encodeRecord, encodeManifest, labelIndex } from './gmab.js'
export { resolveImageEncoder, IMAGE_CELLS, IMAGE_DIM } from './imageEncoder.js'
export { resolveParser } from './parser.js'
export { resolveTokenEncoder, TEXT_DIM } from './textEncoder.js'
export { alignSpan, tokenize, Token } from './tokenizer.js'
