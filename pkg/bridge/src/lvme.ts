/**
 * LVME binary format: embedding blobs, corpus manifests, caption banks.
 *
 * Blob layout (little-endian, extension .lvme):
 *
 *     8 bytes  magic  "LVMECORP"
 *     u32      format version (currently 1)
 *     u32      N   number of segment rows
 *     u32      d   embedding dimension
 *     N*d*4    float32 payload, row-major
 *
 * A corpus directory holds blobs/<video_id>.lvme plus manifest.jsonl: a
 * header line followed by one record per video, all keys sorted so
 * identical corpora are byte-identical. A caption bank is <stem>.jsonl
 * (one {caption_id, text} record per line) plus <stem>.lvme beside it
 * with the embedding rows in the same order.
 */

import * as fs from 'fs';
import * as path from 'path';

export const BLOB_MAGIC = 'LVMECORP';
export const FORMAT_VERSION = 1;
export const BLOB_SUFFIX = '.lvme';
export const MANIFEST_NAME = 'manifest.jsonl';

const HEADER_BYTES = 8 + 12;

export interface EmbeddingMatrix {
  rows: number;
  dim: number;
  data: Float32Array; // rows * dim values, row-major
}

export class FormatError extends Error {}

export function encodeBlob(matrix: EmbeddingMatrix): Buffer {
  const { rows, dim, data } = matrix;
  if (rows < 1 || dim < 1) {
    throw new FormatError(`blob payload must be nonempty, got ${rows}x${dim}`);
  }
  if (data.length !== rows * dim) {
    throw new FormatError(`payload has ${data.length} values, expected ${rows * dim}`);
  }
  const buf = Buffer.alloc(HEADER_BYTES + rows * dim * 4);
  buf.write(BLOB_MAGIC, 0, 'ascii');
  buf.writeUInt32LE(FORMAT_VERSION, 8);
  buf.writeUInt32LE(rows, 12);
  buf.writeUInt32LE(dim, 16);
  // explicit little-endian writes keep the output identical on any host
  const view = new DataView(buf.buffer, buf.byteOffset + HEADER_BYTES);
  for (let i = 0; i < data.length; i++) {
    if (!Number.isFinite(data[i])) {
      throw new FormatError(`non-finite value at payload index ${i}`);
    }
    view.setFloat32(i * 4, data[i], true);
  }
  return buf;
}

export function writeBlob(filePath: string, matrix: EmbeddingMatrix): void {
  fs.writeFileSync(filePath, encodeBlob(matrix));
}

export function readBlob(filePath: string): EmbeddingMatrix {
  const raw = fs.readFileSync(filePath);
  if (raw.length < 8 || raw.toString('ascii', 0, 8) !== BLOB_MAGIC) {
    throw new FormatError(`${filePath}: not an embedding blob (bad magic)`);
  }
  if (raw.length < HEADER_BYTES) {
    throw new FormatError(`${filePath}: header cut short`);
  }
  const version = raw.readUInt32LE(8);
  if (version !== FORMAT_VERSION) {
    throw new FormatError(`${filePath}: format version ${version}, expected ${FORMAT_VERSION}`);
  }
  const rows = raw.readUInt32LE(12);
  const dim = raw.readUInt32LE(16);
  const expected = HEADER_BYTES + rows * dim * 4;
  if (raw.length < expected) {
    throw new FormatError(`${filePath}: payload is ${raw.length} bytes, header promises ${expected}`);
  }
  if (raw.length > expected) {
    throw new FormatError(`${filePath}: ${raw.length - expected} trailing bytes after payload`);
  }
  const data = new Float32Array(rows * dim);
  const view = new DataView(raw.buffer, raw.byteOffset + HEADER_BYTES);
  for (let i = 0; i < data.length; i++) {
    data[i] = view.getFloat32(i * 4, true);
  }
  return { rows, dim, data };
}

/** Render a float the way the reference reader writes it back: integral values keep a trailing .0 */
function floatLiteral(x: number): string {
  if (!Number.isFinite(x)) {
    throw new FormatError(`cannot serialize non-finite number ${x}`);
  }
  return Number.isInteger(x) ? `${x}.0` : String(x);
}

export interface CorpusEntry {
  videoId: string;
  matrix: EmbeddingMatrix;
}

export interface CorpusHeaderInfo {
  embeddingDim: number;
  segmentLenS: number;
  encoderId: string;
  /** digest of the encoder's fixed preprocessing parameters */
  preprocessing: string;
}

/**
 * Persist entries as blobs/<video_id>.lvme plus manifest.jsonl.
 *
 * Keys in every manifest line are emitted in sorted order and numbers in
 * the reference reader's repr, so reruns produce byte-identical output.
 */
export function writeCorpus(entries: CorpusEntry[], outDir: string, info: CorpusHeaderInfo): string {
  if (entries.length === 0) {
    throw new FormatError('writeCorpus: empty corpus');
  }
  const ids = new Set(entries.map((e) => e.videoId));
  if (ids.size !== entries.length) {
    throw new FormatError('writeCorpus: duplicate video id');
  }
  for (const e of entries) {
    if (e.matrix.dim !== info.embeddingDim) {
      throw new FormatError(`${e.videoId}: dim ${e.matrix.dim} vs corpus dim ${info.embeddingDim}`);
    }
  }
  const blobDir = path.join(outDir, 'blobs');
  fs.mkdirSync(blobDir, { recursive: true });

  const header =
    `{"count":${entries.length}` +
    `,"embedding_dim":${info.embeddingDim}` +
    `,"encoder_id":${JSON.stringify(info.encoderId)}` +
    `,"preprocessing":${JSON.stringify(info.preprocessing)}` +
    `,"segment_len_s":${floatLiteral(info.segmentLenS)}` +
    `,"version":${FORMAT_VERSION}}`;
  const lines = [header];
  for (const e of entries) {
    const rel = `blobs/${e.videoId}${BLOB_SUFFIX}`;
    writeBlob(path.join(outDir, rel), e.matrix);
    lines.push(
      `{"blob":${JSON.stringify(rel)}` +
        `,"caption_ids":null` +
        `,"labels":{}` +
        `,"n_segments":${e.matrix.rows}` +
        `,"video_id":${JSON.stringify(e.videoId)}}`,
    );
  }
  const manifestPath = path.join(outDir, MANIFEST_NAME);
  fs.writeFileSync(manifestPath, lines.join('\n') + '\n');
  return manifestPath;
}

export interface CaptionRecord {
  captionId: string;
  text: string;
}

/**
 * Write <stem>.jsonl plus <stem>.lvme with one embedding row per caption.
 * Row i of the blob belongs to line i of the jsonl file.
 */
export function writeCaptionBank(
  jsonlPath: string,
  captions: CaptionRecord[],
  matrix: EmbeddingMatrix,
): void {
  if (!jsonlPath.endsWith('.jsonl')) {
    throw new FormatError(`caption bank text file must end in .jsonl, got ${jsonlPath}`);
  }
  if (captions.length !== matrix.rows) {
    throw new FormatError(`${captions.length} captions but ${matrix.rows} embedding rows`);
  }
  const seen = new Set(captions.map((c) => c.captionId));
  if (seen.size !== captions.length) {
    throw new FormatError('duplicate caption ids');
  }
  const blobPath = jsonlPath.slice(0, -'.jsonl'.length) + BLOB_SUFFIX;
  writeBlob(blobPath, matrix);
  const lines = captions.map(
    (c) => `{"caption_id":${JSON.stringify(c.captionId)},"text":${JSON.stringify(c.text)}}`,
  );
  fs.writeFileSync(jsonlPath, lines.join('\n') + '\n');
}
