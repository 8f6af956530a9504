/**
 * Caption-text embedding: a list of caption strings becomes a caption
 * bank (jsonl records plus an embedding blob) in the same space as the
 * chosen encoder family's clip embeddings.
 */

import * as fs from 'fs';
import { getEncoder } from './encoders';
import { CaptionRecord, EmbeddingMatrix, writeCaptionBank } from './lvme';
import { log } from './log';

export class CaptionError extends Error {}

/** One embedding row per text, in order. Identical texts give identical rows. */
export function embedCaptions(texts: string[], encoderId: string): EmbeddingMatrix {
  const family = getEncoder(encoderId);
  if (texts.length === 0) {
    throw new CaptionError('no caption texts given');
  }
  const data = new Float32Array(texts.length * family.dim);
  texts.forEach((text, i) => {
    data.set(family.encodeText(text), i * family.dim);
  });
  return { rows: texts.length, dim: family.dim, data };
}

/** Read one caption per line; blank lines are skipped. */
export function readTextsFile(filePath: string): string[] {
  const raw = fs.readFileSync(filePath, 'utf-8');
  return raw.split('\n').filter((line) => line.trim().length > 0);
}

export function runEmbedCaptions(textsPath: string, encoderId: string, outPath: string): void {
  const texts = readTextsFile(textsPath);
  const matrix = embedCaptions(texts, encoderId);
  const captions: CaptionRecord[] = texts.map((text, i) => ({ captionId: `c${i}`, text }));
  writeCaptionBank(outPath, captions, matrix);
  log.info(`embedded ${texts.length} captions (${encoderId}, d=${matrix.dim}) to ${outPath}`);
}
