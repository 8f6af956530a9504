/**
 * Extraction jobs: videos in, corpus directory out.
 *
 * Each video is decoded, segmented, and encoded independently, so videos
 * run in parallel and a bad file costs only itself: it is skipped with a
 * logged reason. Blobs are one file per video, which keeps parallel
 * writes contention-free; the manifest is assembled once at the end in
 * sorted video-id order so output is deterministic.
 */

import * as fs from 'fs';
import * as path from 'path';
import * as os from 'os';
import fg from 'fast-glob';
import { getEncoder } from './encoders';
import { CorpusEntry, EmbeddingMatrix, writeCorpus } from './lvme';
import { assignFrames } from './segments';
import { parseY4m } from './y4m';
import { log } from './log';

export interface ExtractJob {
  videosGlob: string;
  encoderId: string;
  segmentLenS: number;
  outDir: string;
  /** parallel video decodes; defaults to min(4, cpu count) */
  jobs?: number;
}

export interface ExtractResult {
  manifestPath: string;
  extracted: string[];
  skipped: Array<{ videoId: string; reason: string }>;
}

export class ExtractError extends Error {}

/** Decode one video and encode every segment; one embedding row per segment. */
export function extractVideo(filePath: string, encoderId: string, segmentLenS: number): EmbeddingMatrix {
  const family = getEncoder(encoderId);
  const video = parseY4m(fs.readFileSync(filePath));
  const segments = assignFrames(video, segmentLenS);
  const data = new Float32Array(segments.length * family.dim);
  segments.forEach((segment, i) => {
    data.set(family.encodeClip(segment), i * family.dim);
  });
  return { rows: segments.length, dim: family.dim, data };
}

async function mapPool<T, R>(items: T[], limit: number, fn: (item: T) => Promise<R>): Promise<R[]> {
  const results: R[] = new Array(items.length);
  let next = 0;
  async function worker(): Promise<void> {
    while (next < items.length) {
      const i = next++;
      results[i] = await fn(items[i]);
    }
  }
  const workers = Array.from({ length: Math.min(limit, items.length) }, worker);
  await Promise.all(workers);
  return results;
}

export async function runExtract(job: ExtractJob): Promise<ExtractResult> {
  const family = getEncoder(job.encoderId); // fail fast on a bad id
  if (!(job.segmentLenS > 0)) {
    throw new ExtractError(`segment length must be positive, got ${job.segmentLenS}`);
  }
  const files = (await fg(job.videosGlob, { onlyFiles: true })).sort();
  if (files.length === 0) {
    throw new ExtractError(`no videos match ${job.videosGlob}`);
  }

  // basename stems become video ids; a collision means the job is ambiguous
  const stems = new Map<string, string>();
  for (const file of files) {
    const stem = path.basename(file).replace(/\.[^.]*$/, '');
    const prev = stems.get(stem);
    if (prev !== undefined) {
      throw new ExtractError(`video id '${stem}' is claimed by both ${prev} and ${file}`);
    }
    stems.set(stem, file);
  }

  const limit = job.jobs ?? Math.min(4, os.cpus().length);
  const tasks = [...stems.entries()];
  const outcomes = await mapPool(tasks, Math.max(1, limit), async ([videoId, file]) => {
    try {
      const matrix = extractVideo(file, job.encoderId, job.segmentLenS);
      return { videoId, matrix, reason: null as string | null };
    } catch (err) {
      const reason = err instanceof Error ? err.message : String(err);
      log.warn(`skip ${videoId}: ${reason}`);
      return { videoId, matrix: null, reason };
    }
  });

  const entries: CorpusEntry[] = [];
  const skipped: Array<{ videoId: string; reason: string }> = [];
  for (const o of outcomes) {
    if (o.matrix) {
      entries.push({ videoId: o.videoId, matrix: o.matrix });
    } else {
      skipped.push({ videoId: o.videoId, reason: o.reason ?? 'unknown' });
    }
  }
  if (entries.length === 0) {
    throw new ExtractError(`all ${files.length} videos failed to extract`);
  }
  entries.sort((a, b) => (a.videoId < b.videoId ? -1 : a.videoId > b.videoId ? 1 : 0));

  const manifestPath = writeCorpus(entries, job.outDir, {
    embeddingDim: family.dim,
    segmentLenS: job.segmentLenS,
    encoderId: family.id,
    preprocessing: family.preprocessing,
  });
  log.info(`extracted ${entries.length}/${files.length} videos to ${job.outDir}`);
  return { manifestPath, extracted: entries.map((e) => e.videoId), skipped };
}
