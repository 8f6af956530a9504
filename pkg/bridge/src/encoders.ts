/**
 * Deterministic clip and caption encoders sharing one embedding space.
 *
 * An encoder family maps both 5-second clips and caption text into the
 * same d-dimensional space. The first dimensions carry interpretable
 * visual attributes (brightness, contrast, warmth, motion, detail) that
 * both modalities can express; the rest are modality-private texture.
 * Everything is a pure function of the input bytes, so repeated runs
 * produce bit-identical embeddings, and every family unit-normalizes
 * its output rows.
 */

import { createHash } from 'crypto';
import { Segment } from './segments';

export const EMBED_DIM = 64;

// shared semantic layout, dims 0..7 (5..7 reserved, zero on both sides)
const DIM_BRIGHTNESS = 0;
const DIM_CONTRAST = 1;
const DIM_WARMTH = 2;
const DIM_MOTION = 3;
const DIM_DETAIL = 4;

// video-private texture: 4x4 luma grid then 16-bin luma histogram
const GRID = 4;
const GRID_OFFSET = 8;
const HIST_BINS = 16;
const HIST_OFFSET = GRID_OFFSET + GRID * GRID;

// caption-private texture: hashed word features
const TEXT_OFFSET = HIST_OFFSET + HIST_BINS;
const TEXT_DIMS = EMBED_DIM - TEXT_OFFSET;

const PRIVATE_WEIGHT = 0.5;

// saturation constants for mapping raw byte statistics into [-1, 1]
const CONTRAST_SCALE = 64;
const WARMTH_SCALE = 64;
const MOTION_SCALE = 32;
const DETAIL_SCALE = 32;

export class EncoderError extends Error {}

export interface EncoderFamily {
  id: string;
  dim: number;
  /** true when output rows are unit-normalized (they are, for every family here) */
  normalizes: boolean;
  /** digest of the fixed preprocessing constants, recorded in manifests */
  preprocessing: string;
  encodeClip(segment: Segment): Float32Array;
  encodeText(text: string): Float32Array;
}

function clamp(x: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, x));
}

function unitNormalize(values: Float64Array): Float32Array {
  let sq = 0;
  for (let i = 0; i < values.length; i++) sq += values[i] * values[i];
  const norm = Math.sqrt(sq);
  if (norm === 0) {
    throw new EncoderError('cannot normalize a zero embedding');
  }
  const out = new Float32Array(values.length);
  for (let i = 0; i < values.length; i++) out[i] = values[i] / norm;
  return out;
}

function fnv1a(s: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < s.length; i++) {
    h ^= s.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

/** Mean luma, contrast, chroma balance, temporal and spatial activity over a segment's frames. */
function clipStatistics(segment: Segment): Float64Array {
  const v = new Float64Array(EMBED_DIM);
  const frames = segment.frames;

  let sumY = 0;
  let sumYSq = 0;
  let nY = 0;
  let sumCb = 0;
  let sumCr = 0;
  let nC = 0;
  const gridSum = new Float64Array(GRID * GRID);
  const gridCount = new Float64Array(GRID * GRID);
  const hist = new Float64Array(HIST_BINS);

  for (const frame of frames) {
    const { width, height } = frame;
    for (let i = 0; i < frame.y.length; i++) {
      const y = frame.y[i];
      sumY += y;
      sumYSq += y * y;
      hist[y >> 4] += 1;
      const px = i % width;
      const py = (i - px) / width;
      const cell = Math.min(GRID - 1, Math.floor((py * GRID) / height)) * GRID +
        Math.min(GRID - 1, Math.floor((px * GRID) / width));
      gridSum[cell] += y;
      gridCount[cell] += 1;
    }
    nY += frame.y.length;
    for (let i = 0; i < frame.cb.length; i++) {
      sumCb += frame.cb[i];
      sumCr += frame.cr[i];
    }
    nC += frame.cb.length;
  }

  // temporal activity: mean absolute luma change between consecutive frames
  let deltaSum = 0;
  let deltaN = 0;
  for (let f = 1; f < frames.length; f++) {
    const prev = frames[f - 1].y;
    const cur = frames[f].y;
    for (let i = 0; i < cur.length; i++) {
      deltaSum += Math.abs(cur[i] - prev[i]);
    }
    deltaN += cur.length;
  }

  // spatial activity: mean absolute horizontal gradient
  let gradSum = 0;
  let gradN = 0;
  for (const frame of frames) {
    for (let i = 0; i + 1 < frame.y.length; i++) {
      if ((i + 1) % frame.width === 0) continue; // row boundary
      gradSum += Math.abs(frame.y[i + 1] - frame.y[i]);
      gradN += 1;
    }
  }

  const meanY = sumY / nY;
  const varY = Math.max(0, sumYSq / nY - meanY * meanY);
  v[DIM_BRIGHTNESS] = 2 * (meanY / 255) - 1;
  v[DIM_CONTRAST] = 2 * clamp(Math.sqrt(varY) / CONTRAST_SCALE, 0, 1) - 1;
  v[DIM_WARMTH] = nC > 0 ? clamp((sumCr - sumCb) / nC / WARMTH_SCALE, -1, 1) : 0;
  v[DIM_MOTION] = 2 * clamp(deltaN > 0 ? deltaSum / deltaN / MOTION_SCALE : 0, 0, 1) - 1;
  v[DIM_DETAIL] = 2 * clamp(gradN > 0 ? gradSum / gradN / DETAIL_SCALE : 0, 0, 1) - 1;

  for (let c = 0; c < GRID * GRID; c++) {
    const mean = gridCount[c] > 0 ? gridSum[c] / gridCount[c] : 0;
    v[GRID_OFFSET + c] = PRIVATE_WEIGHT * (2 * (mean / 255) - 1);
  }
  for (let b = 0; b < HIST_BINS; b++) {
    v[HIST_OFFSET + b] = PRIVATE_WEIGHT * Math.sqrt(hist[b] / nY);
  }
  return v;
}

// caption vocabulary: each attribute word pushes one shared dimension
const ATTRIBUTE_WORDS: Record<string, [number, number]> = {
  bright: [DIM_BRIGHTNESS, 1],
  light: [DIM_BRIGHTNESS, 1],
  white: [DIM_BRIGHTNESS, 1],
  dark: [DIM_BRIGHTNESS, -1],
  black: [DIM_BRIGHTNESS, -1],
  dim: [DIM_BRIGHTNESS, -1],
  vivid: [DIM_CONTRAST, 1],
  contrasty: [DIM_CONTRAST, 1],
  flat: [DIM_CONTRAST, -1],
  uniform: [DIM_CONTRAST, -1],
  warm: [DIM_WARMTH, 1],
  red: [DIM_WARMTH, 1],
  orange: [DIM_WARMTH, 1],
  cool: [DIM_WARMTH, -1],
  blue: [DIM_WARMTH, -1],
  moving: [DIM_MOTION, 1],
  flickering: [DIM_MOTION, 1],
  dynamic: [DIM_MOTION, 1],
  still: [DIM_MOTION, -1],
  static: [DIM_MOTION, -1],
  steady: [DIM_MOTION, -1],
  detailed: [DIM_DETAIL, 1],
  busy: [DIM_DETAIL, 1],
  textured: [DIM_DETAIL, 1],
  plain: [DIM_DETAIL, -1],
  smooth: [DIM_DETAIL, -1],
  empty: [DIM_DETAIL, -1],
};

function textStatistics(text: string): Float64Array {
  const tokens = text.toLowerCase().split(/[^a-z0-9]+/).filter((t) => t.length > 0);
  if (tokens.length === 0) {
    throw new EncoderError(`caption has no tokens: ${JSON.stringify(text)}`);
  }
  const v = new Float64Array(EMBED_DIM);
  for (const token of tokens) {
    const attr = ATTRIBUTE_WORDS[token];
    if (attr) {
      v[attr[0]] += attr[1];
    } else {
      const h = fnv1a(token);
      const dim = TEXT_OFFSET + (h % TEXT_DIMS);
      v[dim] += PRIVATE_WEIGHT * ((h >>> 8) & 1 ? 1 : -1);
    }
  }
  for (let i = 0; i < TEXT_OFFSET; i++) {
    v[i] = clamp(v[i], -1, 1);
  }
  return v;
}

function preprocessingDigest(params: Record<string, unknown>): string {
  const canonical = JSON.stringify(params, Object.keys(params).sort());
  return 'sha256:' + createHash('sha256').update(canonical).digest('hex');
}

const lumastatV1: EncoderFamily = {
  id: 'lumastat-v1',
  dim: EMBED_DIM,
  normalizes: true,
  preprocessing: preprocessingDigest({
    family: 'lumastat',
    version: 1,
    dim: EMBED_DIM,
    frameSampling: 'all frames whose start timestamp falls in the segment',
    sharedDims: ['brightness', 'contrast', 'warmth', 'motion', 'detail'],
    gridSize: GRID,
    histogramBins: HIST_BINS,
    scales: {
      contrast: CONTRAST_SCALE,
      warmth: WARMTH_SCALE,
      motion: MOTION_SCALE,
      detail: DETAIL_SCALE,
    },
    privateWeight: PRIVATE_WEIGHT,
    normalize: 'unit-l2',
  }),
  encodeClip(segment: Segment): Float32Array {
    return unitNormalize(clipStatistics(segment));
  },
  encodeText(text: string): Float32Array {
    return unitNormalize(textStatistics(text));
  },
};

const FAMILIES = new Map<string, EncoderFamily>([[lumastatV1.id, lumastatV1]]);

export function getEncoder(id: string): EncoderFamily {
  const family = FAMILIES.get(id);
  if (!family) {
    const known = [...FAMILIES.keys()].join(', ');
    throw new EncoderError(`unknown encoder '${id}' (available: ${known})`);
  }
  return family;
}

export function listEncoders(): string[] {
  return [...FAMILIES.keys()];
}
