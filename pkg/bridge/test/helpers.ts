/** Test fixtures: synthesize small .y4m streams with controlled content. */

import * as fs from 'fs';
import * as path from 'path';

export interface FramePaint {
  /** luma byte for pixel (x, y) of frame i */
  y: (i: number, x: number, yPos: number) => number;
  cb?: (i: number) => number;
  cr?: (i: number) => number;
}

export interface Y4mSpec {
  width?: number;
  height?: number;
  fpsNum?: number;
  fpsDen?: number;
  frames: number;
  paint: FramePaint;
}

export function makeY4m(spec: Y4mSpec): Buffer {
  const w = spec.width ?? 8;
  const h = spec.height ?? 8;
  const fpsNum = spec.fpsNum ?? 2;
  const fpsDen = spec.fpsDen ?? 1;
  const header = Buffer.from(`YUV4MPEG2 W${w} H${h} F${fpsNum}:${fpsDen} Ip A1:1 C420\n`, 'ascii');
  const cw = w / 2;
  const ch = h / 2;
  const chunks: Buffer[] = [header];
  for (let i = 0; i < spec.frames; i++) {
    chunks.push(Buffer.from('FRAME\n', 'ascii'));
    const body = Buffer.alloc(w * h + 2 * cw * ch);
    for (let yy = 0; yy < h; yy++) {
      for (let xx = 0; xx < w; xx++) {
        body[yy * w + xx] = spec.paint.y(i, xx, yy) & 0xff;
      }
    }
    body.fill(spec.paint.cb ? spec.paint.cb(i) & 0xff : 128, w * h, w * h + cw * ch);
    body.fill(spec.paint.cr ? spec.paint.cr(i) & 0xff : 128, w * h + cw * ch);
    chunks.push(body);
  }
  return Buffer.concat(chunks);
}

/** Flat gray, warm bright, cool dark, strobing: distinct statistic profiles. */
export const PAINTS = {
  gray: { y: () => 128 } as FramePaint,
  brightWarm: { y: () => 230, cb: () => 90, cr: () => 190 } as FramePaint,
  darkCool: { y: () => 25, cb: () => 190, cr: () => 90 } as FramePaint,
  strobe: { y: (i: number) => (i % 2 === 0 ? 235 : 20) } as FramePaint,
  gradient: { y: (_i: number, x: number, yPos: number) => (x * 29 + yPos * 17) } as FramePaint,
};

export function writeTempY4m(dir: string, name: string, spec: Y4mSpec): string {
  const file = path.join(dir, name);
  fs.writeFileSync(file, makeY4m(spec));
  return file;
}
