/**
 * Minimal YUV4MPEG2 (.y4m) reader.
 *
 * The format is a plain-text stream header followed by raw planar frames:
 *
 *     YUV4MPEG2 W<w> H<h> F<num>:<den> [I..] [A..] [C<colorspace>] [X..]\n
 *     FRAME[ params]\n <planar YCbCr bytes> ... repeated
 *
 * Uncompressed interchange only; produce it from anything else with
 * `ffmpeg -i input.mp4 output.y4m`. Supported colorspaces: the C420
 * family, C422, C444, and Cmono.
 */

export class VideoDecodeError extends Error {}

export interface Y4mVideo {
  width: number;
  height: number;
  fpsNum: number;
  fpsDen: number;
  colorspace: string;
  /** seconds, frames * fpsDen / fpsNum */
  durationS: number;
  frames: Y4mFrame[];
}

export interface Y4mFrame {
  /** start-of-frame timestamp in seconds */
  timestampS: number;
  width: number;
  height: number;
  y: Uint8Array;
  cb: Uint8Array; // empty for mono
  cr: Uint8Array;
  chromaWidth: number;
  chromaHeight: number;
}

interface PlaneGeometry {
  chromaWidth: number;
  chromaHeight: number;
}

function chromaGeometry(colorspace: string, w: number, h: number): PlaneGeometry {
  if (colorspace.startsWith('420')) {
    if (w % 2 !== 0 || h % 2 !== 0) {
      throw new VideoDecodeError(`4:2:0 needs even dimensions, got ${w}x${h}`);
    }
    return { chromaWidth: w / 2, chromaHeight: h / 2 };
  }
  if (colorspace.startsWith('422')) {
    if (w % 2 !== 0) {
      throw new VideoDecodeError(`4:2:2 needs even width, got ${w}`);
    }
    return { chromaWidth: w / 2, chromaHeight: h };
  }
  if (colorspace.startsWith('444')) {
    return { chromaWidth: w, chromaHeight: h };
  }
  if (colorspace === 'mono') {
    return { chromaWidth: 0, chromaHeight: 0 };
  }
  throw new VideoDecodeError(`unsupported colorspace C${colorspace}`);
}

export function parseY4m(raw: Buffer): Y4mVideo {
  const headerEnd = raw.indexOf(0x0a);
  if (headerEnd < 0) {
    throw new VideoDecodeError('no stream header line');
  }
  const header = raw.toString('ascii', 0, headerEnd);
  if (!header.startsWith('YUV4MPEG2')) {
    throw new VideoDecodeError('bad magic, expected YUV4MPEG2');
  }

  let width = 0;
  let height = 0;
  let fpsNum = 0;
  let fpsDen = 0;
  let colorspace = '420'; // the format's default when no C tag is present
  for (const param of header.split(' ').slice(1)) {
    if (param === '') continue;
    const tag = param[0];
    const value = param.slice(1);
    switch (tag) {
      case 'W':
        width = parseInt(value, 10);
        break;
      case 'H':
        height = parseInt(value, 10);
        break;
      case 'F': {
        const m = value.match(/^(\d+):(\d+)$/);
        if (!m) throw new VideoDecodeError(`bad frame rate '${param}'`);
        fpsNum = parseInt(m[1], 10);
        fpsDen = parseInt(m[2], 10);
        break;
      }
      case 'C':
        colorspace = value;
        break;
      case 'I':
      case 'A':
      case 'X':
        break; // interlacing, aspect, extensions: irrelevant to statistics
      default:
        throw new VideoDecodeError(`unknown header tag '${param}'`);
    }
  }
  if (!(width > 0) || !(height > 0)) {
    throw new VideoDecodeError(`missing or bad dimensions ${width}x${height}`);
  }
  if (!(fpsNum > 0) || !(fpsDen > 0)) {
    throw new VideoDecodeError('missing or bad frame rate');
  }

  const { chromaWidth, chromaHeight } = chromaGeometry(colorspace, width, height);
  const ySize = width * height;
  const cSize = chromaWidth * chromaHeight;
  const frameBytes = ySize + 2 * cSize;

  const frames: Y4mFrame[] = [];
  let off = headerEnd + 1;
  while (off < raw.length) {
    const lineEnd = raw.indexOf(0x0a, off);
    if (lineEnd < 0) {
      throw new VideoDecodeError(`frame ${frames.length}: unterminated FRAME line`);
    }
    const line = raw.toString('ascii', off, lineEnd);
    if (line !== 'FRAME' && !line.startsWith('FRAME ')) {
      throw new VideoDecodeError(`frame ${frames.length}: expected FRAME marker, got '${line.slice(0, 20)}'`);
    }
    off = lineEnd + 1;
    if (off + frameBytes > raw.length) {
      throw new VideoDecodeError(`frame ${frames.length}: truncated payload`);
    }
    frames.push({
      timestampS: (frames.length * fpsDen) / fpsNum,
      width,
      height,
      y: new Uint8Array(raw.buffer, raw.byteOffset + off, ySize),
      cb: new Uint8Array(raw.buffer, raw.byteOffset + off + ySize, cSize),
      cr: new Uint8Array(raw.buffer, raw.byteOffset + off + ySize + cSize, cSize),
      chromaWidth,
      chromaHeight,
    });
    off += frameBytes;
  }
  if (frames.length === 0) {
    throw new VideoDecodeError('stream contains no frames');
  }

  return {
    width,
    height,
    fpsNum,
    fpsDen,
    colorspace,
    durationS: (frames.length * fpsDen) / fpsNum,
    frames,
  };
}
