/**
 * Segment arithmetic: split a video of known duration into consecutive
 * fixed-length windows and assign frames to them.
 */

import { Y4mFrame, Y4mVideo, VideoDecodeError } from './y4m';

export interface Segment {
  startS: number;
  endS: number;
  frames: Y4mFrame[];
}

/**
 * Split [0, duration) into ceil(duration / segmentLen) consecutive
 * [start, end) intervals. A trailing remainder shorter than segmentLen
 * is kept as a final short segment rather than dropped.
 */
export function segmentSchedule(durationS: number, segmentLenS: number): Array<[number, number]> {
  if (!(durationS > 0) || !(segmentLenS > 0)) {
    throw new RangeError(`segmentSchedule needs positive inputs, got duration=${durationS}, segment=${segmentLenS}`);
  }
  const count = Math.ceil(durationS / segmentLenS);
  const out: Array<[number, number]> = [];
  for (let i = 0; i < count; i++) {
    out.push([i * segmentLenS, Math.min((i + 1) * segmentLenS, durationS)]);
  }
  return out;
}

/**
 * Bucket a video's frames into the schedule by start-of-frame timestamp.
 * Every segment must receive at least one frame, which holds whenever the
 * frame interval does not exceed the segment length; sparser streams are
 * rejected rather than silently producing empty segments.
 */
export function assignFrames(video: Y4mVideo, segmentLenS: number): Segment[] {
  const frameInterval = video.fpsDen / video.fpsNum;
  if (frameInterval > segmentLenS) {
    throw new VideoDecodeError(
      `frame interval ${frameInterval.toFixed(3)}s exceeds segment length ${segmentLenS}s`,
    );
  }
  const schedule = segmentSchedule(video.durationS, segmentLenS);
  const segments: Segment[] = schedule.map(([startS, endS]) => ({ startS, endS, frames: [] }));
  for (const frame of video.frames) {
    let idx = Math.floor(frame.timestampS / segmentLenS);
    if (idx >= segments.length) idx = segments.length - 1; // float round-up at the tail
    segments[idx].frames.push(frame);
  }
  for (const seg of segments) {
    if (seg.frames.length === 0) {
      throw new VideoDecodeError(`segment [${seg.startS}, ${seg.endS}) received no frames`);
    }
  }
  return segments;
}
