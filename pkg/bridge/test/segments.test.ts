import { describe, expect, it } from 'vitest';
import { assignFrames, segmentSchedule } from '../src/segments';
import { parseY4m } from '../src/y4m';
import { makeY4m, PAINTS } from './helpers';

describe('segmentSchedule', () => {
  it('cuts 120 seconds into exactly 24 five-second segments', () => {
    const schedule = segmentSchedule(120, 5);
    expect(schedule).toHaveLength(24);
    expect(schedule[0]).toEqual([0, 5]);
    expect(schedule[23]).toEqual([115, 120]);
  });

  it('keeps a trailing remainder as a final short segment', () => {
    const schedule = segmentSchedule(12.5, 5);
    expect(schedule).toHaveLength(3);
    expect(schedule[2]).toEqual([10, 12.5]);
  });

  it('rejects nonpositive inputs', () => {
    expect(() => segmentSchedule(0, 5)).toThrow(RangeError);
    expect(() => segmentSchedule(10, 0)).toThrow(RangeError);
  });
});

describe('assignFrames', () => {
  it('buckets every frame by start timestamp', () => {
    const video = parseY4m(makeY4m({ fpsNum: 2, fpsDen: 1, frames: 48, paint: PAINTS.gray }));
    const segments = assignFrames(video, 5);
    expect(segments).toHaveLength(5);
    expect(segments.map((s) => s.frames.length)).toEqual([10, 10, 10, 10, 8]);
    expect(segments[4].startS).toBe(20);
    expect(segments[4].endS).toBe(24);
  });

  it('gives the trailing short segment its own frames', () => {
    const video = parseY4m(makeY4m({ fpsNum: 2, fpsDen: 1, frames: 25, paint: PAINTS.gray }));
    const segments = assignFrames(video, 5);
    expect(segments).toHaveLength(3);
    expect(segments[2].frames.length).toBe(5); // ts 10.0 .. 12.0
  });

  it('rejects streams sparser than the segment length', () => {
    const video = parseY4m(makeY4m({ fpsNum: 1, fpsDen: 7, frames: 3, paint: PAINTS.gray }));
    expect(() => assignFrames(video, 5)).toThrow(/frame interval/);
  });
});
