/**
 * Pure drag model for the interval-edit timeline. All functions return a
 * valid half-open interval; the widget cannot produce start >= end.
 */

export type Handle = 'start' | 'end' | 'body';

export interface Interval {
  start: number;
  end: number;
}

export function clampInterval(start: number, end: number, frameCount: number): Interval {
  let s = Math.min(Math.max(Math.round(start), 0), frameCount - 1);
  let e = Math.min(Math.max(Math.round(end), 1), frameCount);
  if (s >= e) {
    e = Math.min(s + 1, frameCount);
    s = e - 1;
  }
  return { start: s, end: e };
}

/** Apply a drag of `deltaFrames` to one handle (or the whole window). */
export function dragInterval(
  current: Interval,
  handle: Handle,
  deltaFrames: number,
  frameCount: number,
): Interval {
  if (handle === 'start') {
    return clampInterval(
      Math.min(current.start + deltaFrames, current.end - 1),
      current.end,
      frameCount,
    );
  }
  if (handle === 'end') {
    return clampInterval(
      current.start,
      Math.max(current.end + deltaFrames, current.start + 1),
      frameCount,
    );
  }
  const width = current.end - current.start;
  let start = current.start + deltaFrames;
  start = Math.min(Math.max(start, 0), frameCount - width);
  return { start, end: start + width };
}

/** Map a pointer x position over the timeline track to a frame index. */
export function frameFromPointer(x: number, trackWidth: number, frameCount: number): number {
  if (trackWidth <= 0) return 0;
  const frame = Math.round((x / trackWidth) * frameCount);
  return Math.min(Math.max(frame, 0), frameCount);
}
