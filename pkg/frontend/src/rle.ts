/**
 * Client-side RLE mask decoding.
 *
 * Runs alternate background/foreground over a row-major scan; the first run
 * counts background pixels and may be zero. Decoding locally keeps mask
 * payloads small (no raster data crosses the wire).
 */

import type { RleMask } from './types.js';

export class RleError extends Error {}

/** Foreground pixel count without decoding. */
export function maskArea(mask: RleMask): number {
  let area = 0;
  for (let i = 1; i < mask.runs.length; i += 2) area += mask.runs[i];
  return area;
}

export function isEmpty(mask: RleMask): boolean {
  return maskArea(mask) === 0;
}

/** Decode to a flat Uint8Array of h*w entries in {0, 1}. */
export function decodeRle(mask: RleMask): Uint8Array {
  const { h, w, runs } = mask;
  if (h < 1 || w < 1) throw new RleError(`bad mask dims ${h}x${w}`);
  const total = runs.reduce((acc, r) => acc + r, 0);
  if (total !== h * w) {
    throw new RleError(`run sum ${total} does not cover ${h * w} pixels`);
  }
  for (let i = 0; i < runs.length; i++) {
    if (runs[i] < 0 || (i > 0 && runs[i] === 0)) {
      throw new RleError(`invalid run length ${runs[i]} at position ${i}`);
    }
  }
  const out = new Uint8Array(h * w);
  let pos = 0;
  let value = 0;
  for (const run of runs) {
    if (value === 1) out.fill(1, pos, pos + run);
    pos += run;
    value ^= 1;
  }
  return out;
}
