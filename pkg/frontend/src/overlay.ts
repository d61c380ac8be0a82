/**
 * Mask overlay compositing. The overlay canvas sits above the frame image;
 * foreground pixels get a translucent tint, inactive frames show a badge and
 * no tint at all.
 */

import { decodeRle, isEmpty, RleError } from './rle.js';
import type { RleMask } from './types.js';

export const TINT: [number, number, number, number] = [255, 120, 40, 140];

/** RGBA buffer (w*h*4) with tint on foreground pixels, transparent elsewhere. */
export function tintBuffer(mask: RleMask): Uint8ClampedArray {
  const bits = decodeRle(mask);
  const out = new Uint8ClampedArray(mask.h * mask.w * 4);
  for (let i = 0; i < bits.length; i++) {
    if (bits[i] === 1) {
      out[i * 4] = TINT[0];
      out[i * 4 + 1] = TINT[1];
      out[i * 4 + 2] = TINT[2];
      out[i * 4 + 3] = TINT[3];
    }
  }
  return out;
}

export type FrameOverlayKind = 'active' | 'inactive' | 'error';

/** Classify a frame for rendering: tint, "inactive" badge, or error glyph. */
export function classifyOverlay(mask: RleMask | undefined): FrameOverlayKind {
  if (!mask) return 'error';
  try {
    decodeRle(mask);
  } catch (err) {
    if (err instanceof RleError) return 'error';
    throw err;
  }
  return isEmpty(mask) ? 'inactive' : 'active';
}

/** Paint the overlay onto a canvas; no-op when 2D contexts are unavailable
 * (headless DOM in tests). */
export function paintOverlay(canvas: HTMLCanvasElement, mask: RleMask): boolean {
  const ctx = canvas.getContext('2d');
  if (!ctx || typeof ctx.putImageData !== 'function' || typeof ImageData === 'undefined') {
    return false;
  }
  canvas.width = mask.w;
  canvas.height = mask.h;
  ctx.clearRect(0, 0, mask.w, mask.h);
  const tinted = tintBuffer(mask);
  const pixels = new Uint8ClampedArray(new ArrayBuffer(tinted.length));
  pixels.set(tinted);
  ctx.putImageData(new ImageData(pixels, mask.w, mask.h), 0, 0);
  return true;
}
