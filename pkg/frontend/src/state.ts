/**
 * Review view state with invariants enforced at the setters: the playhead
 * stays inside [0, frame_count) and an edit draft can never hold an invalid
 * interval. Decisions live on the server; this state is purely presentational.
 */

import type { SampleDetail, Verdict } from './types.js';

export interface EditDraft {
  start: number;
  end: number;
}

export class ReviewViewState {
  sample: SampleDetail | null = null;
  playhead = 0;
  overlayVisible = true;
  editDraft: EditDraft | null = null;
  verdictDraft: Verdict | null = null;

  openSample(sample: SampleDetail): void {
    this.sample = sample;
    this.playhead = Math.min(Math.max(sample.interval[0], 0), sample.frame_count - 1);
    this.editDraft = null;
    this.verdictDraft = null;
  }

  get frameCount(): number {
    return this.sample ? this.sample.frame_count : 0;
  }

  setPlayhead(frame: number): number {
    const limit = Math.max(this.frameCount - 1, 0);
    this.playhead = Math.min(Math.max(frame, 0), limit);
    return this.playhead;
  }

  step(delta: number): number {
    return this.setPlayhead(this.playhead + delta);
  }

  toggleOverlay(): boolean {
    this.overlayVisible = !this.overlayVisible;
    return this.overlayVisible;
  }

  /** True when the playhead frame lies inside the sample's active window. */
  frameActive(frame: number): boolean {
    if (!this.sample) return false;
    const [start, end] = this.editDraft
      ? [this.editDraft.start, this.editDraft.end]
      : this.sample.interval;
    return frame >= start && frame < end;
  }

  beginEdit(): EditDraft {
    if (!this.sample) throw new Error('no sample open');
    this.editDraft = { start: this.sample.interval[0], end: this.sample.interval[1] };
    this.verdictDraft = 'edit';
    return this.editDraft;
  }

  /** Clamp-and-set; the resulting draft always satisfies 0 <= start < end <= T. */
  setEditInterval(start: number, end: number): EditDraft {
    if (!this.sample) throw new Error('no sample open');
    const T = this.sample.frame_count;
    let s = Math.min(Math.max(Math.round(start), 0), T - 1);
    let e = Math.min(Math.max(Math.round(end), 1), T);
    if (s >= e) {
      e = s + 1 <= T ? s + 1 : T;
      s = e - 1;
    }
    this.editDraft = { start: s, end: e };
    this.verdictDraft = 'edit';
    return this.editDraft;
  }

  clearDraft(): void {
    this.editDraft = null;
    this.verdictDraft = null;
  }

  /** Null when the draft may be submitted, else the blocking reason. */
  validateDraft(verdict: Verdict): string | null {
    if (!this.sample) return 'no sample open';
    if (verdict === 'edit') {
      if (!this.editDraft) return 'edit requires an interval';
      const { start, end } = this.editDraft;
      if (!(start >= 0 && start < end && end <= this.sample.frame_count)) {
        return `invalid interval [${start}, ${end})`;
      }
    }
    return null;
  }
}
