/**
 * Review app: queue of sample cards grouped by status, a frame viewer with
 * client-side mask overlays, and decision controls including interval edits.
 *
 * The server is the single source of truth: every action round-trips through
 * the /v1 API and a full reload reproduces exactly the server's view.
 */

import { ApiError, ReviewApi } from './api.js';
import { classifyOverlay, paintOverlay } from './overlay.js';
import { ReviewViewState } from './state.js';
import { dragInterval, frameFromPointer, type Handle } from './timeline.js';
import type { SampleSummary, Verdict } from './types.js';

const STATUS_ORDER = ['pending', 'accepted', 'rejected'] as const;

export class App {
  readonly state = new ReviewViewState();
  private samples: SampleSummary[] = [];

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ReviewApi,
    private readonly reviewer: string = 'reviewer',
  ) {}

  async init(): Promise<void> {
    this.renderScaffold();
    document.addEventListener('keydown', (event) => this.onKey(event));
    await this.loadQueue();
  }

  private el<T extends HTMLElement = HTMLElement>(selector: string): T {
    const found = this.root.querySelector(selector);
    if (!found) throw new Error(`missing element ${selector}`);
    return found as T;
  }

  private renderScaffold(): void {
    this.root.innerHTML = `
      <div id="banner" class="banner" hidden></div>
      <main class="layout">
        <section id="queue" class="queue">
          <div class="column" data-status="pending"><h2>Pending</h2><div class="cards"></div></div>
          <div class="column" data-status="accepted"><h2>Accepted</h2><div class="cards"></div></div>
          <div class="column" data-status="rejected"><h2>Rejected</h2><div class="cards"></div></div>
        </section>
        <section id="viewer" class="viewer" hidden></section>
      </main>`;
  }

  showBanner(message: string): void {
    const banner = this.el('#banner');
    banner.hidden = false;
    banner.innerHTML = '';
    banner.append(message + ' ');
    const retry = document.createElement('button');
    retry.id = 'retry';
    retry.textContent = 'Retry';
    retry.addEventListener('click', () => void this.loadQueue());
    banner.append(retry);
  }

  clearBanner(): void {
    this.el('#banner').hidden = true;
  }

  async loadQueue(): Promise<void> {
    try {
      this.samples = await this.api.listSamples();
      this.clearBanner();
    } catch (err) {
      this.showBanner(err instanceof ApiError ? err.message : String(err));
      return;
    }
    this.renderQueue();
  }

  private renderQueue(): void {
    for (const status of STATUS_ORDER) {
      const column = this.el(`.column[data-status="${status}"] .cards`);
      column.innerHTML = '';
      const items = this.samples
        .filter((s) => s.status === status)
        .sort((a, b) => a.sample_id.localeCompare(b.sample_id));
      if (items.length === 0) {
        const empty = document.createElement('p');
        empty.className = 'empty-state';
        empty.textContent = 'Nothing here.';
        column.append(empty);
        continue;
      }
      for (const sample of items) {
        column.append(this.renderCard(sample));
      }
    }
  }

  private renderCard(sample: SampleSummary): HTMLElement {
    const card = document.createElement('article');
    card.className = 'sample-card' + (sample.stale ? ' stale' : '');
    card.dataset.sampleId = sample.sample_id;
    card.dataset.status = sample.status;
    const title = document.createElement('h3');
    title.textContent = sample.sample_id;
    const query = document.createElement('p');
    query.textContent = sample.query;
    const meta = document.createElement('small');
    meta.textContent = `${sample.phase.label} [${sample.interval[0]}, ${sample.interval[1]})`
      + (sample.stale ? ' — stale' : '');
    card.append(title, query, meta);
    card.addEventListener('click', () => void this.openSample(sample.sample_id));
    return card;
  }

  async openSample(sampleId: string): Promise<void> {
    try {
      const detail = await this.api.getSample(sampleId);
      this.state.openSample(detail);
      this.clearBanner();
    } catch (err) {
      this.showBanner(err instanceof ApiError ? err.message : String(err));
      return;
    }
    this.renderViewer();
  }

  private renderViewer(): void {
    const sample = this.state.sample;
    const viewer = this.el('#viewer');
    if (!sample) {
      viewer.hidden = true;
      return;
    }
    viewer.hidden = false;
    viewer.innerHTML = `
      <h2 id="viewer-title"></h2>
      <p id="viewer-query"></p>
      <p><span id="viewer-phase"></span> — status <strong id="viewer-status"></strong></p>
      <div class="stage">
        <img id="frame-image" alt="frame preview">
        <canvas id="overlay-canvas"></canvas>
        <span id="frame-badge" class="badge" hidden></span>
      </div>
      <div class="transport">
        <button id="prev-frame">&#8592;</button>
        <span id="frame-label"></span>
        <button id="next-frame">&#8594;</button>
        <button id="toggle-overlay">Overlay</button>
      </div>
      <div id="timeline" class="timeline">
        <div id="timeline-track" class="track">
          <div id="timeline-window" class="window"></div>
        </div>
        <div id="edit-controls" hidden>
          <button id="edit-start-minus">start-</button>
          <button id="edit-start-plus">start+</button>
          <span id="edit-interval-label"></span>
          <button id="edit-end-minus">end-</button>
          <button id="edit-end-plus">end+</button>
        </div>
      </div>
      <div class="decisions">
        <button id="decide-accept">Accept</button>
        <button id="decide-reject">Reject</button>
        <button id="decide-edit">Edit window</button>
        <button id="decide-submit-edit" hidden>Submit edit</button>
        <span id="decision-error" class="inline-error" hidden></span>
      </div>`;
    this.el('#viewer-title').textContent = sample.sample_id;
    this.el('#viewer-query').textContent = sample.query;
    this.el('#viewer-phase').textContent =
      `${sample.phase.label} [${sample.interval[0]}, ${sample.interval[1]})`;
    this.el('#viewer-status').textContent = sample.status;
    this.el('#prev-frame').addEventListener('click', () => this.stepFrame(-1));
    this.el('#next-frame').addEventListener('click', () => this.stepFrame(1));
    this.el('#toggle-overlay').addEventListener('click', () => {
      this.state.toggleOverlay();
      this.renderFrame();
    });
    this.el('#decide-accept').addEventListener('click', () => void this.submitDecision('accept'));
    this.el('#decide-reject').addEventListener('click', () => void this.submitDecision('reject'));
    this.el('#decide-edit').addEventListener('click', () => this.enterEditMode());
    this.el('#decide-submit-edit').addEventListener(
      'click',
      () => void this.submitDecision('edit'),
    );
    this.bindEditButtons();
    this.bindTimelinePointer();
    this.renderFrame();
    this.renderTimeline();
  }

  private bindEditButtons(): void {
    const nudge = (handle: Handle, delta: number) => () => {
      if (!this.state.editDraft) this.state.beginEdit();
      const next = dragInterval(
        this.state.editDraft!,
        handle,
        delta,
        this.state.frameCount,
      );
      this.state.setEditInterval(next.start, next.end);
      this.renderTimeline();
      this.renderFrame();
    };
    this.el('#edit-start-minus').addEventListener('click', nudge('start', -1));
    this.el('#edit-start-plus').addEventListener('click', nudge('start', 1));
    this.el('#edit-end-minus').addEventListener('click', nudge('end', -1));
    this.el('#edit-end-plus').addEventListener('click', nudge('end', 1));
  }

  private bindTimelinePointer(): void {
    const track = this.el('#timeline-track');
    let dragging: Handle | null = null;
    let anchorFrame = 0;
    const frameAt = (event: MouseEvent): number => {
      const rect = track.getBoundingClientRect();
      return frameFromPointer(event.clientX - rect.left, rect.width, this.state.frameCount);
    };
    track.addEventListener('mousedown', (event) => {
      if (!this.state.editDraft) this.state.beginEdit();
      const frame = frameAt(event as MouseEvent);
      const draft = this.state.editDraft!;
      const nearStart = Math.abs(frame - draft.start) <= Math.abs(frame - draft.end);
      dragging = nearStart ? 'start' : 'end';
      anchorFrame = frame;
    });
    track.addEventListener('mousemove', (event) => {
      if (!dragging || !this.state.editDraft) return;
      const frame = frameAt(event as MouseEvent);
      const delta = frame - anchorFrame;
      if (delta === 0) return;
      anchorFrame = frame;
      const next = dragInterval(this.state.editDraft, dragging, delta, this.state.frameCount);
      this.state.setEditInterval(next.start, next.end);
      this.renderTimeline();
    });
    const stop = () => {
      dragging = null;
    };
    track.addEventListener('mouseup', stop);
    track.addEventListener('mouseleave', stop);
  }

  enterEditMode(): void {
    this.state.beginEdit();
    this.el('#edit-controls').hidden = false;
    this.el('#decide-submit-edit').hidden = false;
    this.renderTimeline();
  }

  /** Entry point shared by pointer drags, nudge buttons, and tests. */
  dragEditTo(start: number, end: number): void {
    if (!this.state.editDraft) this.enterEditMode();
    this.state.setEditInterval(start, end);
    this.renderTimeline();
    this.renderFrame();
  }

  stepFrame(delta: number): void {
    this.state.step(delta);
    this.renderFrame();
  }

  private onKey(event: KeyboardEvent): void {
    if (!this.state.sample) return;
    if (event.key === 'ArrowLeft') this.stepFrame(-1);
    else if (event.key === 'ArrowRight') this.stepFrame(1);
  }

  renderFrame(): void {
    const sample = this.state.sample;
    if (!sample) return;
    const t = this.state.playhead;
    this.el('#frame-label').textContent = `frame ${t + 1} / ${sample.frame_count}`;
    const image = this.el<HTMLImageElement>('#frame-image');
    image.src = sample.frames[t]?.url ?? '';
    const badge = this.el('#frame-badge');
    const canvas = this.el<HTMLCanvasElement>('#overlay-canvas');
    const kind = classifyOverlay(sample.overlays[t]);
    const active = this.state.frameActive(t) && kind === 'active';
    if (kind === 'error') {
      badge.hidden = false;
      badge.textContent = '⚠ mask error';
      badge.className = 'badge badge-error';
      canvas.hidden = true;
      return;
    }
    if (!active) {
      badge.hidden = false;
      badge.textContent = 'inactive';
      badge.className = 'badge badge-inactive';
      canvas.hidden = true;
      return;
    }
    badge.hidden = true;
    canvas.hidden = !this.state.overlayVisible;
    if (this.state.overlayVisible) {
      paintOverlay(canvas, sample.overlays[t]);
    }
  }

  renderTimeline(): void {
    const sample = this.state.sample;
    if (!sample) return;
    const window_ = this.el('#timeline-window');
    const [start, end] = this.state.editDraft
      ? [this.state.editDraft.start, this.state.editDraft.end]
      : sample.interval;
    window_.style.left = `${(100 * start) / sample.frame_count}%`;
    window_.style.width = `${(100 * (end - start)) / sample.frame_count}%`;
    const label = this.root.querySelector('#edit-interval-label');
    if (label) label.textContent = `[${start}, ${end})`;
  }

  async submitDecision(verdict: Verdict): Promise<void> {
    const sample = this.state.sample;
    if (!sample) return;
    const problem = this.state.validateDraft(verdict);
    const errorBox = this.el('#decision-error');
    if (problem) {
      errorBox.hidden = false;
      errorBox.textContent = problem;
      return;
    }
    errorBox.hidden = true;
    const body = {
      verdict,
      reviewer: this.reviewer,
      ...(verdict === 'edit' && this.state.editDraft
        ? { edited_interval: [this.state.editDraft.start, this.state.editDraft.end] as [number, number] }
        : {}),
    };
    const previous = sample.status;
    const optimistic: SampleSummary['status'] = verdict === 'reject' ? 'rejected' : 'accepted';
    this.applyStatus(sample.sample_id, optimistic);
    try {
      const reply = await this.api.postDecision(sample.sample_id, body);
      this.applyStatus(sample.sample_id, reply.status as SampleSummary['status']);
      this.state.clearDraft();
      await this.loadQueue();
      await this.openNextPending();
    } catch (err) {
      this.applyStatus(sample.sample_id, previous);
      if (err instanceof ApiError && err.status === 422) {
        errorBox.hidden = false;
        errorBox.textContent = err.message;
      } else {
        // Draft survives transport failures so the reviewer can retry.
        this.showBanner(err instanceof ApiError ? err.message : String(err));
      }
    }
  }

  private applyStatus(sampleId: string, status: SampleSummary['status']): void {
    const found = this.samples.find((s) => s.sample_id === sampleId);
    if (found) found.status = status;
    if (this.state.sample && this.state.sample.sample_id === sampleId) {
      this.state.sample.status = status;
      const label = this.root.querySelector('#viewer-status');
      if (label) label.textContent = status;
    }
    this.renderQueue();
  }

  private async openNextPending(): Promise<void> {
    const next = this.samples
      .filter((s) => s.status === 'pending')
      .sort((a, b) => a.sample_id.localeCompare(b.sample_id))[0];
    if (next) {
      await this.openSample(next.sample_id);
    } else {
      this.state.sample = null;
      this.el('#viewer').hidden = true;
    }
  }
}
