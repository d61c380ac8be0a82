/**
 * Typed client for the review service /v1 API. The UI keeps no truth of its
 * own: every mutation goes through here and the server's reply wins.
 */

import type {
  DecisionBody,
  DecisionReply,
  Phase,
  SampleDetail,
  SampleSummary,
  VideoInfo,
} from './types.js';

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ReviewApi {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchFn: FetchLike = (input, init) => globalThis.fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      // fall through; error payloads may be empty
    }
    if (!response.ok) {
      const detail =
        body && typeof body === 'object' && 'error' in body
          ? String((body as { error: unknown }).error)
          : response.statusText;
      throw new ApiError(response.status, detail);
    }
    return body as T;
  }

  listSamples(status?: string): Promise<SampleSummary[]> {
    const query = status ? `?status=${encodeURIComponent(status)}` : '';
    return this.request(`/v1/samples${query}`);
  }

  getSample(sampleId: string): Promise<SampleDetail> {
    return this.request(`/v1/samples/${encodeURIComponent(sampleId)}`);
  }

  postDecision(sampleId: string, body: DecisionBody): Promise<DecisionReply> {
    return this.request(`/v1/samples/${encodeURIComponent(sampleId)}/decision`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
  }

  getVideos(): Promise<VideoInfo[]> {
    return this.request('/v1/videos');
  }

  getPhases(videoId: string): Promise<Phase[]> {
    return this.request(`/v1/videos/${encodeURIComponent(videoId)}/phases`);
  }

  patchPhases(
    videoId: string,
    edits: Array<{ phase_id: string; interval?: [number, number]; label?: string }>,
  ): Promise<{ phases: Phase[]; stale_samples: string[] }> {
    return this.request(`/v1/videos/${encodeURIComponent(videoId)}/phases`, {
      method: 'PATCH',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ phases: edits }),
    });
  }
}
