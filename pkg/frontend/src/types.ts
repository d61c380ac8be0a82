/** Shared wire types mirroring the review service JSON. */

export interface RleMask {
  h: number;
  w: number;
  runs: number[];
}

export interface PhaseRef {
  phase_id: string;
  label: string;
}

export interface SampleSummary {
  sample_id: string;
  video_id: string;
  query: string;
  phase: PhaseRef;
  interval: [number, number];
  status: 'pending' | 'accepted' | 'rejected';
  stale: boolean;
}

export interface FrameRef {
  index: number;
  url: string;
}

export interface SampleDetail extends SampleSummary {
  frame_count: number;
  frame_dims: [number, number];
  frames: FrameRef[];
  overlays: RleMask[];
}

export interface Phase {
  phase_id: string;
  label: string;
  description: string;
  interval: [number, number];
}

export interface VideoInfo {
  video_id: string;
  frame_count: number;
  frame_dims: [number, number];
}

export type Verdict = 'accept' | 'reject' | 'edit';

export interface DecisionBody {
  verdict: Verdict;
  reviewer?: string;
  edited_interval?: [number, number];
}

export interface DecisionReply {
  sample_id: string;
  status: string;
}
