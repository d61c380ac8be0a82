"""Builds a validated VideoDT by orchestrating the backend suite over a video.

Key frames (t mod t_s == 0, plus the final frame) are segmented directly;
frames in between get masks from memory-based propagation whose history runs
from the last key frame. Depth, semantics, actions, and low-level features
are attached per frame according to the build configuration.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .backends import BackendSuite, BackendTransportError, extract_features
from .dt_model import (
    DepthStats,
    ObjectInstance,
    VideoDT,
    rle_encode,
    validate,
)
from .video import isolate_object


@dataclass(frozen=True)
class BuildConfig:
    t_s: int = 3
    retry_limit: int = 2
    parallel_workers: int = 1
    enable_depth: bool = True
    enable_features: bool = True
    enable_actions: bool = True
    backoff_base: float = 0.05

    def __post_init__(self) -> None:
        if self.t_s < 1:
            raise ValueError(f"t_s must be >= 1, got {self.t_s}")
        if self.retry_limit < 0:
            raise ValueError(f"retry_limit must be >= 0, got {self.retry_limit}")
        if self.parallel_workers < 1:
            raise ValueError(f"parallel_workers must be >= 1, got {self.parallel_workers}")

    def to_json(self) -> dict:
        return {
            "t_s": self.t_s,
            "retry_limit": self.retry_limit,
            "parallel_workers": self.parallel_workers,
            "enable_depth": self.enable_depth,
            "enable_features": self.enable_features,
            "enable_actions": self.enable_actions,
        }


class BuildError(RuntimeError):
    """Build aborted; carries the partial-progress report."""

    def __init__(self, message: str, report: dict) -> None:
        super().__init__(message)
        self.report = report


@dataclass(eq=False)
class _Track:
    object_id: str
    masks: dict[int, np.ndarray] = field(default_factory=dict)
    confidences: dict[int, float] = field(default_factory=dict)
    last_key_confidence: float = 0.0
    lost_at: Optional[int] = None

    def mask_at(self, t: int) -> Optional[np.ndarray]:
        mask = self.masks.get(t)
        return mask if mask is not None and mask.any() else None


class _Caller:
    """Retries transport failures with exponential backoff; counts calls."""

    def __init__(self, config: BuildConfig, report: dict) -> None:
        self.config = config
        self.report = report

    def __call__(self, role: str, fn, *args):
        attempts = 0
        counts = self.report["backend_calls"]
        counts[role] = counts.get(role, 0) + 1
        while True:
            try:
                return fn(*args)
            except BackendTransportError as exc:
                if attempts >= self.config.retry_limit:
                    raise BuildError(
                        f"{role} backend failed after {attempts} retries: {exc}", self.report
                    ) from exc
                attempts += 1
                self.report["retries"] += 1
                time.sleep(self.config.backoff_base * 2 ** (attempts - 1))


def compute_depth_stats(depth_map: np.ndarray, mask: np.ndarray) -> DepthStats:
    """Population mean/stdev of depth under the mask."""
    if depth_map.shape != mask.shape:
        raise ValueError(f"depth map {depth_map.shape} and mask {mask.shape} dims differ")
    selected = depth_map[mask.astype(bool)]
    if selected.size == 0:
        raise ValueError("depth stats need a non-empty mask")
    mean = float(selected.mean())
    stdev = float(np.sqrt(((selected - mean) ** 2).mean()))
    return DepthStats(mean=mean, stdev=stdev, pixel_count=int(selected.size))


def key_frames(frame_count: int, t_s: int) -> list[int]:
    """Sampling schedule: every t_s-th frame plus the final frame."""
    frames = {t for t in range(frame_count) if t % t_s == 0}
    frames.add(frame_count - 1)
    return sorted(frames)


def track_object(video, tracker, key_masks: dict[int, np.ndarray], config: BuildConfig) -> list[np.ndarray]:
    """Per-frame masks for one object: key masks kept, gaps propagated."""
    if not key_masks:
        raise ValueError("at least one key mask is required")
    h, w = video.frame_dims
    empty = np.zeros((h, w), dtype=np.uint8)
    keys = sorted(key_masks)
    out: list[np.ndarray] = [empty] * video.frame_count
    for t in range(keys[0], video.frame_count):
        if t in key_masks:
            out[t] = key_masks[t]
            continue
        last_key = max(k for k in keys if k < t)
        history = [out[u] for u in range(last_key, t)]
        if not any(m.any() for m in history):
            out[t] = empty
            continue
        out[t] = tracker.propagate_mask(video.frame(t), history)
    return out


def build_with_report(video, backends: BackendSuite, config: BuildConfig) -> tuple[VideoDT, dict]:
    """Assemble the digital twin plus a build report."""
    start = time.monotonic()
    if video.frame_count < 1:
        raise ValueError("video has no frames")
    required = ["phase_detector", "segmenter", "tracker", "semantic"]
    if config.enable_depth:
        required.append("depth")
    if config.enable_actions:
        required.append("action")
    backends.require(*required)

    report: dict = {
        "video_id": video.video_id,
        "backend_calls": {},
        "retries": 0,
        "lost_objects": [],
        "config": config.to_json(),
    }
    call = _Caller(config, report)
    T = video.frame_count
    dims = video.frame_dims

    phases = call("phase_detector", backends.phase_detector.detect_phases, video)

    keys = set(key_frames(T, config.t_s))
    tracks: list[_Track] = []
    frames_cache: dict[int, object] = {}

    def frame(t: int):
        if t not in frames_cache:
            frames_cache[t] = video.frame(t)
        return frames_cache[t]

    for t in range(T):
        if t in keys:
            segments = call("segmenter", backends.segmenter.segment_frame, frame(t))
            live: list[tuple[_Track, np.ndarray]] = []
            for track in tracks:
                if track.lost_at is not None:
                    continue
                last_key = max((k for k in keys if k < t and k in track.masks), default=None)
                if last_key is None:
                    continue
                history = [track.masks.get(u, _empty(dims)) for u in range(last_key, t)]
                if not any(m.any() for m in history):
                    continue
                predicted = call(
                    "tracker", backends.tracker.propagate_mask, frame(t), history
                )
                live.append((track, predicted))
            matched = _associate(live, segments)
            claimed = set()
            for track, seg_idx in matched.items():
                mask, conf = segments[seg_idx]
                track.masks[t] = mask
                track.confidences[t] = conf
                track.last_key_confidence = conf
                claimed.add(seg_idx)
            for track, _predicted in live:
                if track not in matched and track.lost_at is None:
                    track.lost_at = t
                    report["lost_objects"].append({"object_id": track.object_id, "frame": t})
            for seg_idx, (mask, conf) in enumerate(segments):
                if seg_idx in claimed or not mask.any():
                    continue
                new = _Track(object_id=f"obj{len(tracks)}")
                new.masks[t] = mask
                new.confidences[t] = conf
                new.last_key_confidence = conf
                tracks.append(new)
        else:
            for track in tracks:
                if track.lost_at is not None:
                    continue
                last_key = max((k for k in keys if k < t and k in track.masks), default=None)
                if last_key is None:
                    continue
                history = [track.masks.get(u, _empty(dims)) for u in range(last_key, t)]
                if not any(m.any() for m in history):
                    continue
                propagated = call(
                    "tracker", backends.tracker.propagate_mask, frame(t), history
                )
                track.masks[t] = propagated
                track.confidences[t] = track.last_key_confidence
                if not propagated.any():
                    track.lost_at = t
                    report["lost_objects"].append({"object_id": track.object_id, "frame": t})

    # Per-frame enrichment fans out across frames; merge is keyed, so the
    # result is independent of completion order and worker count.
    def enrich(t: int):
        fr = frame(t)
        depth_map = (
            call("depth", backends.depth.estimate_depth, fr) if config.enable_depth else None
        )
        instances = []
        for track in tracks:
            mask = track.mask_at(t)
            if mask is None:
                continue
            semantic = call("semantic", backends.semantic.describe_semantic, fr, mask)
            actions: tuple[str, ...] = ()
            if config.enable_actions:
                window = [isolate_object(fr, mask)]
                actions = tuple(
                    call("action", backends.action.describe_actions, window, track.object_id)
                )
            instances.append(
                ObjectInstance(
                    object_id=track.object_id,
                    frame=t,
                    mask=rle_encode(mask),
                    confidence=track.confidences[t],
                    semantic=semantic,
                    actions=actions,
                    depth=compute_depth_stats(depth_map, mask) if depth_map is not None else None,
                )
            )
        features = None
        if config.enable_features:
            prev = frame(t - 1) if t > 0 else fr
            features = extract_features(prev, fr)
        return tuple(instances), features

    if config.parallel_workers > 1:
        with ThreadPoolExecutor(max_workers=config.parallel_workers) as pool:
            enriched = list(pool.map(enrich, range(T)))
    else:
        enriched = [enrich(t) for t in range(T)]

    dt = VideoDT(
        video_id=video.video_id,
        frame_count=T,
        frame_dims=dims,
        phases=tuple(phases),
        objects=tuple(instances for instances, _ in enriched),
        features=tuple(f for _, f in enriched if f is not None),
    )
    violations = validate(dt)
    if violations:
        raise BuildError("built twin failed validation: " + "; ".join(violations), report)
    report["duration_s"] = round(time.monotonic() - start, 6)
    return dt, report


def build_video_dt(video, backends: BackendSuite, config: BuildConfig) -> VideoDT:
    dt, _ = build_with_report(video, backends, config)
    return dt


def _empty(dims: tuple[int, int]) -> np.ndarray:
    return np.zeros(dims, dtype=np.uint8)


def _associate(
    live: list[tuple[_Track, np.ndarray]], segments: list[tuple[np.ndarray, float]]
) -> dict[_Track, int]:
    """Greedy IoU matching of predicted track masks to segmenter masks."""
    pairs = []
    for track_idx, (_track, predicted) in enumerate(live):
        if not predicted.any():
            continue
        for seg_idx, (mask, _conf) in enumerate(segments):
            inter = np.logical_and(predicted, mask).sum()
            if inter == 0:
                continue
            union = np.logical_or(predicted, mask).sum()
            pairs.append((inter / union, track_idx, seg_idx))
    pairs.sort(key=lambda p: (-p[0], p[1], p[2]))
    matched: dict[_Track, int] = {}
    used_segs: set[int] = set()
    for _iou, track_idx, seg_idx in pairs:
        track = live[track_idx][0]
        if track in matched or seg_idx in used_segs:
            continue
        matched[track] = seg_idx
        used_segs.add(seg_idx)
    return matched
