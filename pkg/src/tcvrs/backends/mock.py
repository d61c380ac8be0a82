"""Scene-script mock backends.

Each mock is a pure function of (seed, inputs) over the script, so two runs
produce byte-identical outputs and every end-to-end expectation can be
computed by hand from the fixture.
"""

from __future__ import annotations

import json
import re
from typing import Optional, Sequence

import numpy as np

from ..dt_model import PhaseSegment, FrameInterval
from ..video import Frame, SceneScript
from . import ScoreRequest, check_phases, check_unit_score, stable_unit


def _mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = np.logical_and(a, b).sum()
    union = np.logical_or(a, b).sum()
    return float(inter) / float(union) if union else 0.0


class _ScriptBacked:
    def __init__(self, script: SceneScript) -> None:
        self.script = script

    def _check_dims(self, frame: Frame) -> None:
        if frame.dims != self.script.frame_dims:
            raise ValueError(
                f"frame dims {frame.dims} do not match scene dims {self.script.frame_dims}"
            )


class MockPhaseDetector(_ScriptBacked):
    def detect_phases(self, video) -> list[PhaseSegment]:
        if video.frame_count < 1:
            raise ValueError("video has no frames")
        phases = list(self.script.phases)
        if not phases:
            phases = [
                PhaseSegment(
                    phase_id="p0",
                    label="procedure",
                    description="full recording",
                    interval=FrameInterval(0, video.frame_count),
                )
            ]
        return check_phases(phases, video.frame_count, "mock phase detector")


class MockSegmenter(_ScriptBacked):
    def segment_frame(self, frame: Frame) -> list[tuple[np.ndarray, float]]:
        self._check_dims(frame)
        out = []
        for scene_obj in self.script.objects:
            mask = self.script.object_mask(scene_obj.object_id, frame.index)
            if mask.any():
                out.append((mask, check_unit_score(scene_obj.confidence, "mock segmenter")))
        return out


class MockTracker(_ScriptBacked):
    def propagate_mask(self, frame: Frame, history: Sequence[np.ndarray]) -> np.ndarray:
        if not history:
            raise ValueError("tracker history must be non-empty")
        self._check_dims(frame)
        # Identify the tracked object from the last non-empty memory mask.
        anchor_pos = max((p for p, m in enumerate(history) if m.any()), default=None)
        h, w = self.script.frame_dims
        if anchor_pos is None:
            return np.zeros((h, w), dtype=np.uint8)
        anchor_frame = frame.index - (len(history) - anchor_pos)
        anchor_mask = history[anchor_pos]
        best_id: Optional[str] = None
        best_iou = 0.0
        for scene_obj in self.script.objects:
            iou = _mask_iou(anchor_mask, self.script.object_mask(scene_obj.object_id, anchor_frame))
            if iou > best_iou:
                best_iou = iou
                best_id = scene_obj.object_id
        if best_id is None:
            return np.zeros((h, w), dtype=np.uint8)
        return self.script.object_mask(best_id, frame.index)


class MockDepthEstimator(_ScriptBacked):
    def estimate_depth(self, frame: Frame) -> np.ndarray:
        self._check_dims(frame)
        return self.script.depth_map(frame.index)


class MockSemanticDescriber(_ScriptBacked):
    def describe_semantic(self, frame: Frame, mask: np.ndarray) -> str:
        self._check_dims(frame)
        if not mask.any():
            raise ValueError("semantic description needs a non-empty mask")
        best_id = None
        best_iou = 0.0
        for scene_obj in self.script.objects:
            iou = _mask_iou(mask, self.script.object_mask(scene_obj.object_id, frame.index))
            if iou > best_iou:
                best_iou = iou
                best_id = scene_obj.object_id
        if best_id is None:
            return "unidentified object"
        return self.script.object_by_id(best_id).semantic


class MockActionDescriber(_ScriptBacked):
    """Grounds the object from the isolated window pixels, then reads the
    script's per-phase action list; object_id is bookkeeping only."""

    def describe_actions(self, window: Sequence[Frame], object_id: str) -> list[str]:
        if not window:
            raise ValueError("action window must be non-empty")
        last = window[-1]
        derived = (last.pixels != 0).any(axis=-1).astype(np.uint8)
        best_id: Optional[str] = None
        best_iou = 0.0
        for scene_obj in self.script.objects:
            iou = _mask_iou(derived, self.script.object_mask(scene_obj.object_id, last.index))
            if iou > best_iou:
                best_iou = iou
                best_id = scene_obj.object_id
        if best_id is None:
            return []
        scene_obj = self.script.object_by_id(best_id)
        for phase in self.script.phases:
            if last.index in phase.interval:
                return list(scene_obj.actions.get(phase.phase_id, ()))
        return []


class MockScorer:
    """Relevance scorer: scripted per (object, phase) with a seeded fallback."""

    def __init__(self, script: SceneScript, seed: int, name: str) -> None:
        self.script = script
        self.seed = seed
        self.name = name

    def score_candidate(self, req: ScoreRequest) -> float:
        try:
            excerpt = json.loads(req.dt_excerpt)
            object_id = excerpt["object_id"]
            phase_id = excerpt["phase_id"]
            t = excerpt["frame"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"scorer {self.name}: unreadable dt_excerpt ({exc})") from exc
        # Twin object ids are tracker-assigned; the scripted score is resolved
        # through the semantic descriptor, falling back to the twin id.
        scene_obj = None
        semantic = excerpt.get("semantic")
        for candidate in self.script.objects:
            if candidate.semantic == semantic or candidate.object_id == object_id:
                scene_obj = candidate
                break
        if scene_obj is not None and phase_id in scene_obj.scores:
            value = scene_obj.scores[phase_id]
        else:
            value = stable_unit(self.seed, object_id, phase_id, t)
        return check_unit_score(value, f"mock scorer {self.name}")


_TEMPLATE_RE = re.compile(r"^TEMPLATE:\s?(.*)$", re.M)
_SLOT_RE = re.compile(r"^SLOT (\w+)=(.*)$", re.M)


class MockQueryLlm:
    """Deterministic slot filler for TEMPLATE/SLOT prompts."""

    def __init__(self, seed: int = 0) -> None:
        self.seed = seed

    def generate_text(self, prompt: str) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        match = _TEMPLATE_RE.search(prompt)
        if match is None:
            return prompt.strip()
        text = match.group(1)
        for name, value in _SLOT_RE.findall(prompt):
            text = text.replace("{" + name + "}", value)
        return text.strip()
