"""Mock backend HTTP server: serves the wire protocol from one scene script.

Lets integration tests (and demos) exercise the remote client path against
the exact same behavior as the in-process mocks.
"""

from __future__ import annotations

from typing import Any

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from ..dt_model import RleMask, rle_decode
from ..video import SceneScript
from . import ScoreRequest, derive_seed
from .mock import (
    MockActionDescriber,
    MockDepthEstimator,
    MockPhaseDetector,
    MockQueryLlm,
    MockScorer,
    MockSegmenter,
    MockSemanticDescriber,
    MockTracker,
)
from .remote import decode_frame


def create_backend_app(script: SceneScript, seed: int = 0) -> FastAPI:
    app = FastAPI(title="tcvrs mock backend")
    phase_detector = MockPhaseDetector(script)
    segmenter = MockSegmenter(script)
    tracker = MockTracker(script)
    depth = MockDepthEstimator(script)
    semantic = MockSemanticDescriber(script)
    action = MockActionDescriber(script)
    query_llm = MockQueryLlm(seed=seed)
    scorers: dict[str, MockScorer] = {}

    def scorer_for(name: str) -> MockScorer:
        # Same per-name seed derivation as mock_suite, so both paths agree.
        if name not in scorers:
            scorers[name] = MockScorer(script, seed=derive_seed(seed, "scorer", name), name=name)
        return scorers[name]

    class _ScriptVideo:
        """Adapter giving detect_phases the frame-source surface it expects."""

        def __init__(self, video_id: str, frame_count: int) -> None:
            self.video_id = video_id
            self.frame_count = frame_count

    def _mask_from(obj: Any) -> Any:
        return rle_decode(RleMask.from_json(obj))

    handlers = {}

    def _phase_detector(body: dict) -> dict:
        video = _ScriptVideo(body.get("video_id", script.video_id), int(body["frame_count"]))
        return {"phases": [p.to_json() for p in phase_detector.detect_phases(video)]}

    def _segmenter(body: dict) -> dict:
        frame = decode_frame(body["frame"], int(body["frame_index"]))
        return {
            "objects": [
                {"mask": _rle(mask), "confidence": conf}
                for mask, conf in segmenter.segment_frame(frame)
            ]
        }

    def _tracker(body: dict) -> dict:
        frame = decode_frame(body["frame"], int(body["frame_index"]))
        history = [_mask_from(m) for m in body["history"]]
        return {"mask": _rle(tracker.propagate_mask(frame, history))}

    def _depth(body: dict) -> dict:
        frame = decode_frame(body["frame"], int(body["frame_index"]))
        return {"depth": depth.estimate_depth(frame).tolist()}

    def _semantic(body: dict) -> dict:
        frame = decode_frame(body["frame"], int(body["frame_index"]))
        return {"text": semantic.describe_semantic(frame, _mask_from(body["mask"]))}

    def _action(body: dict) -> dict:
        frames = [
            decode_frame(data, int(idx))
            for data, idx in zip(body["frames"], body["frame_indices"])
        ]
        return {"actions": action.describe_actions(frames, body["object_id"])}

    def _scorer(body: dict) -> dict:
        req = ScoreRequest(
            dt_excerpt=body["dt_excerpt"],
            descriptor=body["descriptor"],
            phase_label=body["phase_label"],
        )
        return {"score": scorer_for(body.get("scorer", "scorer-0")).score_candidate(req)}

    def _query_llm(body: dict) -> dict:
        return {"text": query_llm.generate_text(body["prompt"])}

    def _rle(mask) -> dict:
        from ..dt_model import rle_encode

        return rle_encode(mask).to_json()

    handlers = {
        "phase_detector": _phase_detector,
        "segmenter": _segmenter,
        "tracker": _tracker,
        "depth": _depth,
        "semantic": _semantic,
        "action": _action,
        "scorer": _scorer,
        "query_llm": _query_llm,
    }

    @app.post("/v1/{kind}")
    def serve(kind: str, body: dict) -> JSONResponse:
        handler = handlers.get(kind)
        if handler is None:
            return JSONResponse({"ok": False, "error": f"unknown backend kind {kind!r}"})
        try:
            return JSONResponse({"ok": True, "result": handler(body)})
        except (KeyError, TypeError, ValueError) as exc:
            return JSONResponse({"ok": False, "error": f"{type(exc).__name__}: {exc}"})

    return app
