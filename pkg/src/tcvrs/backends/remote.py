"""HTTP clients for the backend wire protocol.

Protocol: POST {endpoint}/v1/{kind} with a JSON body; frames travel as
base64 PNG. Replies are {"ok": bool, "result": <kind-specific>, "error"?: str}.
Connection failures raise BackendTransportError; anything wrong with a
received reply raises BackendProtocolError. Retrying belongs to the caller.
"""

from __future__ import annotations

import base64
import io
import json
from typing import Optional, Sequence

import httpx
import numpy as np
from PIL import Image

from ..dt_model import PhaseSegment, RleMask, ParseError, rle_decode, rle_encode
from ..video import Frame
from . import (
    BackendDescriptor,
    BackendProtocolError,
    BackendTransportError,
    ScoreRequest,
    check_phases,
    check_unit_score,
)


def encode_frame(frame: Frame) -> str:
    buf = io.BytesIO()
    Image.fromarray(frame.pixels).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_frame(data: str, index: int) -> Frame:
    pixels = np.asarray(Image.open(io.BytesIO(base64.b64decode(data))).convert("RGB"))
    return Frame(index=index, pixels=pixels.astype(np.uint8))


def _mask_to_wire(mask: np.ndarray) -> dict:
    return rle_encode(mask).to_json()


def _mask_from_wire(obj: dict, dims: tuple[int, int], source: str) -> np.ndarray:
    try:
        rle = RleMask.from_json(obj, source)
        decoded = rle_decode(rle)
    except (ParseError, ValueError) as exc:
        raise BackendProtocolError(f"{source}: bad mask in reply ({exc})") from exc
    if decoded.shape != dims:
        raise BackendProtocolError(
            f"{source}: mask dims {decoded.shape} differ from frame dims {dims}"
        )
    return decoded


class RemoteBackend:
    """One remote role; the descriptor's kind selects the endpoint path."""

    def __init__(self, descriptor: BackendDescriptor, client: Optional[httpx.Client] = None) -> None:
        self.descriptor = descriptor
        self._client = client or httpx.Client(timeout=30.0)

    @property
    def kind(self) -> str:
        return self.descriptor.kind

    def _post(self, payload: dict) -> dict:
        url = f"{self.descriptor.endpoint.rstrip('/')}/v1/{self.kind}"
        try:
            resp = self._client.post(url, json=payload)
        except httpx.TransportError as exc:
            raise BackendTransportError(f"{self.kind} backend unreachable at {url}: {exc}") from exc
        except httpx.HTTPError as exc:
            raise BackendProtocolError(f"{self.kind} backend request failed: {exc}") from exc
        if resp.status_code != 200:
            raise BackendProtocolError(
                f"{self.kind} backend returned HTTP {resp.status_code}: {resp.text[:200]}"
            )
        try:
            body = resp.json()
        except json.JSONDecodeError as exc:
            raise BackendProtocolError(f"{self.kind} backend sent non-JSON reply") from exc
        if not isinstance(body, dict) or "ok" not in body:
            raise BackendProtocolError(f"{self.kind} backend reply missing 'ok' envelope")
        if not body["ok"]:
            raise BackendProtocolError(
                f"{self.kind} backend error: {body.get('error', 'unspecified')}"
            )
        if "result" not in body:
            raise BackendProtocolError(f"{self.kind} backend reply missing 'result'")
        return body["result"]

    # -- role operations ----------------------------------------------------

    def detect_phases(self, video) -> list[PhaseSegment]:
        if video.frame_count < 1:
            raise ValueError("video has no frames")
        result = self._post(
            {
                "video_id": video.video_id,
                "frame_count": video.frame_count,
                "frames": [encode_frame(video.frame(t)) for t in range(video.frame_count)],
            }
        )
        try:
            phases = [
                PhaseSegment.from_json(p, f"phases[{i}]")
                for i, p in enumerate(result["phases"])
            ]
        except (ParseError, KeyError, TypeError) as exc:
            raise BackendProtocolError(f"phase detector reply malformed: {exc}") from exc
        return check_phases(phases, video.frame_count, "phase detector")

    def segment_frame(self, frame: Frame) -> list[tuple[np.ndarray, float]]:
        result = self._post({"frame_index": frame.index, "frame": encode_frame(frame)})
        try:
            entries = result["objects"]
        except (KeyError, TypeError) as exc:
            raise BackendProtocolError(f"segmenter reply malformed: {exc}") from exc
        out = []
        for i, entry in enumerate(entries):
            mask = _mask_from_wire(entry.get("mask"), frame.dims, f"segmenter objects[{i}]")
            conf = check_unit_score(entry.get("confidence"), f"segmenter objects[{i}]")
            out.append((mask, conf))
        return out

    def propagate_mask(self, frame: Frame, history: Sequence[np.ndarray]) -> np.ndarray:
        if not history:
            raise ValueError("tracker history must be non-empty")
        result = self._post(
            {
                "frame_index": frame.index,
                "frame": encode_frame(frame),
                "history": [_mask_to_wire(m) for m in history],
            }
        )
        return _mask_from_wire(result.get("mask"), frame.dims, "tracker")

    def estimate_depth(self, frame: Frame) -> np.ndarray:
        result = self._post({"frame_index": frame.index, "frame": encode_frame(frame)})
        try:
            depth = np.asarray(result["depth"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendProtocolError(f"depth reply malformed: {exc}") from exc
        if depth.shape != frame.dims:
            raise BackendProtocolError(
                f"depth map shape {depth.shape} differs from frame dims {frame.dims}"
            )
        if not np.isfinite(depth).all():
            raise BackendProtocolError("depth map contains non-finite values")
        return depth

    def describe_semantic(self, frame: Frame, mask: np.ndarray) -> str:
        if not mask.any():
            raise ValueError("semantic description needs a non-empty mask")
        result = self._post(
            {"frame_index": frame.index, "frame": encode_frame(frame), "mask": _mask_to_wire(mask)}
        )
        text = result.get("text") if isinstance(result, dict) else None
        if not text or not isinstance(text, str):
            raise BackendProtocolError("semantic backend returned empty text")
        return text

    def describe_actions(self, window: Sequence[Frame], object_id: str) -> list[str]:
        if not window:
            raise ValueError("action window must be non-empty")
        result = self._post(
            {
                "frame_indices": [f.index for f in window],
                "frames": [encode_frame(f) for f in window],
                "object_id": object_id,
            }
        )
        try:
            actions = result["actions"]
        except (KeyError, TypeError) as exc:
            raise BackendProtocolError(f"action reply malformed: {exc}") from exc
        if not isinstance(actions, list) or not all(isinstance(a, str) for a in actions):
            raise BackendProtocolError("action reply must be a list of strings")
        return actions

    def score_candidate(self, req: ScoreRequest) -> float:
        result = self._post(
            {
                "scorer": self.descriptor.name,
                "dt_excerpt": req.dt_excerpt,
                "descriptor": req.descriptor,
                "phase_label": req.phase_label,
            }
        )
        if not isinstance(result, dict) or "score" not in result:
            raise BackendProtocolError("scorer reply missing 'score'")
        return check_unit_score(result["score"], f"scorer {self.descriptor.name}")

    def generate_text(self, prompt: str) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        result = self._post({"prompt": prompt})
        text = result.get("text") if isinstance(result, dict) else None
        if not text or not isinstance(text, str):
            raise BackendProtocolError("query LLM returned empty text")
        return text
