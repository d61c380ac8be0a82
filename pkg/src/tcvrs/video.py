"""Frame sources: scripted synthetic scenes and PNG frame directories.

A scene script is a small JSON fixture describing phases and rigid
rectangular objects. It doubles as the demo input and as the oracle that
drives every mock backend, so end-to-end expectations stay hand-computable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np
from PIL import Image

from .dt_model import FrameInterval, ParseError, PhaseSegment


@dataclass(frozen=True)
class Frame:
    """One video frame: index plus HxWx3 uint8 pixels."""

    index: int
    pixels: np.ndarray

    @property
    def dims(self) -> tuple[int, int]:
        return (int(self.pixels.shape[0]), int(self.pixels.shape[1]))


@dataclass(frozen=True)
class SceneObject:
    """A rigid rectangle with constant velocity and a visibility window."""

    object_id: str
    semantic: str
    color: tuple[int, int, int]
    depth: float
    confidence: float
    rect: tuple[int, int, int, int]  # x, y, w, h at t=0
    velocity: tuple[float, float] = (0.0, 0.0)
    visible: Optional[FrameInterval] = None
    actions: dict[str, tuple[str, ...]] = field(default_factory=dict)
    scores: dict[str, float] = field(default_factory=dict)

    def rect_at(self, t: int) -> tuple[int, int, int, int]:
        x, y, w, h = self.rect
        return (x + round(self.velocity[0] * t), y + round(self.velocity[1] * t), w, h)

    def visible_at(self, t: int) -> bool:
        return self.visible is None or t in self.visible


class SceneScript:
    """Parsed scene fixture with deterministic rendering."""

    def __init__(
        self,
        video_id: str,
        frame_count: int,
        frame_dims: tuple[int, int],
        phases: list[PhaseSegment],
        objects: list[SceneObject],
        background_color: tuple[int, int, int] = (20, 20, 20),
        background_depth: float = 10.0,
    ) -> None:
        if frame_count < 1:
            raise ValueError("scene needs at least one frame")
        self.video_id = video_id
        self.frame_count = frame_count
        self.frame_dims = frame_dims
        self.phases = phases
        self.objects = objects
        self.background_color = background_color
        self.background_depth = background_depth

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "SceneScript":
        try:
            dims = obj["frame_dims"]
            bg = obj.get("background", {})
            objects = []
            for i, spec in enumerate(obj.get("objects", [])):
                visible = spec.get("visible")
                objects.append(
                    SceneObject(
                        object_id=str(spec["object_id"]),
                        semantic=str(spec["semantic"]),
                        color=tuple(int(c) for c in spec.get("color", (200, 200, 200))),
                        depth=float(spec.get("depth", 5.0)),
                        confidence=float(spec.get("confidence", 0.9)),
                        rect=tuple(int(v) for v in spec["rect"]),
                        velocity=tuple(float(v) for v in spec.get("velocity", (0, 0))),
                        visible=None
                        if visible is None
                        else FrameInterval.from_json(visible, f"objects[{i}].visible"),
                        actions={
                            str(k): tuple(str(a) for a in v)
                            for k, v in spec.get("actions", {}).items()
                        },
                        scores={str(k): float(v) for k, v in spec.get("scores", {}).items()},
                    )
                )
            return cls(
                video_id=str(obj["video_id"]),
                frame_count=int(obj["frame_count"]),
                frame_dims=(int(dims[0]), int(dims[1])),
                phases=[
                    PhaseSegment.from_json(p, f"phases[{i}]")
                    for i, p in enumerate(obj.get("phases", []))
                ],
                objects=objects,
                background_color=tuple(int(c) for c in bg.get("color", (20, 20, 20))),
                background_depth=float(bg.get("depth", 10.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"malformed scene script ({exc})") from exc

    @classmethod
    def load(cls, path: Any) -> "SceneScript":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad scene JSON at line {exc.lineno}: {exc.msg}") from exc
        return cls.from_json(obj)

    def object_by_id(self, object_id: str) -> SceneObject:
        for scene_obj in self.objects:
            if scene_obj.object_id == object_id:
                return scene_obj
        raise KeyError(object_id)

    def _paint_order(self) -> list[int]:
        # Farther objects first so nearer ones occlude them.
        return sorted(range(len(self.objects)), key=lambda i: (-self.objects[i].depth, i))

    def attribution(self, t: int) -> np.ndarray:
        """Per-pixel owning object index at frame t, -1 for background."""
        h, w = self.frame_dims
        owner = np.full((h, w), -1, dtype=np.int32)
        for i in self._paint_order():
            scene_obj = self.objects[i]
            if not scene_obj.visible_at(t):
                continue
            x, y, rw, rh = scene_obj.rect_at(t)
            x0, x1 = max(0, x), min(w, x + rw)
            y0, y1 = max(0, y), min(h, y + rh)
            if x0 < x1 and y0 < y1:
                owner[y0:y1, x0:x1] = i
        return owner

    def render_frame(self, t: int) -> Frame:
        if not 0 <= t < self.frame_count:
            raise IndexError(f"frame {t} out of range [0,{self.frame_count})")
        h, w = self.frame_dims
        pixels = np.empty((h, w, 3), dtype=np.uint8)
        pixels[:] = np.array(self.background_color, dtype=np.uint8)
        owner = self.attribution(t)
        for i, scene_obj in enumerate(self.objects):
            pixels[owner == i] = np.array(scene_obj.color, dtype=np.uint8)
        return Frame(index=t, pixels=pixels)

    def object_mask(self, object_id: str, t: int) -> np.ndarray:
        """Exact visible-pixel mask of one object at frame t (uint8)."""
        idx = next(i for i, o in enumerate(self.objects) if o.object_id == object_id)
        return (self.attribution(t) == idx).astype(np.uint8)

    def depth_map(self, t: int) -> np.ndarray:
        h, w = self.frame_dims
        depth = np.full((h, w), self.background_depth, dtype=np.float64)
        owner = self.attribution(t)
        for i, scene_obj in enumerate(self.objects):
            depth[owner == i] = scene_obj.depth
        return depth


class SyntheticVideo:
    """FrameSource over a scene script."""

    def __init__(self, script: SceneScript) -> None:
        self.script = script

    @property
    def video_id(self) -> str:
        return self.script.video_id

    @property
    def frame_count(self) -> int:
        return self.script.frame_count

    @property
    def frame_dims(self) -> tuple[int, int]:
        return self.script.frame_dims

    def frame(self, t: int) -> Frame:
        return self.script.render_frame(t)


class ImageDirVideo:
    """FrameSource over a directory of PNG frames, sorted by filename."""

    def __init__(self, path: Any, video_id: Optional[str] = None) -> None:
        self.path = Path(path)
        self.files = sorted(self.path.glob("*.png"))
        if not self.files:
            raise ValueError(f"no PNG frames under {self.path}")
        self.video_id = video_id or self.path.name
        first = np.asarray(Image.open(self.files[0]).convert("RGB"))
        self.frame_dims = (int(first.shape[0]), int(first.shape[1]))

    @property
    def frame_count(self) -> int:
        return len(self.files)

    def frame(self, t: int) -> Frame:
        if not 0 <= t < len(self.files):
            raise IndexError(f"frame {t} out of range [0,{len(self.files)})")
        pixels = np.asarray(Image.open(self.files[t]).convert("RGB"), dtype=np.uint8)
        return Frame(index=t, pixels=pixels)


def load_video(path: Any):
    """Open a scene script (.json) or a PNG frame directory as a FrameSource."""
    p = Path(path)
    if p.is_dir():
        return ImageDirVideo(p)
    if p.suffix == ".json":
        return SyntheticVideo(SceneScript.load(p))
    raise ValueError(f"unsupported video input {p} (expected .json scene script or PNG dir)")


def isolate_object(frame: Frame, mask: np.ndarray) -> Frame:
    """Black out everything except the object; visual grounding for backends
    that receive an object-focused window (e.g. action description)."""
    pixels = frame.pixels * mask.astype(np.uint8)[..., None]
    return Frame(index=frame.index, pixels=pixels)


def write_frames(video, out_dir: Any) -> list[Path]:
    """Render every frame to out_dir/<t>.png; used by the review preview."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for t in range(video.frame_count):
        target = out / f"{t}.png"
        Image.fromarray(video.frame(t).pixels).save(target, format="PNG")
        written.append(target)
    return written
