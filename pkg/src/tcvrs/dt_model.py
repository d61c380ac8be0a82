"""Digital-twin domain types, the binary-mask RLE codec, and JSON (de)serialization.

All types are immutable value objects; codec and lookup helpers are pure
functions, so everything here is safe to share across worker threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np


class MaskFormatError(ValueError):
    """Raised when an RLE payload or mask matrix is structurally invalid."""


class ParseError(ValueError):
    """Raised when serialized digital-twin bytes cannot be decoded."""


def canonical_dumps(obj: Any) -> str:
    """Canonical JSON: UTF-8, sorted keys, no insignificant whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_bytes(obj: Any) -> bytes:
    return canonical_dumps(obj).encode("utf-8")


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FrameInterval:
    """Half-open frame range [start, end), 0-based."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid interval [{self.start},{self.end}): need 0 <= start < end")

    def __contains__(self, t: int) -> bool:
        return self.start <= t < self.end

    def __len__(self) -> int:
        return self.end - self.start

    def overlaps(self, other: "FrameInterval") -> bool:
        return self.start < other.end and other.start < self.end

    def to_json(self) -> list[int]:
        return [self.start, self.end]

    @classmethod
    def from_json(cls, obj: Any, where: str = "interval") -> "FrameInterval":
        if (
            not isinstance(obj, (list, tuple))
            or len(obj) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in obj)
        ):
            raise ParseError(f"{where}: expected [start, end] integer pair, got {obj!r}")
        try:
            return cls(obj[0], obj[1])
        except ValueError as exc:
            raise ParseError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class RleMask:
    """Run-length encoded binary mask over a row-major scan.

    Runs alternate background/foreground and the first run counts background
    pixels (it may be 0 when the scan starts on foreground).
    """

    height: int
    width: int
    runs: tuple[int, ...]

    def check(self) -> Optional[str]:
        """Return a violation message, or None when well-formed."""
        if self.height < 1 or self.width < 1:
            return f"mask dims {self.height}x{self.width} must be positive"
        if not self.runs:
            return "mask has no runs"
        if any(r < 0 for r in self.runs):
            return "mask has a negative run length"
        if any(r == 0 for r in self.runs[1:]):
            return "zero-length run after the first"
        total = sum(self.runs)
        if total != self.height * self.width:
            return f"run sum {total} != {self.height * self.width} pixels"
        return None

    @property
    def area(self) -> int:
        """Foreground pixel count (odd-position runs)."""
        return sum(self.runs[1::2])

    def is_empty(self) -> bool:
        return self.area == 0

    def to_json(self) -> dict[str, Any]:
        return {"h": self.height, "w": self.width, "runs": list(self.runs)}

    @classmethod
    def from_json(cls, obj: Any, where: str = "mask") -> "RleMask":
        if not isinstance(obj, Mapping):
            raise ParseError(f"{where}: expected mask object, got {type(obj).__name__}")
        try:
            runs = tuple(int(r) for r in obj["runs"])
            return cls(int(obj["h"]), int(obj["w"]), runs)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{where}: malformed mask payload ({exc})") from exc


def empty_mask(height: int, width: int) -> RleMask:
    if height < 1 or width < 1:
        raise MaskFormatError(f"mask dims {height}x{width} must be positive")
    return RleMask(height, width, (height * width,))


def rle_encode(mask: np.ndarray) -> RleMask:
    """Encode a binary matrix; runs alternate starting with background."""
    arr = np.asarray(mask)
    if arr.ndim != 2 or arr.size == 0:
        raise MaskFormatError(f"expected non-empty 2-D matrix, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise MaskFormatError("mask entries must be 0 or 1")
    flat = arr.astype(np.uint8).reshape(-1)
    # Boundaries between unequal neighbours give run end positions.
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(edges).tolist()
    if flat[0] == 1:
        runs = [0] + runs
    return RleMask(int(arr.shape[0]), int(arr.shape[1]), tuple(int(r) for r in runs))


def rle_decode(rle: RleMask) -> np.ndarray:
    """Decode to a uint8 matrix; exact inverse of rle_encode."""
    problem = rle.check()
    if problem is not None:
        raise MaskFormatError(problem)
    flat = np.zeros(rle.height * rle.width, dtype=np.uint8)
    pos = 0
    value = 0
    for run in rle.runs:
        if value:
            flat[pos : pos + run] = 1
        pos += run
        value ^= 1
    return flat.reshape(rle.height, rle.width)


@dataclass(frozen=True)
class DepthStats:
    """Population mean/stdev of depth values under a mask."""

    mean: float
    stdev: float
    pixel_count: int

    def to_json(self) -> dict[str, Any]:
        return {"mean": self.mean, "stdev": self.stdev, "pixel_count": self.pixel_count}

    @classmethod
    def from_json(cls, obj: Any, where: str = "depth") -> "DepthStats":
        if not isinstance(obj, Mapping):
            raise ParseError(f"{where}: expected depth object, got {type(obj).__name__}")
        try:
            return cls(float(obj["mean"]), float(obj["stdev"]), int(obj["pixel_count"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{where}: malformed depth payload ({exc})") from exc


@dataclass(frozen=True)
class ObjectInstance:
    """One tracked object at one frame."""

    object_id: str
    frame: int
    mask: RleMask
    confidence: float
    semantic: str
    actions: tuple[str, ...] = ()
    depth: Optional[DepthStats] = None
    extra: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        out = {
            "object_id": self.object_id,
            "frame": self.frame,
            "mask": self.mask.to_json(),
            "confidence": self.confidence,
            "semantic": self.semantic,
            "actions": list(self.actions),
        }
        if self.depth is not None:
            out["depth"] = self.depth.to_json()
        out.update(self.extra)
        return out

    @classmethod
    def from_json(cls, obj: Any, where: str) -> "ObjectInstance":
        if not isinstance(obj, Mapping):
            raise ParseError(f"{where}: expected object instance, got {type(obj).__name__}")
        known = {"object_id", "frame", "mask", "confidence", "semantic", "actions", "depth"}
        try:
            depth = obj.get("depth")
            return cls(
                object_id=str(obj["object_id"]),
                frame=int(obj["frame"]),
                mask=RleMask.from_json(obj["mask"], f"{where}.mask"),
                confidence=float(obj["confidence"]),
                semantic=str(obj["semantic"]),
                actions=tuple(str(a) for a in obj.get("actions", [])),
                depth=None if depth is None else DepthStats.from_json(depth, f"{where}.depth"),
                extra={k: v for k, v in obj.items() if k not in known},
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"{where}: malformed instance ({exc})") from exc


@dataclass(frozen=True)
class PhaseSegment:
    """A contiguous procedural phase with its half-open frame interval."""

    phase_id: str
    label: str
    description: str
    interval: FrameInterval
    extra: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        out = {
            "phase_id": self.phase_id,
            "label": self.label,
            "description": self.description,
            "interval": self.interval.to_json(),
        }
        out.update(self.extra)
        return out

    @classmethod
    def from_json(cls, obj: Any, where: str) -> "PhaseSegment":
        if not isinstance(obj, Mapping):
            raise ParseError(f"{where}: expected phase object, got {type(obj).__name__}")
        known = {"phase_id", "label", "description", "interval"}
        try:
            return cls(
                phase_id=str(obj["phase_id"]),
                label=str(obj["label"]),
                description=str(obj["description"]),
                interval=FrameInterval.from_json(obj["interval"], f"{where}.interval"),
                extra={k: v for k, v in obj.items() if k not in known},
            )
        except KeyError as exc:
            raise ParseError(f"{where}: missing field {exc}") from exc


@dataclass(frozen=True)
class FrameFeatures:
    """Low-level per-frame features: motion, appearance, texture."""

    frame: int
    flow_summary: tuple[float, float]
    color_histogram: tuple[float, ...]
    texture_descriptor: tuple[float, ...]
    extra: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        out = {
            "frame": self.frame,
            "flow_summary": list(self.flow_summary),
            "color_histogram": list(self.color_histogram),
            "texture_descriptor": list(self.texture_descriptor),
        }
        out.update(self.extra)
        return out

    @classmethod
    def from_json(cls, obj: Any, where: str) -> "FrameFeatures":
        if not isinstance(obj, Mapping):
            raise ParseError(f"{where}: expected features object, got {type(obj).__name__}")
        known = {"frame", "flow_summary", "color_histogram", "texture_descriptor"}
        try:
            flow = obj["flow_summary"]
            if len(flow) != 2:
                raise ParseError(f"{where}.flow_summary: expected 2 reals")
            return cls(
                frame=int(obj["frame"]),
                flow_summary=(float(flow[0]), float(flow[1])),
                color_histogram=tuple(float(v) for v in obj["color_histogram"]),
                texture_descriptor=tuple(float(v) for v in obj["texture_descriptor"]),
                extra={k: v for k, v in obj.items() if k not in known},
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"{where}: malformed features ({exc})") from exc


@dataclass(frozen=True)
class VideoDT:
    """Per-video digital twin: phases, per-frame object instances, features."""

    video_id: str
    frame_count: int
    frame_dims: tuple[int, int]
    phases: tuple[PhaseSegment, ...]
    objects: tuple[tuple[ObjectInstance, ...], ...]
    features: tuple[FrameFeatures, ...] = ()
    extra: dict[str, Any] = field(default_factory=dict)

    def instances_of(self, object_id: str) -> dict[int, ObjectInstance]:
        """Frame index -> instance for one object, over frames where present."""
        found = {}
        for per_frame in self.objects:
            for inst in per_frame:
                if inst.object_id == object_id:
                    found[inst.frame] = inst
        return found

    def object_ids(self) -> list[str]:
        """All object ids, ordered by first appearance."""
        seen: list[str] = []
        for per_frame in self.objects:
            for inst in per_frame:
                if inst.object_id not in seen:
                    seen.append(inst.object_id)
        return seen

    def phase_by_id(self, phase_id: str) -> Optional[PhaseSegment]:
        for phase in self.phases:
            if phase.phase_id == phase_id:
                return phase
        return None

    def to_json(self) -> dict[str, Any]:
        out = {
            "video_id": self.video_id,
            "frame_count": self.frame_count,
            "frame_dims": list(self.frame_dims),
            "phases": [p.to_json() for p in self.phases],
            "objects": [[inst.to_json() for inst in per_frame] for per_frame in self.objects],
            "features": [f.to_json() for f in self.features],
        }
        out.update(self.extra)
        return out


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def phase_at(dt: VideoDT, t: int) -> Optional[PhaseSegment]:
    """The unique phase whose interval contains t, or None on a gap frame."""
    if not 0 <= t < dt.frame_count:
        raise IndexError(f"frame {t} out of range [0,{dt.frame_count})")
    for phase in dt.phases:
        if t in phase.interval:
            return phase
    return None


def validate(dt: VideoDT) -> list[str]:
    """All invariant violations, empty when the twin is well-formed."""
    v: list[str] = []
    if dt.frame_count < 1:
        v.append(f"frame_count: {dt.frame_count} < 1")
    if dt.frame_dims[0] < 1 or dt.frame_dims[1] < 1:
        v.append(f"frame_dims: {dt.frame_dims} must be positive")

    seen_phase_ids = set()
    for idx, phase in enumerate(dt.phases):
        if phase.phase_id in seen_phase_ids:
            v.append(f"phases[{idx}]: duplicate phase_id {phase.phase_id!r}")
        seen_phase_ids.add(phase.phase_id)
        if phase.interval.end > dt.frame_count:
            v.append(
                f"phases[{idx}].interval: end {phase.interval.end} > frame_count {dt.frame_count}"
            )
        for prev_idx in range(idx):
            if dt.phases[prev_idx].interval.overlaps(phase.interval):
                v.append(
                    f"phases: intervals {dt.phases[prev_idx].interval.to_json()} and "
                    f"{phase.interval.to_json()} overlap"
                )

    if len(dt.objects) != dt.frame_count:
        v.append(f"objects: {len(dt.objects)} frame slots != frame_count {dt.frame_count}")
    for t, per_frame in enumerate(dt.objects):
        ids_here = set()
        for j, inst in enumerate(per_frame):
            where = f"objects[{t}][{j}]"
            if inst.frame != t:
                v.append(f"{where}.frame: {inst.frame} != slot {t}")
            if inst.frame >= dt.frame_count:
                v.append(f"{where}.frame: {inst.frame} >= frame_count {dt.frame_count}")
            if inst.object_id in ids_here:
                v.append(f"{where}.object_id: duplicate {inst.object_id!r} in frame {t}")
            ids_here.add(inst.object_id)
            if not 0.0 <= inst.confidence <= 1.0:
                v.append(f"{where}.confidence: {inst.confidence} outside [0,1]")
            if (inst.mask.height, inst.mask.width) != dt.frame_dims:
                v.append(
                    f"{where}.mask: dims {inst.mask.height}x{inst.mask.width} "
                    f"!= frame dims {dt.frame_dims[0]}x{dt.frame_dims[1]}"
                )
            problem = inst.mask.check()
            if problem is not None:
                v.append(f"{where}.mask: {problem}")
            if inst.depth is not None:
                if inst.depth.stdev < 0:
                    v.append(f"{where}.depth.stdev: {inst.depth.stdev} < 0")
                if inst.depth.pixel_count < 1:
                    v.append(f"{where}.depth.pixel_count: {inst.depth.pixel_count} < 1")

    for idx, feat in enumerate(dt.features):
        where = f"features[{idx}]"
        if not 0 <= feat.frame < dt.frame_count:
            v.append(f"{where}.frame: {feat.frame} outside [0,{dt.frame_count})")
        hist = feat.color_histogram
        if any(h < 0 for h in hist):
            v.append(f"{where}.color_histogram: negative entry")
        elif hist and abs(sum(hist) - 1.0) > 1e-9:
            v.append(f"{where}.color_histogram: sum {sum(hist)} != 1")
    return v


def serialize(dt: VideoDT) -> bytes:
    """Canonical JSON bytes of a valid twin (deserialize(serialize(dt)) == dt)."""
    violations = validate(dt)
    if violations:
        raise ValueError("cannot serialize invalid VideoDT: " + "; ".join(violations))
    return canonical_bytes(dt.to_json())


def deserialize(data: bytes) -> VideoDT:
    """Parse twin bytes; unknown JSON fields are preserved for round-tripping."""
    try:
        obj = json.loads(data.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(obj, Mapping):
        raise ParseError(f"top level: expected object, got {type(obj).__name__}")
    known = {"video_id", "frame_count", "frame_dims", "phases", "objects", "features"}
    try:
        dims = obj["frame_dims"]
        if len(dims) != 2:
            raise ParseError(f"frame_dims: expected [h, w], got {dims!r}")
        objects = tuple(
            tuple(
                ObjectInstance.from_json(inst, f"objects[{t}][{j}]")
                for j, inst in enumerate(per_frame)
            )
            for t, per_frame in enumerate(obj["objects"])
        )
        return VideoDT(
            video_id=str(obj["video_id"]),
            frame_count=int(obj["frame_count"]),
            frame_dims=(int(dims[0]), int(dims[1])),
            phases=tuple(
                PhaseSegment.from_json(p, f"phases[{i}]") for i, p in enumerate(obj["phases"])
            ),
            objects=objects,
            features=tuple(
                FrameFeatures.from_json(f, f"features[{i}]")
                for i, f in enumerate(obj.get("features", []))
            ),
            extra={k: v for k, v in obj.items() if k not in known},
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"malformed VideoDT payload ({exc})") from exc


def load_dt(path: Any) -> VideoDT:
    """Read and parse a twin file."""
    with open(path, "rb") as fh:
        return deserialize(fh.read())


def save_dt(dt: VideoDT, path: Any) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(dt))
