"""Dataset persistence: canonical manifests, per-sample mask files, the
append-only review-decision log, and dataset statistics.

Layout under a dataset root:
    manifest.json              canonical manifest
    masks/{sample_id}.rle.json full sample payload (gated + source masks)
    decisions.jsonl            append-only review log, replayed onto the manifest
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .dt_model import FrameInterval, ParseError, canonical_bytes, empty_mask
from .query_forge import BenchmarkSample

MANIFEST_NAME = "manifest.json"
MASKS_DIR = "masks"
DECISIONS_NAME = "decisions.jsonl"


class ConflictError(ValueError):
    """Duplicate sample ids in one dataset."""


def _created_at() -> str:
    # Reproducible-build convention: wall clock only via SOURCE_DATE_EPOCH.
    epoch = int(os.environ.get("SOURCE_DATE_EPOCH", "0"))
    return datetime.fromtimestamp(epoch, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    video_id: str
    query: str
    interval: FrameInterval
    mask_file: str
    review_status: str

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "video_id": self.video_id,
            "query": self.query,
            "interval": self.interval.to_json(),
            "mask_file": self.mask_file,
            "review_status": self.review_status,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ManifestEntry":
        return cls(
            sample_id=str(obj["sample_id"]),
            video_id=str(obj["video_id"]),
            query=str(obj["query"]),
            interval=FrameInterval.from_json(obj["interval"]),
            mask_file=str(obj["mask_file"]),
            review_status=str(obj["review_status"]),
        )


@dataclass(frozen=True)
class Manifest:
    dataset_name: str
    version: str
    created_at: str
    samples: tuple[ManifestEntry, ...]

    def entry(self, sample_id: str) -> Optional[ManifestEntry]:
        for e in self.samples:
            if e.sample_id == sample_id:
                return e
        return None

    def to_json(self) -> dict:
        return {
            "dataset_name": self.dataset_name,
            "version": self.version,
            "created_at": self.created_at,
            "samples": [e.to_json() for e in self.samples],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Manifest":
        return cls(
            dataset_name=str(obj["dataset_name"]),
            version=str(obj["version"]),
            created_at=str(obj["created_at"]),
            samples=tuple(ManifestEntry.from_json(e) for e in obj["samples"]),
        )


@dataclass(frozen=True)
class ReviewDecision:
    sample_id: str
    verdict: str
    reviewer: str
    timestamp: str
    edited_interval: Optional[FrameInterval] = None

    def __post_init__(self) -> None:
        if self.verdict not in ("accept", "reject", "edit"):
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if self.verdict == "edit" and self.edited_interval is None:
            raise ValueError("edit decision requires edited_interval")

    def to_json(self) -> dict:
        out = {
            "sample_id": self.sample_id,
            "verdict": self.verdict,
            "reviewer": self.reviewer,
            "timestamp": self.timestamp,
        }
        if self.edited_interval is not None:
            out["edited_interval"] = self.edited_interval.to_json()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ReviewDecision":
        interval = obj.get("edited_interval")
        return cls(
            sample_id=str(obj["sample_id"]),
            verdict=str(obj["verdict"]),
            reviewer=str(obj.get("reviewer", "anonymous")),
            timestamp=str(obj.get("timestamp", "")),
            edited_interval=None if interval is None else FrameInterval.from_json(interval),
        )


@dataclass(frozen=True)
class ApplyResult:
    manifest: Manifest
    applied: int
    skipped: tuple[str, ...]


# ---------------------------------------------------------------------------
# Writing and loading
# ---------------------------------------------------------------------------


def write_samples(
    samples: Sequence[BenchmarkSample],
    root,
    dataset_name: str = "tcvrs-bench",
    version: str = "0.1.0",
) -> Manifest:
    """Persist samples; identical input always produces identical bytes."""
    root = Path(root)
    seen: set[str] = set()
    for s in samples:
        if s.sample_id in seen:
            raise ConflictError(f"duplicate sample_id {s.sample_id!r}")
        seen.add(s.sample_id)
    (root / MASKS_DIR).mkdir(parents=True, exist_ok=True)
    entries = []
    for s in samples:
        mask_file = f"{MASKS_DIR}/{s.sample_id}.rle.json"
        (root / mask_file).write_bytes(canonical_bytes(s.to_json()))
        entries.append(
            ManifestEntry(
                sample_id=s.sample_id,
                video_id=s.video_id,
                query=s.query,
                interval=s.interval,
                mask_file=mask_file,
                review_status=s.review_status,
            )
        )
    manifest = Manifest(
        dataset_name=dataset_name,
        version=version,
        created_at=_created_at(),
        samples=tuple(entries),
    )
    write_manifest(manifest, root)
    return manifest


def write_manifest(manifest: Manifest, root) -> None:
    (Path(root) / MANIFEST_NAME).write_bytes(canonical_bytes(manifest.to_json()))


def load_manifest(root) -> Manifest:
    path = Path(root) / MANIFEST_NAME
    try:
        return Manifest.from_json(json.loads(path.read_text(encoding="utf-8")))
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad manifest at {path}: {exc}") from exc


def load_sample(root, entry: ManifestEntry) -> BenchmarkSample:
    path = Path(root) / entry.mask_file
    try:
        return BenchmarkSample.from_json(json.loads(path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad sample file at {path}: {exc}") from exc


def write_sample_file(sample: BenchmarkSample, root, mask_file: str) -> None:
    (Path(root) / mask_file).write_bytes(canonical_bytes(sample.to_json()))


# ---------------------------------------------------------------------------
# Decision log
# ---------------------------------------------------------------------------


def append_decision(root, decision: ReviewDecision) -> None:
    path = Path(root) / DECISIONS_NAME
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(decision.to_json(), sort_keys=True, ensure_ascii=False) + "\n")


def read_decisions(path) -> tuple[list[ReviewDecision], list[str]]:
    """Parse a JSONL decision log; malformed lines become warnings, not errors."""
    decisions: list[ReviewDecision] = []
    warnings: list[str] = []
    path = Path(path)
    if not path.exists():
        return decisions, warnings
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            decisions.append(ReviewDecision.from_json(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            warnings.append(f"line {lineno}: {exc}")
    return decisions, warnings


def last_decisions(decisions: Iterable[ReviewDecision]) -> dict[str, ReviewDecision]:
    """Last decision per sample; ties on timestamp resolve to the later line."""
    ordered = sorted(enumerate(decisions), key=lambda p: (p[1].timestamp, p[0]))
    return {d.sample_id: d for _, d in ordered}


def regate(sample: BenchmarkSample, interval: FrameInterval) -> BenchmarkSample:
    """Re-apply temporal gating to an edited interval from the source masks."""
    h, w = sample.frame_dims
    blank = empty_mask(h, w)
    gated = tuple(
        sample.source_masks[t] if t in interval else blank for t in range(sample.frame_count)
    )
    return replace(sample, interval=interval, gt_masks=gated)


def apply_decisions(root, decisions: Sequence[ReviewDecision]) -> ApplyResult:
    """Replay decisions onto the stored manifest; idempotent, last-wins."""
    root = Path(root)
    manifest = load_manifest(root)
    known = {e.sample_id for e in manifest.samples}
    last = last_decisions(decisions)
    skipped = tuple(sorted(sid for sid in last if sid not in known))
    applied = 0
    entries = []
    for entry in manifest.samples:
        decision = last.get(entry.sample_id)
        if decision is None:
            entries.append(entry)
            continue
        applied += 1
        if decision.verdict == "accept":
            entries.append(replace(entry, review_status="accepted"))
        elif decision.verdict == "reject":
            entries.append(replace(entry, review_status="rejected"))
        else:
            interval = decision.edited_interval
            sample = load_sample(root, entry)
            if interval.end > sample.frame_count:
                skipped = tuple(sorted([*skipped, entry.sample_id]))
                applied -= 1
                entries.append(entry)
                continue
            edited = replace(
                regate(sample, interval), review_status="accepted"
            )
            write_sample_file(edited, root, entry.mask_file)
            entries.append(replace(entry, interval=interval, review_status="accepted"))
    updated = replace(manifest, samples=tuple(entries))
    write_manifest(updated, root)
    return ApplyResult(manifest=updated, applied=applied, skipped=skipped)


# ---------------------------------------------------------------------------
# Statistics and export
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetStats:
    total: int
    per_video: dict[str, dict[str, float]]

    def to_json(self) -> dict:
        return {"total": self.total, "per_video": self.per_video}


def stats(manifest: Manifest) -> DatasetStats:
    """Per-video counts and 1-decimal percentage fractions, rejected excluded."""
    counts: dict[str, int] = {}
    for entry in manifest.samples:
        if entry.review_status == "rejected":
            continue
        counts[entry.video_id] = counts.get(entry.video_id, 0) + 1
    total = sum(counts.values())
    per_video = {
        vid: {"count": n, "fraction": round(100.0 * n / total, 1)}
        for vid, n in sorted(counts.items())
    }
    return DatasetStats(total=total, per_video=per_video)


def export(root, out_dir) -> Manifest:
    """Copy accepted samples into a fresh benchmark directory."""
    root = Path(root)
    out = Path(out_dir)
    manifest = load_manifest(root)
    accepted = [e for e in manifest.samples if e.review_status == "accepted"]
    (out / MASKS_DIR).mkdir(parents=True, exist_ok=True)
    for entry in accepted:
        (out / entry.mask_file).write_bytes((root / entry.mask_file).read_bytes())
    exported = Manifest(
        dataset_name=manifest.dataset_name,
        version=manifest.version,
        created_at=_created_at(),
        samples=tuple(accepted),
    )
    write_manifest(exported, out)
    return exported
