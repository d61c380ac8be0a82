"""Scores predicted temporally-constrained mask sequences against ground truth.

Spatial quality (gated Jaccard over ground-truth-active frames) and temporal
quality (Jaccard over the frame-activity sets) are factored, so a model cannot
inflate its score with trivially correct empty frames; their product is the
combined score. Leakage measures predicted foreground mass falling outside the
ground-truth window. All functions are pure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .dt_model import ParseError, RleMask, rle_decode
from .query_forge import BenchmarkSample

METRICS_VERSION = "tcvrs-metrics/1"


@dataclass(frozen=True)
class PredictionSequence:
    """Per-frame predicted masks; an empty mask means "constraint inactive"."""

    sample_id: str
    masks: tuple[RleMask, ...]

    def to_json(self) -> dict:
        return {"sample_id": self.sample_id, "masks": [m.to_json() for m in self.masks]}

    @classmethod
    def from_json(cls, obj: dict) -> "PredictionSequence":
        return cls(
            sample_id=str(obj["sample_id"]),
            masks=tuple(RleMask.from_json(m, f"masks[{i}]") for i, m in enumerate(obj["masks"])),
        )


@dataclass(frozen=True)
class SampleReport:
    j_gated: float
    t_iou: float
    leakage: float
    tc_score: float
    frame_count: int
    active_count: int

    def to_json(self) -> dict:
        return {
            "j_gated": self.j_gated,
            "t_iou": self.t_iou,
            "leakage": self.leakage,
            "tc_score": self.tc_score,
            "frame_count": self.frame_count,
            "active_count": self.active_count,
        }


@dataclass(frozen=True)
class EvalReport:
    version: str
    per_sample: dict[str, SampleReport]
    means: dict[str, float]
    missing_predictions: tuple[str, ...]
    unknown_predictions: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "per_sample": {sid: r.to_json() for sid, r in sorted(self.per_sample.items())},
            "means": self.means,
            "missing_predictions": list(self.missing_predictions),
            "unknown_predictions": list(self.unknown_predictions),
        }


def frame_iou(pred: RleMask, gt: RleMask) -> float:
    """|P n G| / |P u G|; 1 by convention when both masks are empty."""
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise ValueError(
            f"mask dims differ: {pred.height}x{pred.width} vs {gt.height}x{gt.width}"
        )
    if pred.is_empty() and gt.is_empty():
        return 1.0
    a = rle_decode(pred).astype(bool)
    b = rle_decode(gt).astype(bool)
    union = np.logical_or(a, b).sum()
    return float(np.logical_and(a, b).sum()) / float(union)


def temporal_iou(pred_seq: Sequence[RleMask], gt_seq: Sequence[RleMask]) -> float:
    """Jaccard similarity of the non-empty-frame sets; 1 when both are empty."""
    if len(pred_seq) != len(gt_seq):
        raise ValueError(f"sequence lengths differ: {len(pred_seq)} vs {len(gt_seq)}")
    active_pred = {t for t, m in enumerate(pred_seq) if not m.is_empty()}
    active_gt = {t for t, m in enumerate(gt_seq) if not m.is_empty()}
    if not active_pred and not active_gt:
        return 1.0
    return len(active_pred & active_gt) / len(active_pred | active_gt)


def evaluate_sample(pred_seq: Sequence[RleMask], gt_seq: Sequence[RleMask]) -> SampleReport:
    if len(pred_seq) != len(gt_seq):
        raise ValueError(f"sequence lengths differ: {len(pred_seq)} vs {len(gt_seq)}")
    active_gt = [t for t, m in enumerate(gt_seq) if not m.is_empty()]
    if active_gt:
        j_gated = float(np.mean([frame_iou(pred_seq[t], gt_seq[t]) for t in active_gt]))
    else:
        j_gated = 1.0 if all(m.is_empty() for m in pred_seq) else 0.0
    t_iou = temporal_iou(pred_seq, gt_seq)
    active_set = set(active_gt)
    total_mass = sum(m.area for m in pred_seq)
    outside_mass = sum(m.area for t, m in enumerate(pred_seq) if t not in active_set)
    leakage = outside_mass / total_mass if total_mass else 0.0
    return SampleReport(
        j_gated=j_gated,
        t_iou=t_iou,
        leakage=leakage,
        tc_score=j_gated * t_iou,
        frame_count=len(gt_seq),
        active_count=len(active_gt),
    )


def always_on_baseline(gt_seq: Sequence[RleMask]) -> list[RleMask]:
    """A temporally-unconstrained baseline: the nearest active-window mask is
    repeated on every inactive frame, modeling a method that segments the
    object across the whole video."""
    active = [t for t, m in enumerate(gt_seq) if not m.is_empty()]
    if not active:
        raise ValueError("baseline needs at least one active ground-truth frame")
    out = []
    for t in range(len(gt_seq)):
        nearest = min(active, key=lambda s: (abs(s - t), s))
        out.append(gt_seq[nearest])
    return out


def evaluate_dataset(
    samples: Sequence[BenchmarkSample],
    predictions: Mapping[str, PredictionSequence],
) -> EvalReport:
    """Per-sample reports plus unweighted means over all given samples.

    Samples without a prediction are scored as fully empty and listed;
    predictions with no matching sample are listed as unknown.
    """
    known = {s.sample_id for s in samples}
    unknown = tuple(sorted(sid for sid in predictions if sid not in known))
    missing = []
    per_sample: dict[str, SampleReport] = {}
    for sample in samples:
        pred = predictions.get(sample.sample_id)
        if pred is None:
            missing.append(sample.sample_id)
            h, w = sample.frame_dims
            masks: Sequence[RleMask] = tuple(
                RleMask(h, w, (h * w,)) for _ in range(sample.frame_count)
            )
        else:
            masks = pred.masks
        per_sample[sample.sample_id] = evaluate_sample(masks, sample.gt_masks)
    if per_sample:
        means = {
            key: float(np.mean([getattr(r, key) for r in per_sample.values()]))
            for key in ("j_gated", "t_iou", "leakage", "tc_score")
        }
    else:
        means = {key: 0.0 for key in ("j_gated", "t_iou", "leakage", "tc_score")}
    return EvalReport(
        version=METRICS_VERSION,
        per_sample=per_sample,
        means=means,
        missing_predictions=tuple(missing),
        unknown_predictions=unknown,
    )


def load_predictions(pred_dir) -> dict[str, PredictionSequence]:
    """Read {sample_id}.rle.json prediction files from a directory."""
    out: dict[str, PredictionSequence] = {}
    for path in sorted(Path(pred_dir).glob("*.rle.json")):
        try:
            seq = PredictionSequence.from_json(json.loads(path.read_text(encoding="utf-8")))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad prediction file {path}: {exc}") from exc
        out[seq.sample_id] = seq
    return out


def write_prediction(pred: PredictionSequence, pred_dir) -> Path:
    out = Path(pred_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{pred.sample_id}.rle.json"
    path.write_text(
        json.dumps(pred.to_json(), sort_keys=True, separators=(",", ":"), ensure_ascii=False),
        encoding="utf-8",
    )
    return path
