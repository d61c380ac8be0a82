"""Three-stage sample generation: ensemble voting over object-phase pairs,
temporal alignment verification, and templated query synthesis with
temporally-gated ground-truth masks.

Two candidate scores are always computed and stored. The verbatim weighted
double sum scales with phase length and carries an effective 1/K^2, so it can
leave [0,1]; the normalized score is the plain mean over scorers and frames
and is the default thresholding mode.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .backends import (
    BackendProtocolError,
    BackendSuite,
    BackendTransportError,
    ScoreRequest,
)
from .dt_model import (
    FrameInterval,
    ObjectInstance,
    PhaseSegment,
    RleMask,
    VideoDT,
    canonical_dumps,
    empty_mask,
    phase_at,
    rle_decode,
    validate,
)

TEMPLATE_ID = "segment-during-v1"


class ForgeError(RuntimeError):
    """A generation stage failed in a way that aborts the whole forge."""


class QueryRejected(RuntimeError):
    """Generated query failed the post-generation guard; sample is skipped."""


@dataclass(frozen=True)
class VoteTable:
    """Per-(scorer, object, frame) relevance votes with ensemble weights."""

    entries: dict[tuple[int, str, int], float]
    K: int
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ValueError("need at least one scorer")
        if len(self.weights) != self.K:
            raise ValueError(f"{len(self.weights)} weights for {self.K} scorers")
        bad = {k: v for k, v in self.entries.items() if not 0.0 <= v <= 1.0}
        if bad:
            raise ValueError(f"votes outside [0,1]: {sorted(bad)[:3]}")

    @property
    def weight_sum(self) -> float:
        return float(sum(self.weights))


def uniform_weights(k: int) -> tuple[float, ...]:
    return tuple(1.0 / k for _ in range(k))


@dataclass(frozen=True)
class PairScores:
    score_paper: float
    score_normalized: float
    phase_start: int


@dataclass(frozen=True)
class CandidatePair:
    object_id: str
    phase_id: str
    score_paper: float
    score_normalized: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score_normalized <= 1.0:
            raise ValueError(f"normalized score {self.score_normalized} outside [0,1]")


@dataclass(frozen=True)
class ForgeConfig:
    theta_vote: float = 0.5
    theta_conf: float = 0.5
    aggregation_mode: str = "normalized"
    K: int = 3

    def __post_init__(self) -> None:
        if not 0.0 <= self.theta_conf <= 1.0:
            raise ValueError(f"theta_conf {self.theta_conf} outside [0,1]")
        if self.aggregation_mode not in ("paper", "normalized"):
            raise ValueError(f"unknown aggregation mode {self.aggregation_mode!r}")
        if self.K < 1:
            raise ValueError("K must be >= 1")

    def to_json(self) -> dict:
        return {
            "theta_vote": self.theta_vote,
            "theta_conf": self.theta_conf,
            "aggregation_mode": self.aggregation_mode,
            "K": self.K,
        }


@dataclass(frozen=True)
class BenchmarkSample:
    """One forged benchmark triplet plus provenance and review state."""

    sample_id: str
    video_id: str
    query: str
    target_object: str
    phase_id: str
    phase_label: str
    interval: FrameInterval
    frame_count: int
    frame_dims: tuple[int, int]
    gt_masks: tuple[RleMask, ...]
    source_masks: tuple[RleMask, ...]
    provenance: dict = field(default_factory=dict)
    review_status: str = "pending"

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "video_id": self.video_id,
            "query": self.query,
            "target_object": self.target_object,
            "phase": {"phase_id": self.phase_id, "label": self.phase_label},
            "interval": self.interval.to_json(),
            "frame_count": self.frame_count,
            "frame_dims": list(self.frame_dims),
            "gt_masks": [m.to_json() for m in self.gt_masks],
            "source_masks": [m.to_json() for m in self.source_masks],
            "provenance": self.provenance,
            "review_status": self.review_status,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "BenchmarkSample":
        return cls(
            sample_id=str(obj["sample_id"]),
            video_id=str(obj["video_id"]),
            query=str(obj["query"]),
            target_object=str(obj["target_object"]),
            phase_id=str(obj["phase"]["phase_id"]),
            phase_label=str(obj["phase"]["label"]),
            interval=FrameInterval.from_json(obj["interval"]),
            frame_count=int(obj["frame_count"]),
            frame_dims=(int(obj["frame_dims"][0]), int(obj["frame_dims"][1])),
            gt_masks=tuple(RleMask.from_json(m, "gt_masks") for m in obj["gt_masks"]),
            source_masks=tuple(RleMask.from_json(m, "source_masks") for m in obj["source_masks"]),
            provenance=dict(obj.get("provenance", {})),
            review_status=str(obj.get("review_status", "pending")),
        )


# ---------------------------------------------------------------------------
# Stage 1: voting and aggregation
# ---------------------------------------------------------------------------


def _excerpt(dt: VideoDT, inst: ObjectInstance, phase: PhaseSegment) -> str:
    payload = {
        "video_id": dt.video_id,
        "frame": inst.frame,
        "object_id": inst.object_id,
        "phase_id": phase.phase_id,
        "confidence": inst.confidence,
        "mask_area": inst.mask.area,
        "semantic": inst.semantic,
    }
    return canonical_dumps(payload)


def score_all(
    dt: VideoDT,
    scorers: Sequence,
    K: Optional[int] = None,
    weights: Optional[Sequence[float]] = None,
    workers: int = 1,
) -> VoteTable:
    """One vote per (scorer, object, frame) where the frame lies in a phase."""
    k_count = K if K is not None else len(scorers)
    if k_count < 1 or k_count > len(scorers):
        raise ValueError(f"need 1..{len(scorers)} scorers, requested {k_count}")
    active = list(scorers[:k_count])
    jobs: list[tuple[int, str, int, ScoreRequest]] = []
    for t in range(dt.frame_count):
        phase = phase_at(dt, t)
        if phase is None:
            continue
        for inst in dt.objects[t]:
            req = ScoreRequest(
                dt_excerpt=_excerpt(dt, inst, phase),
                descriptor=inst.semantic,
                phase_label=phase.label,
            )
            for k in range(k_count):
                jobs.append((k, inst.object_id, t, req))

    def run(job):
        k, object_id, t, req = job
        try:
            return (k, object_id, t), active[k].score_candidate(req)
        except BackendProtocolError as exc:
            raise ForgeError(f"scorer {k} protocol failure: {exc}") from exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]
    entries = dict(results)
    w = tuple(weights) if weights is not None else uniform_weights(k_count)
    return VoteTable(entries=entries, K=k_count, weights=w)


def aggregate(
    table: VoteTable,
    phases: Sequence[PhaseSegment],
    mode: str = "normalized",
) -> dict[tuple[str, str], PairScores]:
    """Both ensemble scores per (object, phase) pair.

    score_paper is the weighted double sum scaled by 1/K, exactly as defined;
    score_normalized is the mean vote over scorers and the frames of the
    phase where the object actually has entries.
    """
    if mode not in ("paper", "normalized"):
        raise ValueError(f"unknown aggregation mode {mode!r}")
    sums: dict[tuple[str, str], float] = {}
    weighted: dict[tuple[str, str], float] = {}
    frames_seen: dict[tuple[str, str], set[int]] = {}
    by_phase: dict[str, PhaseSegment] = {p.phase_id: p for p in phases}
    for (k, object_id, t), vote in table.entries.items():
        for phase in phases:
            if t in phase.interval:
                key = (object_id, phase.phase_id)
                sums[key] = sums.get(key, 0.0) + vote
                weighted[key] = weighted.get(key, 0.0) + vote * table.weights[k]
                frames_seen.setdefault(key, set()).add(t)
                break
    out: dict[tuple[str, str], PairScores] = {}
    for key, total in sums.items():
        n_frames = len(frames_seen[key])
        out[key] = PairScores(
            score_paper=weighted[key] / table.K,
            score_normalized=total / (table.K * n_frames),
            phase_start=by_phase[key[1]].interval.start,
        )
    return out


def select_candidates(
    agg: Mapping[tuple[str, str], PairScores],
    theta_vote: float,
    mode: str = "normalized",
) -> list[CandidatePair]:
    """Pairs strictly above the threshold, deterministically ordered."""
    if mode not in ("paper", "normalized"):
        raise ValueError(f"unknown aggregation mode {mode!r}")

    def pick(scores: PairScores) -> float:
        return scores.score_paper if mode == "paper" else scores.score_normalized

    chosen = [
        (key, scores) for key, scores in agg.items() if pick(scores) > theta_vote
    ]
    chosen.sort(key=lambda item: (-pick(item[1]), item[0][0], item[1].phase_start))
    return [
        CandidatePair(
            object_id=key[0],
            phase_id=key[1],
            score_paper=scores.score_paper,
            score_normalized=scores.score_normalized,
        )
        for key, scores in chosen
    ]


# ---------------------------------------------------------------------------
# Stage 2: temporal alignment verification
# ---------------------------------------------------------------------------


def verify_alignment(dt: VideoDT, pair: CandidatePair, theta_conf: float) -> bool:
    """True iff some frame of the pair's phase is confidently present and active."""
    phase = dt.phase_by_id(pair.phase_id)
    if phase is None:
        raise ValueError(f"phase {pair.phase_id!r} not in twin")
    instances = dt.instances_of(pair.object_id)
    if not instances:
        raise ValueError(f"object {pair.object_id!r} not in twin")
    return any(
        t in instances
        and instances[t].confidence > theta_conf
        and len(instances[t].actions) > 0
        for t in range(phase.interval.start, phase.interval.end)
    )


# ---------------------------------------------------------------------------
# Stage 3: relations, query synthesis, gated ground truth
# ---------------------------------------------------------------------------


def _centroid(mask: RleMask) -> tuple[float, float]:
    ys, xs = np.nonzero(rle_decode(mask))
    return (float(xs.mean()), float(ys.mean()))


def _representative_frame(dt: VideoDT, pair: CandidatePair) -> int:
    phase = dt.phase_by_id(pair.phase_id)
    instances = dt.instances_of(pair.object_id)
    in_phase = [t for t in range(phase.interval.start, phase.interval.end) if t in instances]
    if not in_phase:
        raise ValueError(f"object {pair.object_id!r} never appears during {pair.phase_id!r}")
    return max(in_phase, key=lambda t: (instances[t].confidence, -t))


def extract_relations(dt: VideoDT, pair: CandidatePair) -> tuple[list[str], list[str]]:
    """Spatial relations (centroid side + relative depth at the object's most
    confident phase frame, against the nearest other object) and semantic
    descriptors of co-occurring objects across the phase."""
    phase = dt.phase_by_id(pair.phase_id)
    instances = dt.instances_of(pair.object_id)
    rep = _representative_frame(dt, pair)
    mine = instances[rep]
    others = [inst for inst in dt.objects[rep] if inst.object_id != pair.object_id]

    spatial: list[str] = []
    if others:
        my_centroid = _centroid(mine.mask)
        nearest = min(
            others,
            key=lambda o: (
                (_centroid(o.mask)[0] - my_centroid[0]) ** 2
                + (_centroid(o.mask)[1] - my_centroid[1]) ** 2,
                o.object_id,
            ),
        )
        ox, oy = _centroid(nearest.mask)
        dx, dy = ox - my_centroid[0], oy - my_centroid[1]
        if abs(dx) >= abs(dy) and dx != 0:
            side = "left of" if dx > 0 else "right of"
            spatial.append(f"{side} the {nearest.semantic}")
        elif dy != 0:
            side = "above" if dy > 0 else "below"
            spatial.append(f"{side} the {nearest.semantic}")
        if mine.depth is not None and nearest.depth is not None:
            if mine.depth.mean < nearest.depth.mean:
                spatial.append(f"nearer than the {nearest.semantic}")
            elif mine.depth.mean > nearest.depth.mean:
                spatial.append(f"farther than the {nearest.semantic}")

    co_occurring: set[str] = set()
    for t in range(phase.interval.start, phase.interval.end):
        if t not in instances:
            continue
        for inst in dt.objects[t]:
            if inst.object_id != pair.object_id:
                co_occurring.add(inst.semantic)
    return spatial, sorted(co_occurring)


_EXPLICIT_INDEX_RE = re.compile(
    r"frames?\W{0,3}\d|\d(?:st|nd|rd|th)?\W{0,3}frames?|\bt\s*=\s*\d", re.I
)


def query_guard(query: str) -> Optional[str]:
    """Reason the query is unusable, or None when it passes."""
    if not query.strip():
        return "empty query"
    if _EXPLICIT_INDEX_RE.search(query):
        return "query leaks explicit frame indices"
    return None


def build_prompt(descriptor: str, relations: Sequence[str], phase: PhaseSegment) -> str:
    relation_clause = f", {relations[0]}," if relations else ""
    return (
        "TEMPLATE: Segment the {descriptor}{relation_clause} during {phase_label}.\n"
        f"SLOT descriptor={descriptor}\n"
        f"SLOT relation_clause={relation_clause}\n"
        f"SLOT phase_label={phase.label}\n"
        "Rephrase naturally; never mention explicit frame numbers or timestamps."
    )


def generate_query(
    dt: VideoDT,
    pair: CandidatePair,
    relations: tuple[list[str], list[str]],
    phase: PhaseSegment,
    query_llm,
) -> str:
    """Synthesize the temporally-implicit query for a validated pair."""
    rep = _representative_frame(dt, pair)
    descriptor = dt.instances_of(pair.object_id)[rep].semantic
    prompt = build_prompt(descriptor, relations[0], phase)
    query = query_llm.generate_text(prompt)
    reason = query_guard(query)
    if reason is not None:
        raise QueryRejected(reason)
    return query


def construct_gt(dt: VideoDT, pair: CandidatePair) -> list[RleMask]:
    """Instance masks gated by the phase window: empty outside, twin mask inside."""
    phase = dt.phase_by_id(pair.phase_id)
    if phase is None:
        raise ValueError(f"phase {pair.phase_id!r} not in twin")
    instances = dt.instances_of(pair.object_id)
    h, w = dt.frame_dims
    blank = empty_mask(h, w)
    out = []
    for t in range(dt.frame_count):
        if t in phase.interval and t in instances:
            out.append(instances[t].mask)
        else:
            out.append(blank)
    return out


def missing_frames(dt: VideoDT, pair: CandidatePair) -> list[int]:
    """Phase frames where the target object is absent from the twin."""
    phase = dt.phase_by_id(pair.phase_id)
    instances = dt.instances_of(pair.object_id)
    return [t for t in range(phase.interval.start, phase.interval.end) if t not in instances]


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------


def forge_with_report(
    dt: VideoDT, backends: BackendSuite, config: ForgeConfig, workers: int = 1
) -> tuple[list[BenchmarkSample], dict]:
    violations = validate(dt)
    if violations:
        raise ValueError("cannot forge from invalid twin: " + "; ".join(violations))
    backends.require("query_llm")
    if len(backends.scorers) < config.K:
        raise ValueError(f"need {config.K} scorers, suite has {len(backends.scorers)}")

    report: dict = {
        "video_id": dt.video_id,
        "config": config.to_json(),
        "rejected": [],
        "samples": [],
    }
    scorer_names = [getattr(s, "name", f"scorer-{k}") for k, s in enumerate(backends.scorers)]
    scorer_seeds = [getattr(s, "seed", None) for s in backends.scorers]

    table = score_all(dt, backends.scorers, K=config.K, workers=workers)
    agg = aggregate(table, dt.phases, config.aggregation_mode)
    candidates = select_candidates(agg, config.theta_vote, config.aggregation_mode)
    selected_keys = {(c.object_id, c.phase_id) for c in candidates}
    for key, scores in sorted(agg.items()):
        if key not in selected_keys:
            value = scores.score_paper if config.aggregation_mode == "paper" else scores.score_normalized
            report["rejected"].append(
                {
                    "object_id": key[0],
                    "phase_id": key[1],
                    "stage": "vote",
                    "reason": f"score {value} <= theta_vote {config.theta_vote}",
                }
            )

    samples: list[BenchmarkSample] = []
    for pair in candidates:
        if not verify_alignment(dt, pair, config.theta_conf):
            report["rejected"].append(
                {
                    "object_id": pair.object_id,
                    "phase_id": pair.phase_id,
                    "stage": "alignment",
                    "reason": f"no phase frame with confidence > {config.theta_conf} and activity",
                }
            )
            continue
        phase = dt.phase_by_id(pair.phase_id)
        relations = extract_relations(dt, pair)
        try:
            query = generate_query(dt, pair, relations, phase, backends.query_llm)
        except (QueryRejected, BackendTransportError, BackendProtocolError) as exc:
            report["rejected"].append(
                {
                    "object_id": pair.object_id,
                    "phase_id": pair.phase_id,
                    "stage": "query",
                    "reason": str(exc),
                }
            )
            continue
        gt = construct_gt(dt, pair)
        missing = missing_frames(dt, pair)
        instances = dt.instances_of(pair.object_id)
        h, w = dt.frame_dims
        blank = empty_mask(h, w)
        source = [instances[t].mask if t in instances else blank for t in range(dt.frame_count)]
        sample = BenchmarkSample(
            sample_id=f"{dt.video_id}-{pair.object_id}-{pair.phase_id}",
            video_id=dt.video_id,
            query=query,
            target_object=pair.object_id,
            phase_id=pair.phase_id,
            phase_label=phase.label,
            interval=phase.interval,
            frame_count=dt.frame_count,
            frame_dims=dt.frame_dims,
            gt_masks=tuple(gt),
            source_masks=tuple(source),
            provenance={
                "score_paper": pair.score_paper,
                "score_normalized": pair.score_normalized,
                "scorer_names": scorer_names,
                "scorer_seeds": scorer_seeds,
                "template_id": TEMPLATE_ID,
                "relations_spatial": relations[0],
                "relations_semantic": relations[1],
                "missing_frames": missing,
            },
            review_status="pending",
        )
        samples.append(sample)
        report["samples"].append(sample.sample_id)
    return samples, report


def forge(dt: VideoDT, backends: BackendSuite, config: ForgeConfig) -> list[BenchmarkSample]:
    samples, _ = forge_with_report(dt, backends, config)
    return samples
