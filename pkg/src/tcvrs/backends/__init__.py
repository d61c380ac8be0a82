"""Pluggable model-backend interfaces: descriptors, errors, and suite wiring.

Every external model role is reached through the same contract, with two
interchangeable families: deterministic seeded mocks driven by a scene
script, and remote clients speaking the HTTP wire protocol (see `remote`).
Backend instances are stateless per call and safe for concurrent use.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

from ..dt_model import PhaseSegment
from .features import extract_features

KINDS = (
    "phase_detector",
    "segmenter",
    "tracker",
    "depth",
    "semantic",
    "action",
    "scorer",
    "query_llm",
)


class BackendTransportError(RuntimeError):
    """The backend could not be reached or the connection failed."""


class BackendProtocolError(RuntimeError):
    """The backend replied, but the reply violates the wire contract."""


@dataclass(frozen=True)
class BackendDescriptor:
    """Identifies one backend: its role, where it lives, and its mock seed."""

    kind: str
    endpoint: str = "mock"
    name: str = ""
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown backend kind {self.kind!r} (expected one of {KINDS})")


@dataclass(frozen=True)
class ScoreRequest:
    """Arguments of one relevance vote: twin excerpt, descriptor, phase label."""

    dt_excerpt: str
    descriptor: str
    phase_label: str

    def __post_init__(self) -> None:
        if not self.dt_excerpt or not self.descriptor or not self.phase_label:
            raise ValueError("all ScoreRequest fields must be non-empty")


def stable_unit(seed: int, *parts: object) -> float:
    """Deterministic hash of (seed, parts) mapped into [0, 1)."""
    text = "|".join([str(seed), *[str(p) for p in parts]])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def derive_seed(seed: int, *parts: object) -> int:
    """Stable sub-seed so mock suites and the mock server agree per role."""
    text = "|".join([str(seed), *[str(p) for p in parts]])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def check_unit_score(value: float, source: str) -> float:
    """Out-of-range scores are protocol violations, never silently clamped."""
    if not isinstance(value, (int, float)) or not -0.0 <= float(value) <= 1.0:
        raise BackendProtocolError(f"{source}: score {value!r} outside [0,1]")
    return float(value)


def check_phases(phases: Sequence[PhaseSegment], frame_count: int, source: str) -> list[PhaseSegment]:
    for i, phase in enumerate(phases):
        if phase.interval.end > frame_count:
            raise BackendProtocolError(
                f"{source}: phase {phase.phase_id} ends at {phase.interval.end} "
                f"beyond frame count {frame_count}"
            )
        for other in phases[:i]:
            if other.interval.overlaps(phase.interval):
                raise BackendProtocolError(
                    f"{source}: phases {other.phase_id} and {phase.phase_id} overlap"
                )
    return list(phases)


@dataclass(frozen=True)
class BackendSuite:
    """The full model suite wired by role; scorers are an ordered ensemble."""

    phase_detector: object = None
    segmenter: object = None
    tracker: object = None
    depth: object = None
    semantic: object = None
    action: object = None
    scorers: tuple = ()
    query_llm: object = None
    descriptors: tuple[BackendDescriptor, ...] = field(default=())

    def require(self, *roles: str) -> None:
        missing = [r for r in roles if not getattr(self, r, None)]
        if missing:
            raise ValueError(f"backend suite is missing required roles: {missing}")


def mock_suite(script, seed: int = 0, k_scorers: int = 3) -> BackendSuite:
    """Deterministic in-process suite over one scene script."""
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

    scorer_names = [f"scorer-{k}" for k in range(k_scorers)]
    scorers = tuple(
        MockScorer(script, seed=derive_seed(seed, "scorer", name), name=name)
        for name in scorer_names
    )
    descriptors = tuple(
        [
            BackendDescriptor(kind="phase_detector", name="mock-phases", seed=seed),
            BackendDescriptor(kind="segmenter", name="mock-segmenter", seed=seed),
            BackendDescriptor(kind="tracker", name="mock-tracker", seed=seed),
            BackendDescriptor(kind="depth", name="mock-depth", seed=seed),
            BackendDescriptor(kind="semantic", name="mock-semantic", seed=seed),
            BackendDescriptor(kind="action", name="mock-action", seed=seed),
            BackendDescriptor(kind="query_llm", name="mock-query-llm", seed=seed),
        ]
        + [BackendDescriptor(kind="scorer", name=name, seed=seed) for name in scorer_names]
    )
    return BackendSuite(
        phase_detector=MockPhaseDetector(script),
        segmenter=MockSegmenter(script),
        tracker=MockTracker(script),
        depth=MockDepthEstimator(script),
        semantic=MockSemanticDescriber(script),
        action=MockActionDescriber(script),
        scorers=scorers,
        query_llm=MockQueryLlm(seed=seed),
        descriptors=descriptors,
    )


__all__ = [
    "KINDS",
    "BackendDescriptor",
    "BackendProtocolError",
    "BackendSuite",
    "BackendTransportError",
    "ScoreRequest",
    "check_phases",
    "check_unit_score",
    "derive_seed",
    "extract_features",
    "mock_suite",
    "stable_unit",
]
