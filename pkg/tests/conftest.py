from __future__ import annotations

from pathlib import Path

import pytest

from tcvrs.backends import mock_suite
from tcvrs.dt_builder import BuildConfig, build_with_report
from tcvrs.dt_model import FrameInterval, PhaseSegment
from tcvrs.query_forge import ForgeConfig, forge_with_report
from tcvrs.video import SceneObject, SceneScript, SyntheticVideo

REPO_ROOT = Path(__file__).resolve().parent.parent
DEMO_SCENE = REPO_ROOT / "scenes" / "or_demo.json"


def make_scene(
    video_id: str = "scene",
    frame_count: int = 6,
    frame_dims: tuple[int, int] = (48, 64),
    phases: list[tuple[str, str, int, int]] | None = None,
    objects: list[dict] | None = None,
) -> SceneScript:
    """Programmatic scene-script builder for fixtures."""
    if phases is None:
        phases = [("p0", "patient preparation", 0, 3), ("p1", "scanning", 3, frame_count)]
    if objects is None:
        objects = [
            {
                "object_id": "cart",
                "semantic": "medical instrument cart positioned near the bed",
                "rect": (8, 20, 10, 12),
                "depth": 4.0,
                "confidence": 0.9,
                "actions": {"p0": ("staff arrange instruments",), "p1": ()},
                "scores": {"p0": 0.8, "p1": 0.2},
            }
        ]
    segs = [
        PhaseSegment(
            phase_id=pid, label=label, description=f"{label} activity",
            interval=FrameInterval(start, end),
        )
        for pid, label, start, end in phases
    ]
    scene_objects = []
    palette = [(200, 60, 40), (60, 120, 220), (80, 200, 90), (230, 200, 60)]
    for i, spec in enumerate(objects):
        scene_objects.append(
            SceneObject(
                object_id=spec["object_id"],
                semantic=spec["semantic"],
                color=spec.get("color", palette[i % len(palette)]),
                depth=spec.get("depth", 5.0),
                confidence=spec.get("confidence", 0.9),
                rect=tuple(spec["rect"]),
                velocity=tuple(spec.get("velocity", (0, 0))),
                visible=spec.get("visible"),
                actions={k: tuple(v) for k, v in spec.get("actions", {}).items()},
                scores=dict(spec.get("scores", {})),
            )
        )
    return SceneScript(
        video_id=video_id,
        frame_count=frame_count,
        frame_dims=frame_dims,
        phases=segs,
        objects=scene_objects,
    )


@pytest.fixture(scope="session")
def demo_script() -> SceneScript:
    return SceneScript.load(DEMO_SCENE)


@pytest.fixture(scope="session")
def demo_video(demo_script) -> SyntheticVideo:
    return SyntheticVideo(demo_script)


@pytest.fixture(scope="session")
def demo_suite(demo_script):
    return mock_suite(demo_script, seed=7)


@pytest.fixture(scope="session")
def demo_dt(demo_video, demo_suite):
    dt, _ = build_with_report(demo_video, demo_suite, BuildConfig(t_s=3))
    return dt


@pytest.fixture(scope="session")
def demo_samples(demo_dt, demo_suite):
    samples, _ = forge_with_report(demo_dt, demo_suite, ForgeConfig())
    return samples
