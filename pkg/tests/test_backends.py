from __future__ import annotations

import numpy as np
import pytest
from fastapi import FastAPI
from fastapi.testclient import TestClient

from tcvrs.backends import (
    BackendDescriptor,
    BackendProtocolError,
    BackendSuite,
    BackendTransportError,
    ScoreRequest,
    derive_seed,
    extract_features,
    mock_suite,
    stable_unit,
)
from tcvrs.backends.features import estimate_translation, to_gray
from tcvrs.backends.remote import RemoteBackend, decode_frame, encode_frame
from tcvrs.backends.server import create_backend_app
from tcvrs.dt_model import canonical_dumps, rle_encode
from tcvrs.video import Frame, SyntheticVideo

from conftest import make_scene

SEED = 7


def remote_suite(script, seed: int, k_scorers: int = 3) -> BackendSuite:
    client = TestClient(create_backend_app(script, seed=seed))
    endpoint = "http://testserver"

    def backend(kind: str, name: str) -> RemoteBackend:
        return RemoteBackend(
            BackendDescriptor(kind=kind, endpoint=endpoint, name=name), client=client
        )

    return BackendSuite(
        phase_detector=backend("phase_detector", "remote-phases"),
        segmenter=backend("segmenter", "remote-segmenter"),
        tracker=backend("tracker", "remote-tracker"),
        depth=backend("depth", "remote-depth"),
        semantic=backend("semantic", "remote-semantic"),
        action=backend("action", "remote-action"),
        scorers=tuple(backend("scorer", f"scorer-{k}") for k in range(k_scorers)),
        query_llm=backend("query_llm", "remote-query-llm"),
    )


@pytest.fixture(scope="module", params=["mock", "remote"])
def suites(request, demo_script):
    factory = mock_suite if request.param == "mock" else remote_suite
    exit_script = make_scene(
        video_id="exit",
        objects=[
            {
                "object_id": "cart",
                "semantic": "medical instrument cart positioned near the bed",
                "rect": (8, 20, 10, 12),
                "visible": __import__("tcvrs.dt_model", fromlist=["FrameInterval"]).FrameInterval(0, 4),
                "actions": {"p0": ("moves",)},
                "scores": {"p0": 0.8},
            }
        ],
    )
    return {
        "demo": factory(demo_script, SEED),
        "exit": factory(exit_script, SEED),
        "exit_script": exit_script,
    }


class TestPhaseDetector:
    def test_scripted_phases(self, suites, demo_video):
        phases = suites["demo"].phase_detector.detect_phases(demo_video)
        assert [(p.interval.start, p.interval.end) for p in phases] == [(0, 3), (3, 6)]
        assert all(p.label and p.description for p in phases)

    def test_single_frame_video(self, demo_script):
        scene = make_scene(video_id="one", frame_count=1, phases=[], objects=[])
        suite = mock_suite(scene, SEED)
        phases = suite.phase_detector.detect_phases(SyntheticVideo(scene))
        assert len(phases) == 1
        assert (phases[0].interval.start, phases[0].interval.end) == (0, 1)

    def test_unreachable_endpoint(self, demo_video):
        backend = RemoteBackend(
            BackendDescriptor(kind="phase_detector", endpoint="http://127.0.0.1:1", name="down")
        )
        with pytest.raises(BackendTransportError):
            backend.detect_phases(demo_video)


class TestSegmenter:
    def test_two_objects(self, suites, demo_script):
        frame = demo_script.render_frame(0)
        segments = suites["demo"].segmenter.segment_frame(frame)
        assert len(segments) == 2
        areas = sorted(int(m.sum()) for m, _ in segments)
        assert areas == [120, 140]
        assert all(0.0 <= c <= 1.0 for _, c in segments)

    def test_blank_frame(self, suites):
        blank = make_scene(video_id="blank", objects=[])
        suite = mock_suite(blank, SEED)
        assert suite.segmenter.segment_frame(blank.render_frame(0)) == []

    def test_dim_mismatch(self, suites):
        # The mock rejects locally; the remote surfaces the server's rejection
        # as a protocol error.
        frame = Frame(index=0, pixels=np.zeros((4, 4, 3), dtype=np.uint8))
        with pytest.raises((ValueError, BackendProtocolError)):
            suites["demo"].segmenter.segment_frame(frame)


class TestTracker:
    def test_static_object(self, suites, demo_script):
        mask0 = demo_script.object_mask("cart", 0)
        frame2 = demo_script.render_frame(2)
        out = suites["demo"].tracker.propagate_mask(frame2, [mask0, mask0])
        assert (out == demo_script.object_mask("cart", 2)).all()

    def test_object_exit(self, suites):
        script = suites["exit_script"]
        tracker = suites["exit"].tracker
        history = [script.object_mask("cart", 3)]
        out4 = tracker.propagate_mask(script.render_frame(4), history)
        assert out4.sum() == 0
        out5 = tracker.propagate_mask(script.render_frame(5), history + [out4])
        assert out5.sum() == 0

    def test_empty_history(self, suites, demo_script):
        with pytest.raises(ValueError):
            suites["demo"].tracker.propagate_mask(demo_script.render_frame(1), [])


class TestDepth:
    def test_plane_values(self, suites, demo_script):
        depth = suites["demo"].depth.estimate_depth(demo_script.render_frame(0))
        cart = demo_script.object_mask("cart", 0).astype(bool)
        monitor = demo_script.object_mask("monitor", 0).astype(bool)
        assert np.allclose(depth[cart], 4.0)
        assert np.allclose(depth[monitor], 7.0)
        background = ~(cart | monitor)
        assert np.allclose(depth[background], 10.0)

    def test_constant_scene(self):
        scene = make_scene(video_id="flat", objects=[])
        suite = mock_suite(scene, SEED)
        depth = suite.depth.estimate_depth(scene.render_frame(0))
        assert np.allclose(depth, 10.0)


class TestSemanticAndActions:
    def test_semantic_lookup(self, suites, demo_script):
        frame = demo_script.render_frame(0)
        mask = demo_script.object_mask("cart", 0)
        text = suites["demo"].semantic.describe_semantic(frame, mask)
        assert text == "medical instrument cart positioned near the bed"

    def test_semantic_empty_mask(self, suites, demo_script):
        frame = demo_script.render_frame(0)
        with pytest.raises(ValueError):
            suites["demo"].semantic.describe_semantic(frame, np.zeros(frame.dims, np.uint8))

    def test_actions_active_phase(self, suites, demo_script):
        from tcvrs.video import isolate_object

        frame = demo_script.render_frame(0)
        window = [isolate_object(frame, demo_script.object_mask("cart", 0))]
        actions = suites["demo"].action.describe_actions(window, "cart")
        assert actions == ["staff arrange sterile instruments on the cart"]

    def test_actions_idle_object(self, suites, demo_script):
        from tcvrs.video import isolate_object

        frame = demo_script.render_frame(4)
        window = [isolate_object(frame, demo_script.object_mask("cart", 4))]
        assert suites["demo"].action.describe_actions(window, "cart") == []

    def test_actions_empty_window(self, suites):
        with pytest.raises(ValueError):
            suites["demo"].action.describe_actions([], "cart")


def score_request(object_id="cart", phase_id="p0", frame=0,
                  semantic="medical instrument cart positioned near the bed",
                  phase_label="patient preparation") -> ScoreRequest:
    return ScoreRequest(
        dt_excerpt=canonical_dumps(
            {
                "video_id": "or_demo",
                "frame": frame,
                "object_id": object_id,
                "phase_id": phase_id,
                "confidence": 0.9,
                "mask_area": 120,
                "semantic": semantic,
            }
        ),
        descriptor=semantic,
        phase_label=phase_label,
    )


class TestScorer:
    def test_scripted_score(self, suites):
        scorer = suites["demo"].scorers[0]
        assert scorer.score_candidate(score_request()) == 0.8

    def test_determinism(self, suites):
        scorer = suites["demo"].scorers[1]
        req = score_request(object_id="ghost", phase_id="px", semantic="an unknown thing")
        assert scorer.score_candidate(req) == scorer.score_candidate(req)

    def test_unscripted_falls_back_to_seeded_hash(self, suites):
        scorer = suites["demo"].scorers[0]
        req = score_request(object_id="ghost", phase_id="px", semantic="an unknown thing")
        expected = stable_unit(derive_seed(SEED, "scorer", "scorer-0"), "ghost", "px", 0)
        assert scorer.score_candidate(req) == pytest.approx(expected, abs=0)

    def test_empty_request_rejected(self):
        with pytest.raises(ValueError):
            ScoreRequest(dt_excerpt="", descriptor="x", phase_label="y")


class TestQueryLlm:
    def test_slot_filling(self, suites):
        prompt = (
            "TEMPLATE: Segment the {descriptor} during {phase_label}.\n"
            "SLOT descriptor=medical instrument cart positioned near the bed\n"
            "SLOT phase_label=patient preparation\n"
        )
        text = suites["demo"].query_llm.generate_text(prompt)
        assert text == (
            "Segment the medical instrument cart positioned near the bed "
            "during patient preparation."
        )

    def test_empty_prompt(self, suites):
        with pytest.raises(ValueError):
            suites["demo"].query_llm.generate_text("")


class TestMockRemoteAgreement:
    """One behavior for both transports: identical outputs on identical inputs."""

    def test_scores_agree(self, demo_script):
        local = mock_suite(demo_script, SEED)
        remote = remote_suite(demo_script, SEED)
        req = score_request(object_id="ghost", phase_id="px", semantic="mystery")
        for k in range(3):
            assert local.scorers[k].score_candidate(req) == remote.scorers[k].score_candidate(req)

    def test_segmentation_agrees(self, demo_script):
        local = mock_suite(demo_script, SEED)
        remote = remote_suite(demo_script, SEED)
        frame = demo_script.render_frame(3)
        for (m_a, c_a), (m_b, c_b) in zip(
            local.segmenter.segment_frame(frame), remote.segmenter.segment_frame(frame)
        ):
            assert (m_a == m_b).all() and c_a == c_b

    def test_depth_agrees(self, demo_script):
        local = mock_suite(demo_script, SEED)
        remote = remote_suite(demo_script, SEED)
        frame = demo_script.render_frame(1)
        assert np.array_equal(
            local.depth.estimate_depth(frame), remote.depth.estimate_depth(frame)
        )


def rigged_app(kind_results: dict) -> TestClient:
    import json as _json

    from fastapi import Response

    app = FastAPI()

    @app.post("/v1/{kind}")
    def serve(kind: str, body: dict):
        # Raw response so even non-compliant payloads (NaN) reach the client.
        payload = _json.dumps({"ok": True, "result": kind_results[kind]})
        return Response(content=payload, media_type="application/json")

    return TestClient(app)


class TestProtocolViolations:
    def frame(self) -> Frame:
        return Frame(index=0, pixels=np.zeros((2, 2, 3), dtype=np.uint8))

    def backend(self, kind: str, result) -> RemoteBackend:
        return RemoteBackend(
            BackendDescriptor(kind=kind, endpoint="http://testserver", name="rigged"),
            client=rigged_app({kind: result}),
        )

    def test_score_above_one(self):
        backend = self.backend("scorer", {"score": 1.2})
        with pytest.raises(BackendProtocolError, match="outside"):
            backend.score_candidate(score_request())

    def test_confidence_above_one(self):
        mask = rle_encode(np.ones((2, 2), dtype=np.uint8)).to_json()
        backend = self.backend("segmenter", {"objects": [{"mask": mask, "confidence": 1.5}]})
        with pytest.raises(BackendProtocolError, match="outside"):
            backend.segment_frame(self.frame())

    def test_nan_depth(self):
        backend = self.backend("depth", {"depth": [[float("nan"), 1.0], [1.0, 1.0]]})
        with pytest.raises(BackendProtocolError, match="non-finite"):
            backend.estimate_depth(self.frame())

    def test_empty_query_reply(self):
        backend = self.backend("query_llm", {"text": ""})
        with pytest.raises(BackendProtocolError, match="empty"):
            backend.generate_text("TEMPLATE: x")

    def test_error_envelope(self):
        app = FastAPI()

        @app.post("/v1/query_llm")
        def serve(body: dict):
            return {"ok": False, "error": "model exploded"}

        backend = RemoteBackend(
            BackendDescriptor(kind="query_llm", endpoint="http://testserver", name="err"),
            client=TestClient(app),
        )
        with pytest.raises(BackendProtocolError, match="model exploded"):
            backend.generate_text("hello")

    def test_overlapping_phase_reply(self, demo_video):
        phases = [
            {"phase_id": "a", "label": "x", "description": "d", "interval": [0, 4]},
            {"phase_id": "b", "label": "y", "description": "d", "interval": [3, 6]},
        ]
        backend = self.backend("phase_detector", {"phases": phases})
        with pytest.raises(BackendProtocolError, match="overlap"):
            backend.detect_phases(demo_video)


class TestFrameCodec:
    def test_png_round_trip(self, demo_script):
        frame = demo_script.render_frame(2)
        again = decode_frame(encode_frame(frame), frame.index)
        assert (again.pixels == frame.pixels).all()
        assert again.index == 2


class TestFeatures:
    def test_identical_frames_zero_flow(self, demo_script):
        frame = demo_script.render_frame(0)
        feats = extract_features(frame, frame)
        assert feats.flow_summary == (0.0, 0.0)

    def test_one_pixel_right_shift(self):
        scene_a = make_scene(video_id="m", objects=[
            {"object_id": "box", "semantic": "a box", "rect": (10, 10, 8, 8),
             "velocity": (1, 0), "actions": {}, "scores": {}},
        ])
        prev = scene_a.render_frame(0)
        cur = scene_a.render_frame(1)
        feats = extract_features(prev, cur)
        assert feats.flow_summary[0] > 0
        assert feats.flow_summary == (1.0, 0.0)

    def test_uniform_gray_one_hot_histogram(self):
        pixels = np.full((16, 16, 3), 128, dtype=np.uint8)
        feats = extract_features(Frame(0, pixels), Frame(1, pixels))
        hist = feats.color_histogram
        assert hist[8] == 1.0
        assert sum(hist) == pytest.approx(1.0, abs=1e-12)
        assert all(h >= 0 for h in hist)

    def test_dim_mismatch(self):
        a = Frame(0, np.zeros((4, 4, 3), dtype=np.uint8))
        b = Frame(1, np.zeros((6, 6, 3), dtype=np.uint8))
        with pytest.raises(ValueError):
            extract_features(a, b)

    def test_translation_estimator_exact(self):
        rng = np.random.default_rng(3)
        base = rng.integers(0, 255, size=(20, 24), dtype=np.uint8).astype(np.float64)
        shifted = np.roll(base, shift=(2, -1), axis=(0, 1))  # dy=2, dx=-1
        dx, dy = estimate_translation(base, shifted)
        assert (dx, dy) == (-1.0, 2.0)

    def test_gray_weights(self):
        pixels = np.zeros((2, 2, 3), dtype=np.uint8)
        pixels[..., 1] = 100
        assert np.allclose(to_gray(pixels), 58.7)


def test_mock_suite_deterministic(demo_script, demo_video):
    a = mock_suite(demo_script, SEED)
    b = mock_suite(demo_script, SEED)
    frame = demo_script.render_frame(0)
    assert [
        (m.tolist(), c) for m, c in a.segmenter.segment_frame(frame)
    ] == [(m.tolist(), c) for m, c in b.segmenter.segment_frame(frame)]
    req = score_request(object_id="zzz", phase_id="p9", semantic="nothing scripted")
    assert a.scorers[2].score_candidate(req) == b.scorers[2].score_candidate(req)


def test_descriptor_rejects_unknown_kind():
    with pytest.raises(ValueError, match="unknown backend kind"):
        BackendDescriptor(kind="oracle")
