from __future__ import annotations

import json

import pytest

from tcvrs.benchmark_store import (
    ApplyResult,
    ConflictError,
    Manifest,
    ManifestEntry,
    ReviewDecision,
    apply_decisions,
    export,
    last_decisions,
    load_manifest,
    load_sample,
    read_decisions,
    regate,
    stats,
    write_samples,
)
from tcvrs.dt_model import FrameInterval


def dataset(tmp_path, samples):
    root = tmp_path / "dataset"
    root.mkdir()
    manifest = write_samples(samples, root)
    return root, manifest


def decision(sample_id, verdict, ts, interval=None, reviewer="alex"):
    return ReviewDecision(
        sample_id=sample_id,
        verdict=verdict,
        reviewer=reviewer,
        timestamp=ts,
        edited_interval=None if interval is None else FrameInterval(*interval),
    )


class TestWriteSamples:
    def test_two_samples(self, tmp_path, demo_samples):
        root, manifest = dataset(tmp_path, demo_samples)
        assert len(manifest.samples) == 2
        assert (root / "manifest.json").exists()
        for entry in manifest.samples:
            assert (root / entry.mask_file).exists()
            assert entry.review_status == "pending"

    def test_duplicate_id_conflict(self, tmp_path, demo_samples):
        with pytest.raises(ConflictError):
            write_samples([demo_samples[0], demo_samples[0]], tmp_path)

    def test_rerun_byte_identical(self, tmp_path, demo_samples):
        root = tmp_path / "d"
        root.mkdir()
        write_samples(demo_samples, root)
        first = {p.name: p.read_bytes() for p in root.rglob("*.json")}
        write_samples(demo_samples, root)
        second = {p.name: p.read_bytes() for p in root.rglob("*.json")}
        assert first == second

    def test_round_trip_manifest(self, tmp_path, demo_samples):
        root, manifest = dataset(tmp_path, demo_samples)
        assert load_manifest(root) == manifest
        loaded = load_sample(root, manifest.samples[0])
        assert loaded == demo_samples[0]


class TestApplyDecisions:
    def test_accept(self, tmp_path, demo_samples):
        root, manifest = dataset(tmp_path, demo_samples)
        sid = manifest.samples[0].sample_id
        result = apply_decisions(root, [decision(sid, "accept", "t1")])
        assert result.applied == 1
        assert result.manifest.entry(sid).review_status == "accepted"
        assert load_manifest(root).entry(sid).review_status == "accepted"

    def test_reject_excluded_from_export(self, tmp_path, demo_samples):
        root, manifest = dataset(tmp_path, demo_samples)
        first, second = [e.sample_id for e in manifest.samples]
        apply_decisions(
            root, [decision(first, "accept", "t1"), decision(second, "reject", "t2")]
        )
        out = tmp_path / "bench"
        exported = export(root, out)
        assert [e.sample_id for e in exported.samples] == [first]
        assert (out / exported.samples[0].mask_file).exists()

    def test_edit_regates_masks(self, tmp_path, demo_samples):
        cart = next(s for s in demo_samples if s.interval.start == 0)  # window [0,3)
        root, manifest = dataset(tmp_path, demo_samples)
        result = apply_decisions(
            root, [decision(cart.sample_id, "edit", "t1", interval=(1, 4))]
        )
        entry = result.manifest.entry(cart.sample_id)
        assert entry.review_status == "accepted"
        assert entry.interval == FrameInterval(1, 4)
        edited = load_sample(root, entry)
        for t, mask in enumerate(edited.gt_masks):
            if 1 <= t < 4:
                assert mask == edited.source_masks[t]
            else:
                assert mask.is_empty()

    def test_idempotent_double_application(self, tmp_path, demo_samples):
        root, manifest = dataset(tmp_path, demo_samples)
        sid = manifest.samples[0].sample_id
        decisions = [
            decision(sid, "edit", "t1", interval=(4, 6)),
            decision(manifest.samples[1].sample_id, "accept", "t2"),
        ]
        apply_decisions(root, decisions)
        snapshot = {p.name: p.read_bytes() for p in root.rglob("*.json")}
        apply_decisions(root, decisions)
        assert snapshot == {p.name: p.read_bytes() for p in root.rglob("*.json")}

    def test_last_decision_wins(self, tmp_path, demo_samples):
        root, manifest = dataset(tmp_path, demo_samples)
        sid = manifest.samples[0].sample_id
        result = apply_decisions(
            root, [decision(sid, "accept", "t1"), decision(sid, "reject", "t2")]
        )
        assert result.manifest.entry(sid).review_status == "rejected"

    def test_order_insensitive_given_timestamps(self, tmp_path, demo_samples):
        root, _ = dataset(tmp_path, demo_samples)
        sid = load_manifest(root).samples[0].sample_id
        d1, d2 = decision(sid, "accept", "t1"), decision(sid, "reject", "t2")
        a = apply_decisions(root, [d1, d2]).manifest
        b = apply_decisions(root, [d2, d1]).manifest
        assert a == b

    def test_unknown_sample_skipped(self, tmp_path, demo_samples):
        root, _ = dataset(tmp_path, demo_samples)
        result = apply_decisions(root, [decision("ghost", "accept", "t1")])
        assert result.applied == 0
        assert result.skipped == ("ghost",)

    def test_edit_requires_interval(self):
        with pytest.raises(ValueError, match="edited_interval"):
            ReviewDecision(sample_id="x", verdict="edit", reviewer="r", timestamp="t")

    def test_unknown_verdict(self):
        with pytest.raises(ValueError, match="verdict"):
            ReviewDecision(sample_id="x", verdict="maybe", reviewer="r", timestamp="t")

    def test_statuses_partition_manifest(self, tmp_path, demo_samples):
        root, manifest = dataset(tmp_path, demo_samples)
        sid = manifest.samples[0].sample_id
        result = apply_decisions(root, [decision(sid, "accept", "t1")])
        by_status = {"pending": 0, "accepted": 0, "rejected": 0}
        for entry in result.manifest.samples:
            by_status[entry.review_status] += 1
        assert sum(by_status.values()) == len(manifest.samples)


class TestDecisionLog:
    def test_malformed_lines_become_warnings(self, tmp_path):
        log = tmp_path / "decisions.jsonl"
        log.write_text(
            json.dumps({"sample_id": "s1", "verdict": "accept", "timestamp": "t1"})
            + "\nnot json at all\n"
            + json.dumps({"sample_id": "s2", "verdict": "nope", "timestamp": "t2"})
            + "\n"
        )
        decisions, warnings = read_decisions(log)
        assert len(decisions) == 1
        assert len(warnings) == 2

    def test_missing_file_is_empty(self, tmp_path):
        decisions, warnings = read_decisions(tmp_path / "absent.jsonl")
        assert decisions == [] and warnings == []

    def test_last_decisions_tie_breaks_by_position(self):
        d1 = decision("s", "accept", "same")
        d2 = decision("s", "reject", "same")
        assert last_decisions([d1, d2])["s"].verdict == "reject"


class TestStats:
    def manifest_with_counts(self, counts: dict[str, int]) -> Manifest:
        entries = []
        for vid, n in counts.items():
            for i in range(n):
                entries.append(
                    ManifestEntry(
                        sample_id=f"{vid}-s{i}",
                        video_id=vid,
                        query="q",
                        interval=FrameInterval(0, 1),
                        mask_file=f"masks/{vid}-s{i}.rle.json",
                        review_status="accepted",
                    )
                )
        return Manifest("bench", "0.1.0", "1970-01-01T00:00:00Z", tuple(entries))

    def test_paper_counts(self):
        manifest = self.manifest_with_counts({"v1": 15, "v2": 13, "v3": 17, "v4": 7})
        report = stats(manifest)
        assert report.total == 52
        fractions = {vid: row["fraction"] for vid, row in report.per_video.items()}
        assert fractions == {"v1": 28.8, "v2": 25.0, "v3": 32.7, "v4": 13.5}

    def test_single_video(self):
        report = stats(self.manifest_with_counts({"v1": 3}))
        assert report.per_video["v1"]["fraction"] == 100.0

    def test_empty_manifest(self):
        report = stats(Manifest("bench", "0.1.0", "now", ()))
        assert report.total == 0
        assert report.per_video == {}

    def test_rejected_excluded(self):
        manifest = self.manifest_with_counts({"v1": 2})
        rejected = tuple(
            e if i == 0 else ManifestEntry(
                sample_id=e.sample_id,
                video_id=e.video_id,
                query=e.query,
                interval=e.interval,
                mask_file=e.mask_file,
                review_status="rejected",
            )
            for i, e in enumerate(manifest.samples)
        )
        report = stats(Manifest("bench", "0.1.0", "now", rejected))
        assert report.total == 1


class TestRegate:
    def test_gating_invariant_after_edit(self, demo_samples):
        sample = demo_samples[0]
        edited = regate(sample, FrameInterval(2, 5))
        for t, mask in enumerate(edited.gt_masks):
            if 2 <= t < 5:
                assert mask == sample.source_masks[t]
            else:
                assert mask.is_empty()
