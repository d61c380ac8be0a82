"""HTTP review service for the manual-verification stage.

The append-only decision log is the single source of truth: every GET
recomputes its view from (manifest, decisions, twin files) on disk, so a
restarted service replays to identical responses. Mutations serialize
through one append lock; reads never block.
"""

from __future__ import annotations

import threading
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import benchmark_store as store
from .dt_model import FrameInterval, PhaseSegment, load_dt, save_dt, validate
from .query_forge import BenchmarkSample

DTS_DIR = "dts"
FRAMES_DIR = "frames"
STATUSES = ("pending", "accepted", "rejected")


class DecisionBody(BaseModel):
    verdict: str
    reviewer: str = "anonymous"
    edited_interval: Optional[list[int]] = None


class PhaseEdit(BaseModel):
    phase_id: str
    interval: Optional[list[int]] = None
    label: Optional[str] = None
    description: Optional[str] = None


class PhasePatch(BaseModel):
    phases: list[PhaseEdit]


def _parse_interval(raw: list[int], frame_count: int) -> FrameInterval:
    if len(raw) != 2:
        raise HTTPException(422, detail="interval must be [start, end]")
    try:
        interval = FrameInterval(int(raw[0]), int(raw[1]))
    except (TypeError, ValueError) as exc:
        raise HTTPException(422, detail=str(exc)) from exc
    if interval.end > frame_count:
        raise HTTPException(422, detail=f"interval end {interval.end} > frame count {frame_count}")
    return interval


class ReviewState:
    """Disk-backed view; every accessor reloads so state is a pure function
    of (manifest, decision log, twin files)."""

    def __init__(self, root) -> None:
        self.root = Path(root)
        self.lock = threading.Lock()
        self._seq = 0

    def manifest(self) -> store.Manifest:
        return store.load_manifest(self.root)

    def decisions(self) -> list[store.ReviewDecision]:
        decisions, _ = store.read_decisions(self.root / store.DECISIONS_NAME)
        return decisions

    def effective_entries(self) -> list[dict]:
        """Manifest entries with statuses/intervals after replaying the log."""
        manifest = self.manifest()
        last = store.last_decisions(self.decisions())
        out = []
        for entry in manifest.samples:
            status = entry.review_status
            interval = entry.interval
            decision = last.get(entry.sample_id)
            if decision is not None:
                if decision.verdict == "accept":
                    status = "accepted"
                elif decision.verdict == "reject":
                    status = "rejected"
                else:
                    status = "accepted"
                    interval = decision.edited_interval
            out.append(
                {
                    "entry": entry,
                    "status": status,
                    "interval": interval,
                }
            )
        return out

    def dt_files(self) -> dict[str, Path]:
        dts = self.root / DTS_DIR
        if not dts.is_dir():
            return {}
        return {p.stem: p for p in sorted(dts.glob("*.json"))}

    def phase_interval(self, video_id: str, phase_id: str) -> Optional[FrameInterval]:
        path = self.dt_files().get(video_id)
        if path is None:
            return None
        dt = load_dt(path)
        phase = dt.phase_by_id(phase_id)
        return None if phase is None else phase.interval

    def sample_view(self, item: dict) -> dict:
        entry = item["entry"]
        sample = store.load_sample(self.root, entry)
        current = self.phase_interval(entry.video_id, sample.phase_id)
        stale = (
            item["status"] == "pending"
            and current is not None
            and current != item["interval"]
        )
        return {
            "sample_id": entry.sample_id,
            "video_id": entry.video_id,
            "query": entry.query,
            "phase": {"phase_id": sample.phase_id, "label": sample.phase_label},
            "interval": item["interval"].to_json(),
            "status": item["status"],
            "stale": stale,
        }

    def append(self, decision: store.ReviewDecision) -> None:
        with self.lock:
            store.append_decision(self.root, decision)

    def next_timestamp(self) -> str:
        # Wall clock plus a monotone sequence so per-sample order is total.
        with self.lock:
            self._seq += 1
            now = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%f")
            return f"{now}-{self._seq:06d}"


def create_app(dataset_root, ui_dir=None) -> FastAPI:
    state = ReviewState(dataset_root)
    app = FastAPI(title="tcvrs review service")
    app.state.review = state

    frames_dir = state.root / FRAMES_DIR
    if frames_dir.is_dir():
        app.mount("/frames", StaticFiles(directory=frames_dir), name="frames")

    @app.exception_handler(HTTPException)
    async def _err(request, exc: HTTPException):
        return JSONResponse({"error": str(exc.detail)}, status_code=exc.status_code)

    @app.get("/v1/videos")
    def list_videos() -> list[dict]:
        out = []
        for video_id, path in state.dt_files().items():
            dt = load_dt(path)
            out.append(
                {
                    "video_id": video_id,
                    "frame_count": dt.frame_count,
                    "frame_dims": list(dt.frame_dims),
                }
            )
        return out

    @app.get("/v1/videos/{video_id}/phases")
    def get_phases(video_id: str) -> list[dict]:
        path = state.dt_files().get(video_id)
        if path is None:
            raise HTTPException(404, detail=f"unknown video {video_id!r}")
        return [p.to_json() for p in load_dt(path).phases]

    @app.patch("/v1/videos/{video_id}/phases")
    def patch_phases(video_id: str, patch: PhasePatch) -> dict:
        path = state.dt_files().get(video_id)
        if path is None:
            raise HTTPException(404, detail=f"unknown video {video_id!r}")
        dt = load_dt(path)
        by_id = {p.phase_id: p for p in dt.phases}
        for edit in patch.phases:
            current = by_id.get(edit.phase_id)
            if current is None:
                raise HTTPException(404, detail=f"unknown phase {edit.phase_id!r}")
            interval = (
                _parse_interval(edit.interval, dt.frame_count)
                if edit.interval is not None
                else current.interval
            )
            by_id[edit.phase_id] = PhaseSegment(
                phase_id=current.phase_id,
                label=edit.label if edit.label is not None else current.label,
                description=edit.description
                if edit.description is not None
                else current.description,
                interval=interval,
                extra=current.extra,
            )
        updated = replace(dt, phases=tuple(by_id[p.phase_id] for p in dt.phases))
        violations = [v for v in validate(updated) if v.startswith("phases")]
        if violations:
            raise HTTPException(422, detail="; ".join(violations))
        save_dt(updated, path)
        stale = [
            view["sample_id"]
            for view in (state.sample_view(item) for item in state.effective_entries())
            if view["stale"] and view["video_id"] == video_id
        ]
        return {"phases": [p.to_json() for p in updated.phases], "stale_samples": stale}

    @app.get("/v1/samples")
    def list_samples(status: Optional[str] = Query(default=None)) -> list[dict]:
        if status is not None and status not in STATUSES:
            raise HTTPException(422, detail=f"unknown status {status!r}")
        views = [state.sample_view(item) for item in state.effective_entries()]
        if status is not None:
            views = [v for v in views if v["status"] == status]
        return views

    def _find_item(sample_id: str) -> dict:
        for item in state.effective_entries():
            if item["entry"].sample_id == sample_id:
                return item
        raise HTTPException(404, detail=f"unknown sample {sample_id!r}")

    @app.get("/v1/samples/{sample_id}")
    def get_sample(sample_id: str) -> dict:
        item = _find_item(sample_id)
        entry = item["entry"]
        sample = store.load_sample(state.root, entry)
        effective = store.regate(sample, item["interval"])
        view = state.sample_view(item)
        view.update(
            {
                "frame_count": sample.frame_count,
                "frame_dims": list(sample.frame_dims),
                "frames": [
                    {"index": t, "url": f"/frames/{entry.video_id}/{t}.png"}
                    for t in range(sample.frame_count)
                ],
                "overlays": [m.to_json() for m in effective.gt_masks],
                "provenance": sample.provenance,
            }
        )
        return view

    @app.post("/v1/samples/{sample_id}/decision")
    def post_decision(sample_id: str, body: DecisionBody) -> dict:
        item = _find_item(sample_id)
        if body.verdict not in ("accept", "reject", "edit"):
            raise HTTPException(422, detail=f"unknown verdict {body.verdict!r}")
        interval = None
        if body.verdict == "edit":
            if body.edited_interval is None:
                raise HTTPException(422, detail="edit requires edited_interval")
            sample = store.load_sample(state.root, item["entry"])
            interval = _parse_interval(body.edited_interval, sample.frame_count)
        decision = store.ReviewDecision(
            sample_id=sample_id,
            verdict=body.verdict,
            reviewer=body.reviewer,
            timestamp=state.next_timestamp(),
            edited_interval=interval,
        )
        state.append(decision)
        refreshed = state.sample_view(_find_item(sample_id))
        return {"sample_id": sample_id, "status": refreshed["status"]}

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
