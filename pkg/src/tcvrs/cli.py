"""Command-line entry point wiring every pipeline stage.

Exit codes: 0 success, 1 input error, 2 backend/transport error. Every
command embeds its effective configuration into the report it writes, and
identical inputs plus seeds give byte-identical primary outputs.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import benchmark_store as store
from . import eval_harness
from .backends import (
    BackendDescriptor,
    BackendProtocolError,
    BackendSuite,
    BackendTransportError,
    KINDS,
    mock_suite,
)
from .dt_builder import BuildConfig, BuildError, build_with_report
from .dt_model import ParseError, canonical_bytes, load_dt, save_dt
from .query_forge import ForgeConfig, ForgeError, forge_with_report
from .video import SceneScript, SyntheticVideo, load_video, write_frames

EXIT_INPUT = 1
EXIT_BACKEND = 2


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_config_file(path: str | None) -> dict:
    """Config file (JSON object), overridable per flag; env var is the fallback path."""
    candidate = path or os.environ.get("TCVRS_CONFIG")
    if not candidate:
        return {}
    try:
        with open(candidate, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        _fail(EXIT_INPUT, f"config file not found: {candidate}")
    except json.JSONDecodeError as exc:
        _fail(EXIT_INPUT, f"bad config file {candidate}: {exc}")
    if not isinstance(obj, dict):
        _fail(EXIT_INPUT, f"config file {candidate} must hold a JSON object")
    return obj


def _setting(flags: dict, config: dict, key: str, default):
    if flags.get(key) is not None:
        return flags[key]
    if key in config:
        return config[key]
    return default


def _parse_backend_overrides(pairs: tuple[str, ...]) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for pair in pairs:
        if "=" not in pair:
            _fail(EXIT_INPUT, f"--backend expects kind=endpoint, got {pair!r}")
        kind, endpoint = pair.split("=", 1)
        if kind not in KINDS:
            _fail(EXIT_INPUT, f"unknown backend kind {kind!r} (expected one of {KINDS})")
        overrides[kind] = endpoint
    return overrides


def _build_suite(script, seed: int, k_scorers: int, overrides: dict[str, str]) -> BackendSuite:
    """Mock suite over the scene script, with per-kind remote overrides."""
    if script is not None:
        suite = mock_suite(script, seed=seed, k_scorers=k_scorers)
    elif set(overrides) != set(KINDS):
        _fail(EXIT_INPUT, "no scene script: every backend kind must name a remote endpoint")
        return BackendSuite()
    else:
        suite = BackendSuite()
    if not overrides:
        return suite
    from .backends.remote import RemoteBackend

    fields = dict(
        phase_detector=suite.phase_detector,
        segmenter=suite.segmenter,
        tracker=suite.tracker,
        depth=suite.depth,
        semantic=suite.semantic,
        action=suite.action,
        scorers=suite.scorers,
        query_llm=suite.query_llm,
        descriptors=suite.descriptors,
    )
    for kind, endpoint in overrides.items():
        if kind == "scorer":
            fields["scorers"] = tuple(
                RemoteBackend(
                    BackendDescriptor(kind="scorer", endpoint=endpoint, name=f"scorer-{k}")
                )
                for k in range(k_scorers)
            )
        else:
            fields[kind] = RemoteBackend(BackendDescriptor(kind=kind, endpoint=endpoint, name=kind))
    return BackendSuite(**fields)


@click.group()
def main() -> None:
    """Forge and evaluate temporally-constrained video reasoning-segmentation benchmarks."""


@main.command("build-dt")
@click.option("--video", "video_path", required=True, type=str, help="Scene script .json or PNG frame dir.")
@click.option("--out", "out_path", required=True, type=str)
@click.option("--t-s", "t_s", type=int, default=None, help="Key-frame sampling interval.")
@click.option("--seed", type=int, default=None)
@click.option("--backend", "backend_pairs", multiple=True, help="kind=endpoint remote override.")
@click.option("--workers", type=int, default=None)
@click.option("--retry-limit", type=int, default=None)
@click.option("--no-depth", is_flag=True, default=False)
@click.option("--no-features", is_flag=True, default=False)
@click.option("--no-actions", is_flag=True, default=False)
@click.option("--config", "config_path", type=str, default=None)
def build_dt_cmd(video_path, out_path, t_s, seed, backend_pairs, workers, retry_limit,
                 no_depth, no_features, no_actions, config_path) -> None:
    """Build a validated digital twin from a video plus the backend suite."""
    file_config = _load_config_file(config_path)
    flags = {"t_s": t_s, "seed": seed, "workers": workers, "retry_limit": retry_limit}
    seed = int(_setting(flags, file_config, "seed", 0))
    overrides = _parse_backend_overrides(backend_pairs)
    overrides.update(
        {k: v for k, v in file_config.get("backends", {}).items() if k not in overrides}
    )
    if not Path(video_path).exists():
        _fail(EXIT_INPUT, f"video input not found: {video_path}")
    try:
        video = load_video(video_path)
    except (ParseError, ValueError) as exc:
        _fail(EXIT_INPUT, f"invalid video input: {exc}")
    script = video.script if isinstance(video, SyntheticVideo) else None
    suite = _build_suite(script, seed, k_scorers=3, overrides=overrides)
    config = BuildConfig(
        t_s=int(_setting(flags, file_config, "t_s", 3)),
        retry_limit=int(_setting(flags, file_config, "retry_limit", 2)),
        parallel_workers=int(_setting(flags, file_config, "workers", 1)),
        enable_depth=not no_depth,
        enable_features=not no_features,
        enable_actions=not no_actions,
    )
    try:
        dt, report = build_with_report(video, suite, config)
    except BuildError as exc:
        report_path = Path(out_path).with_suffix(".build_report.json")
        exc.report["aborted"] = str(exc)
        report_path.write_text(json.dumps(exc.report, indent=2, sort_keys=True))
        _fail(EXIT_BACKEND, f"build aborted: {exc} (report at {report_path})")
    except (BackendProtocolError, BackendTransportError) as exc:
        _fail(EXIT_BACKEND, f"backend failure: {exc}")
    save_dt(dt, out_path)
    report["seed"] = seed
    report_path = Path(out_path).with_suffix(".build_report.json")
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True))
    click.echo(f"wrote {out_path} ({dt.frame_count} frames, {len(dt.phases)} phases)")


@main.command("forge")
@click.option("--dt", "dt_path", required=True, type=str)
@click.option("--out", "out_dir", required=True, type=str)
@click.option("--theta-vote", type=float, default=None)
@click.option("--theta-conf", type=float, default=None)
@click.option("--mode", type=click.Choice(["paper", "normalized"]), default=None)
@click.option("--k", "k_scorers", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--scene", "scene_path", type=str, default=None,
              help="Scene script backing the mock scorers/LLM and frame previews.")
@click.option("--backend", "backend_pairs", multiple=True)
@click.option("--dataset-name", type=str, default="tcvrs-bench")
@click.option("--config", "config_path", type=str, default=None)
def forge_cmd(dt_path, out_dir, theta_vote, theta_conf, mode, k_scorers, seed, scene_path,
              backend_pairs, dataset_name, config_path) -> None:
    """Forge pending benchmark samples from a digital twin."""
    file_config = _load_config_file(config_path)
    flags = {
        "theta_vote": theta_vote,
        "theta_conf": theta_conf,
        "mode": mode,
        "k": k_scorers,
        "seed": seed,
    }
    seed = int(_setting(flags, file_config, "seed", 0))
    k_scorers = int(_setting(flags, file_config, "k", 3))
    try:
        dt = load_dt(dt_path)
    except FileNotFoundError:
        _fail(EXIT_INPUT, f"twin file not found: {dt_path}")
    except ParseError as exc:
        _fail(EXIT_INPUT, f"corrupt twin file: {exc}")
    script = None
    if scene_path:
        try:
            script = SceneScript.load(scene_path)
        except (ParseError, FileNotFoundError, ValueError) as exc:
            _fail(EXIT_INPUT, f"bad scene script: {exc}")
    overrides = _parse_backend_overrides(backend_pairs)
    if script is None and not overrides:
        _fail(EXIT_INPUT, "forge needs --scene (mock backends) or --backend overrides")
    suite = _build_suite(script, seed, k_scorers=k_scorers, overrides=overrides)
    config = ForgeConfig(
        theta_vote=float(_setting(flags, file_config, "theta_vote", 0.5)),
        theta_conf=float(_setting(flags, file_config, "theta_conf", 0.5)),
        aggregation_mode=str(_setting(flags, file_config, "mode", "normalized")),
        K=k_scorers,
    )
    try:
        samples, report = forge_with_report(dt, suite, config)
    except ForgeError as exc:
        _fail(EXIT_BACKEND, f"forge aborted: {exc}")
    except BackendTransportError as exc:
        _fail(EXIT_BACKEND, f"backend unreachable: {exc}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    store.write_samples(samples, out, dataset_name=dataset_name)
    report["seed"] = seed
    (out / "forge_report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    if script is not None:
        dts_dir = out / "dts"
        dts_dir.mkdir(exist_ok=True)
        save_dt(dt, dts_dir / f"{dt.video_id}.json")
        write_frames(SyntheticVideo(script), out / "frames" / dt.video_id)
    click.echo(f"forged {len(samples)} samples into {out_dir}")


@main.group("review")
def review_group() -> None:
    """Apply or collect human review decisions."""


@review_group.command("apply")
@click.option("--dataset", "dataset_dir", required=True, type=str)
@click.option("--decisions", "decisions_path", required=True, type=str)
def review_apply_cmd(dataset_dir, decisions_path) -> None:
    """Replay a decisions JSONL file onto the dataset manifest."""
    if not Path(decisions_path).exists():
        _fail(EXIT_INPUT, f"decisions file not found: {decisions_path}")
    try:
        decisions, warnings = store.read_decisions(decisions_path)
    except OSError as exc:
        _fail(EXIT_INPUT, f"cannot read decisions: {exc}")
    for warning in warnings:
        click.echo(f"warning: skipped malformed decision ({warning})", err=True)
    try:
        result = store.apply_decisions(dataset_dir, decisions)
    except FileNotFoundError:
        _fail(EXIT_INPUT, f"no manifest under {dataset_dir}")
    except ParseError as exc:
        _fail(EXIT_INPUT, str(exc))
    for sid in result.skipped:
        click.echo(f"warning: decision for unknown sample {sid!r} skipped", err=True)
    click.echo(f"applied {result.applied} decisions")
    if decisions and result.applied == 0:
        sys.exit(EXIT_INPUT)


@review_group.command("serve")
@click.option("--dataset", "dataset_dir", required=True, type=str)
@click.option("--port", type=int, default=8000)
@click.option("--host", type=str, default="127.0.0.1")
@click.option("--ui", "ui_dir", type=str, default=None,
              help="Static frontend directory to mount at / (e.g. frontend built assets).")
def review_serve_cmd(dataset_dir, port, host, ui_dir) -> None:
    """Serve the review API (and the UI if frontend assets are given)."""
    import uvicorn

    from .review_service import create_app

    if not (Path(dataset_dir) / store.MANIFEST_NAME).exists():
        _fail(EXIT_INPUT, f"no manifest under {dataset_dir}")
    if ui_dir is not None and not Path(ui_dir).is_dir():
        _fail(EXIT_INPUT, f"UI directory not found: {ui_dir}")
    uvicorn.run(
        create_app(dataset_dir, ui_dir=ui_dir), host=host, port=port, log_level="warning"
    )


@main.command("export")
@click.option("--dataset", "dataset_dir", required=True, type=str)
@click.option("--out", "out_dir", required=True, type=str)
def export_cmd(dataset_dir, out_dir) -> None:
    """Export accepted samples into a standalone benchmark directory."""
    try:
        manifest = store.export(dataset_dir, out_dir)
    except FileNotFoundError:
        _fail(EXIT_INPUT, f"no manifest under {dataset_dir}")
    except ParseError as exc:
        _fail(EXIT_INPUT, str(exc))
    click.echo(f"exported {len(manifest.samples)} accepted samples to {out_dir}")


@main.command("stats")
@click.option("--dataset", "dataset_dir", required=True, type=str)
def stats_cmd(dataset_dir) -> None:
    """Per-video sample counts and fractions."""
    try:
        manifest = store.load_manifest(dataset_dir)
    except FileNotFoundError:
        _fail(EXIT_INPUT, f"no manifest under {dataset_dir}")
    except ParseError as exc:
        _fail(EXIT_INPUT, str(exc))
    report = store.stats(manifest)
    for video_id, row in report.per_video.items():
        click.echo(f"{video_id}\t{row['count']}\t{row['fraction']}%")
    click.echo(f"total\t{report.total}")


@main.command("eval")
@click.option("--dataset", "dataset_dir", required=True, type=str)
@click.option("--pred", "pred_dir", required=True, type=str)
@click.option("--out", "out_path", required=True, type=str)
@click.option("--csv", "csv_path", type=str, default=None, help="Also write per-sample rows as CSV.")
def eval_cmd(dataset_dir, pred_dir, out_path, csv_path) -> None:
    """Score a prediction directory against the accepted samples."""
    try:
        manifest = store.load_manifest(dataset_dir)
    except FileNotFoundError:
        _fail(EXIT_INPUT, f"no manifest under {dataset_dir}")
    except ParseError as exc:
        _fail(EXIT_INPUT, str(exc))
    accepted = [e for e in manifest.samples if e.review_status == "accepted"]
    samples = [store.load_sample(dataset_dir, e) for e in accepted]
    if not Path(pred_dir).is_dir():
        _fail(EXIT_INPUT, f"prediction directory not found: {pred_dir}")
    try:
        predictions = eval_harness.load_predictions(pred_dir)
    except ParseError as exc:
        _fail(EXIT_INPUT, str(exc))
    report = eval_harness.evaluate_dataset(samples, predictions)
    for sid in report.missing_predictions:
        click.echo(f"warning: no prediction for {sid!r}, scored as empty", err=True)
    for sid in report.unknown_predictions:
        click.echo(f"warning: prediction {sid!r} matches no accepted sample", err=True)
    Path(out_path).write_bytes(canonical_bytes(report.to_json()))
    if csv_path:
        import csv as csv_mod

        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv_mod.writer(fh)
            writer.writerow(
                ["sample_id", "j_gated", "t_iou", "leakage", "tc_score", "frame_count", "active_count"]
            )
            for sid in sorted(report.per_sample):
                row = report.per_sample[sid]
                writer.writerow(
                    [sid, row.j_gated, row.t_iou, row.leakage, row.tc_score,
                     row.frame_count, row.active_count]
                )
    means = report.means
    click.echo(
        "means: "
        f"J_gated={means['j_gated']:.4f} tIoU={means['t_iou']:.4f} "
        f"leakage={means['leakage']:.4f} tc={means['tc_score']:.4f}"
    )


@main.group("mock-backend")
def mock_backend_group() -> None:
    """Scene-script mock model server."""


@mock_backend_group.command("serve")
@click.option("--scene", "scene_path", required=True, type=str)
@click.option("--port", type=int, default=8100)
@click.option("--host", type=str, default="127.0.0.1")
@click.option("--seed", type=int, default=0)
def mock_backend_serve_cmd(scene_path, port, host, seed) -> None:
    """Serve the backend wire protocol from a scene script."""
    import uvicorn

    from .backends.server import create_backend_app

    try:
        script = SceneScript.load(scene_path)
    except (ParseError, FileNotFoundError, ValueError) as exc:
        _fail(EXIT_INPUT, f"bad scene script: {exc}")
    uvicorn.run(create_backend_app(script, seed=seed), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
