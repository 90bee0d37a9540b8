"""Bridge CLI: serve the protocol on stdio, or record a video to a bundle."""

from __future__ import annotations

import json
import sys

import click

from .backends import BackendError, make_backend
from .protocol import BridgeServer, load_frames_index
from .record import RecordError, record


@click.group()
def main() -> None:
    """Live perception bridge for the grounding engine."""


@main.command("serve")
@click.option("--backend", "backend_kind", type=click.Choice(["synthetic", "live"]), default="synthetic")
@click.option("--script", type=click.Path(), default=None, help="scene script for the synthetic backend")
@click.option("--frames", "frames_dir", type=click.Path(), default=None, help="directory with frames.json and images")
@click.option("--audio", "audio_path", type=click.Path(), default=None)
@click.option("--record-log", type=click.Path(), default=None, help="append request/reply pairs as JSONL")
@click.option("--config", "config_path", type=click.Path(), default=None, help="live backend model overrides (JSON)")
def serve_cmd(backend_kind, script, frames_dir, audio_path, record_log, config_path):
    """Answer NDJSON requests on stdin until EOF."""
    config = json.loads(open(config_path).read()) if config_path else None
    try:
        backend = make_backend(backend_kind, script, config)
    except BackendError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    server = BridgeServer(
        backend,
        frames_index=load_frames_index(frames_dir),
        audio_path=audio_path,
        record_log=record_log,
    )
    server.serve()


@main.command("record")
@click.option("--video", "video_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--backend", "backend_kind", type=click.Choice(["synthetic", "live"]), default="live")
@click.option("--script", type=click.Path(), default=None)
@click.option("--uncom-cmd", default="uncom", help="grounding CLI used for query discovery")
def record_cmd(video_path, out_path, backend_kind, script, uncom_cmd):
    """Convert an mp4 command clip into a replayable bundle."""
    try:
        path = record(video_path, out_path, backend_kind, script, uncom_cmd)
    except (RecordError, BackendError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
