"""Command line interface: ground, eval, validate.

Exit codes: 0 success, 1 command-resolution failure (error JSON is
still written), 2 I/O or schema problems.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .bundle import decode_bundle, validate_bundle_file
from .codec import dumps_canonical
from .errors import DecodeError, UncomError
from .pipeline import PipelineConfig, ground, trace_to_jsonable
from .providers import BRIDGE_CMD_ENV, BridgeClient, FixtureProvider

EXIT_OK = 0
EXIT_COMMAND_ERROR = 1
EXIT_IO_ERROR = 2


def _fail_io(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(EXIT_IO_ERROR)


def _load_config(config_path: str | None, overrides: tuple[str, ...]) -> PipelineConfig:
    config = PipelineConfig()
    if config_path:
        try:
            raw = json.loads(Path(config_path).read_text())
            config = PipelineConfig.from_jsonable(raw)
        except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
            _fail_io(f"bad config {config_path}: {exc}")
    if overrides:
        try:
            config = config.with_overrides(overrides)
        except ValueError as exc:
            _fail_io(str(exc))
    return config


def _write(path: Path, data: bytes) -> None:
    path.write_bytes(data)
    click.echo(f"wrote {path}")


@click.group()
def main() -> None:
    """Multimodal command grounding over recorded perception bundles."""


@main.command("ground")
@click.option("--bundle", "bundle_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--set", "overrides", multiple=True, help="override config key=value")
@click.option(
    "--provider",
    "provider_kind",
    type=click.Choice(["auto", "fixture", "bridge"]),
    default="auto",
    help=f"auto uses the bridge when {BRIDGE_CMD_ENV} is set",
)
@click.option("--render/--no-render", default=True, help="write overlay.png")
def ground_cmd(bundle_path, config_path, out_dir, overrides, provider_kind, render):
    """Ground one bundle and write command, trace and annotation files."""
    config = _load_config(config_path, overrides)
    try:
        bundle = decode_bundle(Path(bundle_path).read_bytes())
    except OSError as exc:
        _fail_io(f"cannot read bundle: {exc}")
    except DecodeError as exc:
        _fail_io(f"invalid bundle: {exc.code}: {exc}")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    use_bridge = provider_kind == "bridge" or (
        provider_kind == "auto" and os.environ.get(BRIDGE_CMD_ENV)
    )
    bridge = None
    try:
        if use_bridge:
            bridge = BridgeClient()
            provider = bridge
        else:
            provider = FixtureProvider(bundle)
        outcome = ground(bundle, provider, config)
    except UncomError as exc:
        payload = dumps_canonical({"schema": "uncom/1", **exc.to_jsonable()}) + b"\n"
        _write(out / "error.json", payload)
        click.echo(f"grounding failed: {exc.message}", err=True)
        sys.exit(EXIT_COMMAND_ERROR)
    finally:
        if bridge is not None:
            bridge.close()

    from .annotate import annotation_jsonable, render_annotation
    from .codec import encode_json

    annotation = annotation_jsonable(outcome)
    _write(out / "grounded.json", encode_json(outcome.command) + b"\n")
    _write(
        out / "trace.json",
        dumps_canonical(trace_to_jsonable(outcome.trace, outcome.flags)) + b"\n",
    )
    _write(out / "annotation.json", dumps_canonical(annotation) + b"\n")
    if render:
        render_annotation(annotation, str(out / "overlay.png"))
        click.echo(f"wrote {out / 'overlay.png'}")
    sys.exit(EXIT_OK)


@main.command("eval")
@click.option("--dataset", "dataset_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--set", "overrides", multiple=True, help="override config key=value")
@click.option("--render/--no-render", default=True, help="write accuracy figure")
def eval_cmd(dataset_dir, config_path, report_path, overrides, render):
    """Evaluate every bundle in a dataset directory against gold files."""
    from .annotate import render_eval_report
    from .evalharness import evaluate_dataset, report_csv, report_table

    config = _load_config(config_path, overrides)
    dataset = Path(dataset_dir)
    if not dataset.is_dir():
        _fail_io(f"dataset directory not found: {dataset}")

    report = evaluate_dataset(dataset, config)
    table = report_table(report)
    click.echo(table, nl=False)

    out = Path(report_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write(out, dumps_canonical(report) + b"\n")
    stem = out.with_suffix("") if out.suffix == ".json" else out
    Path(f"{stem}.txt").write_text(table)
    click.echo(f"wrote {stem}.txt")
    Path(f"{stem}.csv").write_text(report_csv(report))
    click.echo(f"wrote {stem}.csv")
    if render:
        render_eval_report(report, f"{stem}.png")
        click.echo(f"wrote {stem}.png")
    sys.exit(EXIT_OK)


@main.command("validate")
@click.option("--bundle", "bundle_path", required=True, type=click.Path())
def validate_cmd(bundle_path):
    """Check a bundle file against the schema and its invariants."""
    violations = validate_bundle_file(bundle_path)
    if violations:
        for v in violations:
            click.echo(v, err=True)
        sys.exit(EXIT_IO_ERROR)
    click.echo("bundle is valid")
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
