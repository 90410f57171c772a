"""Command-line entry points.

    engine serve        run the live service (HTTP + WebSocket + TCP)
    engine fit-target   calibrate a target profile from a landmark clip
    engine reenact      render a clip offline, optionally swapped to a profile
    engine bench        measure end-to-end pipeline throughput
    engine make-model   generate and save a synthetic morphable model
    engine make-stream  generate a synthetic landmark clip with ground truth

Exit codes: 0 success, 2 usage error, 3 bad input data or files,
4 numerical or internal failure.  Set ENGINE_LOG to change verbosity.
"""

from __future__ import annotations

import base64
import json
import logging
import os
import platform
import sys

import click

from .conditioning import RasterSettings, load_png, render_conditioning, export_sequence
from .errors import DataError, MimicError
from .model import make_synthetic_model, nmfc_palette, save_model
from .raster import warm_up
from .reenact import SwapPolicy, build_target_profile, load_profile, save_profile
from .synthetic import MotionScript, generate_stream
from .tracking import SolverConfig, read_landmark_stream, track_clip, write_landmark_stream

log = logging.getLogger(__name__)


def _solver_config(path: str | None) -> SolverConfig:
    if path is None:
        return SolverConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        return SolverConfig.from_dict(data)
    except OSError as exc:
        raise DataError(f"cannot read config: {exc}") from exc
    except (json.JSONDecodeError, TypeError) as exc:
        raise DataError(f"bad config file {path}: {exc}") from exc


@click.group()
def cli():
    """Real-time face reenactment engine."""


@cli.command()
@click.option("--model", default=None, help="Default model: directory or synthetic[:seed].")
@click.option("--models-dir", default=None, help="Directory of additional model directories.")
@click.option("--profiles-dir", default=None, help="Directory of profile JSON files (default profiles).")
@click.option("--host", default=None, help="Bind address (default 127.0.0.1).")
@click.option("--port", type=int, default=None, help="TCP wire port (default 9100).")
@click.option("--http-port", type=int, default=None, help="HTTP/WebSocket port (default 8080).")
@click.option("--width", type=int, default=None, help="Render width (default 256).")
@click.option("--height", type=int, default=None, help="Render height (default 256).")
@click.option("--neural-endpoint", default=None, help="host:port of a neural renderer service.")
@click.option("--config", "config_path", default=None, help="JSON file with EngineConfig fields.")
def serve(model, models_dir, profiles_dir, host, port, http_port, width, height, neural_endpoint, config_path):
    """Run the reenactment service."""
    from .engine.service import EngineConfig, run_service

    base = {}
    if config_path is not None:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                base = json.load(fh)
        except OSError as exc:
            raise DataError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"bad config file {config_path}: {exc}") from exc
    try:
        config = EngineConfig.from_dict(base)
    except TypeError as exc:
        raise DataError(f"bad config file {config_path}: {exc}") from exc
    for name, value in (
        ("model", model),
        ("models_dir", models_dir),
        ("profiles_dir", profiles_dir),
        ("host", host),
        ("port", port),
        ("http_port", http_port),
        ("width", width),
        ("height", height),
        ("neural_endpoint", neural_endpoint),
    ):
        if value is not None:
            setattr(config, name, value)
    run_service(config)


def _load_real_images(images_dir: str, expected: int) -> list:
    paths = sorted(
        os.path.join(images_dir, p) for p in os.listdir(images_dir) if p.lower().endswith(".png")
    )
    if len(paths) != expected:
        raise DataError(f"{images_dir} holds {len(paths)} PNG files, clip has {expected} frames")
    return [load_png(p) for p in paths]


@cli.command("fit-target")
@click.option("--model", default="synthetic", show_default=True)
@click.option("--landmarks", "landmarks_path", required=True, help="Landmark clip (JSON lines).")
@click.option("--out", "out_path", required=True, help="Where to write the profile JSON.")
@click.option("--label", default="target", show_default=True, help="Profile label.")
@click.option("--export", "export_dir", default=None, help="Also export the conditioning dataset here.")
@click.option("--images", "images_dir", default=None, help="Directory of real frames (PNG) for the dataset.")
@click.option("--width", type=int, default=256, show_default=True)
@click.option("--height", type=int, default=256, show_default=True)
@click.option("--config", "config_path", default=None, help="Solver config JSON.")
def fit_target(model, landmarks_path, out_path, label, export_dir, images_dir, width, height, config_path):
    """Calibrate a target profile from a landmark clip."""
    from .engine.service import resolve_model

    if images_dir is not None and export_dir is None:
        raise DataError("--images only makes sense together with --export")
    cfg = _solver_config(config_path)
    face = resolve_model(model)
    frames = read_landmark_stream(landmarks_path)
    if not frames:
        raise DataError(f"landmark stream {landmarks_path} is empty")
    warm_up()
    _, tracked, _ = track_clip(face, frames, cfg)
    profile = build_target_profile(face, tracked, label=label)
    save_profile(profile, out_path)
    click.echo(f"profile '{label}' from {len(tracked)} frames -> {out_path}")
    if export_dir is not None:
        settings = RasterSettings(width=width, height=height)
        palette = nmfc_palette(face)
        reals = _load_real_images(images_dir, len(tracked)) if images_dir is not None else [None] * len(tracked)
        pairs = [
            (render_conditioning(face, palette, tf, settings), real)
            for tf, real in zip(tracked, reals)
        ]
        manifest = export_sequence(export_dir, pairs, profile_label=label, settings=settings)
        click.echo(f"{len(pairs)} frames -> {manifest}")


@cli.command()
@click.option("--model", default="synthetic", show_default=True)
@click.option("--landmarks", "landmarks_path", required=True, help="Source landmark clip (JSON lines).")
@click.option("--out", "out_dir", required=True, help="Output directory for the PNG sequence.")
@click.option("--profile", "profile_path", default=None, help="Target profile JSON; omit to render the source itself.")
@click.option("--gain", type=float, default=1.0, show_default=True, help="Expression gain.")
@click.option("--retarget/--no-retarget", default=True, show_default=True, help="Retarget pose into the target's framing.")
@click.option("--clamp/--no-clamp", default=True, show_default=True, help="Clamp expression to the target's range.")
@click.option("--gaze/--no-gaze", default=True, show_default=True, help="Transfer eye gaze.")
@click.option("--neural-endpoint", default=None, help="host:port of a neural renderer; writes output/ frames.")
@click.option("--width", type=int, default=256, show_default=True)
@click.option("--height", type=int, default=256, show_default=True)
@click.option("--config", "config_path", default=None, help="Solver config JSON.")
def reenact(model, landmarks_path, out_dir, profile_path, gain, retarget, clamp, gaze, neural_endpoint, width, height, config_path):
    """Track a clip and export its conditioning sequence."""
    from .engine.service import resolve_model
    from .reenact import swap_identity

    cfg = _solver_config(config_path)
    policy = SwapPolicy(
        retarget_pose=retarget, expression_gain=gain, transfer_gaze=gaze, clamp_expression=clamp
    )
    policy.validate()
    face = resolve_model(model)
    settings = RasterSettings(width=width, height=height)
    frames = read_landmark_stream(landmarks_path)
    if not frames:
        raise DataError(f"landmark stream {landmarks_path} is empty")
    profile = None
    if profile_path is not None:
        profile = load_profile(profile_path)
        profile.check_model(face)
    warm_up()
    _, tracked, stats = track_clip(face, frames, cfg)
    palette = nmfc_palette(face)
    rendered = []
    for tf in tracked:
        out = swap_identity(tf, profile, policy, stats) if profile is not None else tf
        rendered.append(render_conditioning(face, palette, out, settings))
    manifest = export_sequence(
        out_dir,
        [(c, None) for c in rendered],
        profile_label=profile.label if profile is not None else "",
        settings=settings,
    )
    click.echo(f"{len(rendered)} frames -> {manifest}")
    if neural_endpoint is not None:
        _render_neural(rendered, neural_endpoint, out_dir)


def _render_neural(rendered, endpoint: str, out_dir: str) -> None:
    from .engine.neural import NeuralClient
    from .engine.protocol import FrameMsg
    from .engine.session import encode_png_bytes

    client = NeuralClient(endpoint)
    output_dir = os.path.join(out_dir, "output")
    os.makedirs(output_dir, exist_ok=True)
    try:
        for i, cond in enumerate(rendered):
            request = FrameMsg(
                t=cond.t,
                nmfc_png=base64.b64encode(encode_png_bytes(cond.nmfc)).decode("ascii"),
                gaze_png=base64.b64encode(encode_png_bytes(cond.gaze)).decode("ascii"),
                mouth_roi=list(cond.mouth_box),
                latency_ms=0.0,
            )
            reply = client.render(request)
            with open(os.path.join(output_dir, "%06d.png" % i), "wb") as fh:
                fh.write(base64.b64decode(reply.output_png))
    finally:
        client.close()
    click.echo(f"{len(rendered)} synthesized frames -> {output_dir}")


@cli.command()
@click.option("--model", default="synthetic", show_default=True)
@click.option("--frames", type=int, default=200, show_default=True, help="Timed frames.")
@click.option("--width", type=int, default=256, show_default=True)
@click.option("--height", type=int, default=256, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", default=None, help="Also write the report JSON here.")
def bench(model, frames, width, height, seed, out_path):
    """Measure pipeline throughput on a synthetic stream."""
    from .engine.service import resolve_model
    from .engine.session import PerfAccumulator, Pipeline

    face = resolve_model(model)
    cfg = SolverConfig()
    settings = RasterSettings(width=width, height=height)
    script = MotionScript(
        seed=seed,
        n_frames=cfg.calibration_frames + 1 + frames,
        image_size=(width, height),
        noise_sigma=0.5,
    )
    stream, _ = generate_stream(face, script)
    warm_up()
    _, tracked, _ = track_clip(face, stream[: cfg.calibration_frames], cfg)
    profile = build_target_profile(face, tracked, label="bench-self")
    pipeline = Pipeline(
        face,
        cfg=cfg,
        settings=settings,
        profile=profile,
        policy=SwapPolicy(),
        identity=profile.identity,
        source_stats=profile.pose_stats,
    )
    pipeline.process(stream[cfg.calibration_frames])  # warm caches; not timed
    acc = PerfAccumulator()
    for lf in stream[cfg.calibration_frames + 1 :]:
        result = pipeline.process(lf)
        acc.add(result.timings, result.output.stale)
    report = acc.report()
    report["machine"] = {
        "platform": platform.platform(),
        "processor": platform.processor() or platform.machine(),
        "cpu_count": os.cpu_count(),
        "python": platform.python_version(),
    }
    report["settings"] = {"width": width, "height": height, "frames": frames, "seed": seed, "model": face.name}
    text = json.dumps(report, indent=2, sort_keys=True)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    click.echo(text)


@cli.command("make-model")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--vertices", type=int, default=3000, show_default=True)
@click.option("--id-dims", type=int, default=20, show_default=True)
@click.option("--exp-dims", type=int, default=20, show_default=True)
@click.option("--name", default=None, help="Model name (default synthetic-<seed>).")
@click.option("--out", "out_dir", required=True, help="Model directory to create.")
def make_model(seed, vertices, id_dims, exp_dims, name, out_dir):
    """Generate a synthetic morphable model and save it."""
    face = make_synthetic_model(seed=seed, n_vertices=vertices, n_id=id_dims, n_exp=exp_dims, name=name)
    save_model(face, out_dir)
    click.echo(f"model '{face.name}': {face.n_vertices} vertices, {face.triangles.shape[0]} triangles -> {out_dir}")


@cli.command("make-stream")
@click.option("--model", default="synthetic", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--frames", type=int, default=100, show_default=True)
@click.option("--fps", type=float, default=25.0, show_default=True)
@click.option("--width", type=int, default=256, show_default=True)
@click.option("--height", type=int, default=256, show_default=True)
@click.option("--noise", type=float, default=0.0, show_default=True, help="Landmark noise sigma in pixels.")
@click.option("--out", "out_path", required=True, help="Landmark stream file to write.")
def make_stream(model, seed, frames, fps, width, height, noise, out_path):
    """Generate a synthetic landmark clip."""
    from .engine.service import resolve_model

    face = resolve_model(model)
    script = MotionScript(
        seed=seed, n_frames=frames, fps=fps, image_size=(width, height), noise_sigma=noise
    )
    stream, _ = generate_stream(face, script)
    write_landmark_stream(out_path, stream)
    click.echo(f"{len(stream)} frames -> {out_path}")


def main():
    logging.basicConfig(
        level=os.environ.get("ENGINE_LOG", "INFO").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cli(standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        sys.exit(2)
    except click.Abort:
        sys.exit(2)
    except DataError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    except MimicError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(4)


if __name__ == "__main__":
    main()
