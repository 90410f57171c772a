"""Command line: train a checkpoint, evaluate reconstruction, serve inference."""

from __future__ import annotations

import logging
import sys

import click

from .config import DiscriminatorSetConfig, GeneratorConfig, TrainConfig
from .errors import RendererError
from .infer import load_checkpoint, reconstruct_l1
from .service import RenderService
from .train import train

_TRAIN_DEFAULTS = TrainConfig()
_GEN_DEFAULTS = GeneratorConfig()


@click.group()
def main() -> None:
    """Toy-scale conditional video GAN over exported conditioning datasets."""
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")


def _fail(exc: RendererError) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(3)


@main.command("train")
@click.argument("dataset")
@click.option("--out", "out_dir", required=True, help="Checkpoint directory to write.")
@click.option("--epochs", type=int, default=_TRAIN_DEFAULTS.epochs, show_default=True)
@click.option("--batch", type=int, default=_TRAIN_DEFAULTS.batch, show_default=True,
              help="Contiguous frame runs per optimization step.")
@click.option("--lr-g", type=float, default=_TRAIN_DEFAULTS.lr_g, show_default=True)
@click.option("--lr-d", type=float, default=_TRAIN_DEFAULTS.lr_d, show_default=True)
@click.option("--fm-weight", type=float, default=_TRAIN_DEFAULTS.feature_matching_weight,
              show_default=True, help="Feature matching weight.")
@click.option("--rec-weight", type=float, default=_TRAIN_DEFAULTS.reconstruction_weight,
              show_default=True, help="Reconstruction L1 weight.")
@click.option("--seed", type=int, default=_TRAIN_DEFAULTS.seed, show_default=True)
@click.option("--frame-size", type=int, default=_GEN_DEFAULTS.frame_size, show_default=True)
@click.option("--cond-window", type=int, default=_GEN_DEFAULTS.cond_window, show_default=True)
@click.option("--prev-outputs", type=int, default=_GEN_DEFAULTS.prev_outputs, show_default=True)
@click.option("--base-channels", type=int, default=_GEN_DEFAULTS.base_channels, show_default=True)
@click.option("--residual-blocks", type=int, default=_GEN_DEFAULTS.residual_blocks, show_default=True)
def train_cmd(dataset, out_dir, epochs, batch, lr_g, lr_d, fm_weight, rec_weight, seed,
              frame_size, cond_window, prev_outputs, base_channels, residual_blocks):
    """Train on an exported conditioning dataset with real/ frames."""
    try:
        gen_cfg = GeneratorConfig(
            frame_size=frame_size,
            cond_window=cond_window,
            prev_outputs=prev_outputs,
            base_channels=base_channels,
            residual_blocks=residual_blocks,
        )
        train_cfg = TrainConfig(
            epochs=epochs,
            batch=batch,
            lr_g=lr_g,
            lr_d=lr_d,
            feature_matching_weight=fm_weight,
            reconstruction_weight=rec_weight,
            seed=seed,
        )
        path = train(dataset, out_dir, gen_cfg=gen_cfg,
                     disc_cfg=DiscriminatorSetConfig(), train_cfg=train_cfg)
    except RendererError as exc:
        _fail(exc)
    click.echo(f"checkpoint -> {path}")


@main.command("eval")
@click.argument("dataset")
@click.argument("checkpoint")
def eval_cmd(dataset, checkpoint):
    """Autoregressive reconstruction L1 of a dataset under a checkpoint."""
    try:
        loaded = load_checkpoint(checkpoint)
        report = reconstruct_l1(loaded, dataset)
    except RendererError as exc:
        _fail(exc)
    match = "yes" if report["manifest_match"] else "no"
    click.echo(
        f"frames={report['frames']} l1={report['l1']:.4f} trained_on_this_dataset={match}"
    )


@main.command("serve")
@click.argument("checkpoint")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=9200, show_default=True,
              help="TCP port; 0 picks a free one.")
def serve_cmd(checkpoint, host, port):
    """Serve frame synthesis over the length-prefixed JSON protocol."""
    try:
        loaded = load_checkpoint(checkpoint)
    except RendererError as exc:
        _fail(exc)
    service = RenderService(loaded, host=host, port=port)
    click.echo(f"renderer listening on {service.host}:{service.port}", nl=True)
    sys.stdout.flush()
    service.serve_forever()


if __name__ == "__main__":
    main()
