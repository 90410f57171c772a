"""Generator and discriminator networks.

The generator is a strided encoder / residual bottleneck / skip-connected
decoder that maps a window of conditioning pairs plus its own previous
outputs to one RGB frame in [-1, 1].  Discriminators are patch critics:
one conditional image critic, one per temporal stride on stacked frame
windows, and one on mouth crops.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .config import DiscriminatorSetConfig, GeneratorConfig
from .errors import ConfigError


def _init_weights(module: nn.Module) -> None:
    if isinstance(module, nn.Conv2d):
        nn.init.normal_(module.weight, 0.0, 0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)


def _conv_block(in_ch: int, out_ch: int, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1),
        nn.InstanceNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.body(x)


class _UpBlock(nn.Module):
    """Nearest upsample, refine, then fuse the matching encoder skip."""

    def __init__(self, in_ch: int, skip_ch: int, out_ch: int):
        super().__init__()
        self.refine = _conv_block(in_ch, out_ch)
        self.fuse = _conv_block(out_ch + skip_ch, out_ch)

    def forward(self, x: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
        x = nn.functional.interpolate(x, scale_factor=2, mode="nearest")
        x = self.refine(x)
        return self.fuse(torch.cat([x, skip], dim=1))


class Generator(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        b = cfg.base_channels
        self.enc0 = _conv_block(cfg.in_channels, b)
        self.enc1 = _conv_block(b, 2 * b, stride=2)
        self.enc2 = _conv_block(2 * b, 4 * b, stride=2)
        self.enc3 = _conv_block(4 * b, 4 * b, stride=2)
        self.blocks = nn.Sequential(*[ResidualBlock(4 * b) for _ in range(cfg.residual_blocks)])
        self.dec3 = _UpBlock(4 * b, 4 * b, 2 * b)
        self.dec2 = _UpBlock(2 * b, 2 * b, b)
        self.dec1 = _UpBlock(b, b, b)
        self.out = nn.Conv2d(b, 3, 3, padding=1)
        self.apply(_init_weights)

    def forward(self, cond: torch.Tensor, prev: torch.Tensor | None = None) -> torch.Tensor:
        """cond is (B, 6*cond_window, H, W); prev is (B, 3*prev_outputs, H, W)."""
        cfg = self.cfg
        if cond.shape[1] != cfg.cond_window * 6:
            raise ConfigError(
                f"conditioning window has {cond.shape[1]} channels, "
                f"expected {cfg.cond_window * 6} for cond_window={cfg.cond_window}"
            )
        if cfg.prev_outputs == 0:
            x = cond
        else:
            if prev is None or prev.shape[1] != cfg.prev_outputs * 3:
                got = "none" if prev is None else str(prev.shape[1])
                raise ConfigError(
                    f"previous-output feedback has {got} channels, "
                    f"expected {cfg.prev_outputs * 3} for prev_outputs={cfg.prev_outputs}"
                )
            x = torch.cat([cond, prev], dim=1)
        e0 = self.enc0(x)
        e1 = self.enc1(e0)
        e2 = self.enc2(e1)
        e3 = self.enc3(e2)
        d = self.blocks(e3)
        d = self.dec3(d, e2)
        d = self.dec2(d, e1)
        d = self.dec1(d, e0)
        return torch.tanh(self.out(d))


class PatchDiscriminator(nn.Module):
    """Three stride-2 conv layers plus a 1-channel patch head.

    Returns (patch logits, list of intermediate features) so the trainer
    can add feature-matching terms.
    """

    def __init__(self, in_channels: int, base_channels: int = 32):
        super().__init__()
        b = base_channels
        self.layers = nn.ModuleList(
            [
                nn.Sequential(
                    nn.Conv2d(in_channels, b, 4, stride=2, padding=1),
                    nn.LeakyReLU(0.2, inplace=True),
                ),
                nn.Sequential(
                    nn.Conv2d(b, 2 * b, 4, stride=2, padding=1),
                    nn.InstanceNorm2d(2 * b),
                    nn.LeakyReLU(0.2, inplace=True),
                ),
                nn.Sequential(
                    nn.Conv2d(2 * b, 4 * b, 4, stride=2, padding=1),
                    nn.InstanceNorm2d(4 * b),
                    nn.LeakyReLU(0.2, inplace=True),
                ),
            ]
        )
        self.head = nn.Conv2d(4 * b, 1, 4, stride=1, padding=1)
        self.apply(_init_weights)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        features = []
        for layer in self.layers:
            x = layer(x)
            features.append(x)
        return self.head(x), features


class DiscriminatorSet(nn.Module):
    """Image, per-stride dynamics, and mouth critics as one module."""

    def __init__(self, cfg: DiscriminatorSetConfig, cond_channels: int = 6):
        super().__init__()
        self.cfg = cfg
        b = cfg.base_channels
        self.image = PatchDiscriminator(cond_channels + 3, b)
        self.dynamics = nn.ModuleDict(
            {str(s): PatchDiscriminator(cfg.dynamics_window * 3, b) for s in cfg.dynamics_strides}
        )
        self.mouth = PatchDiscriminator(3, b)

    def branches(self):
        """(name, module) pairs, one per independent critic."""
        yield "image", self.image
        for s in self.cfg.dynamics_strides:
            yield f"dynamics_s{s}", self.dynamics[str(s)]
        yield "mouth", self.mouth
