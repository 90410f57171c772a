"""Configuration records for the generator, discriminators, and training loop.

All values are plain data so a checkpoint can round-trip them through JSON.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from .errors import ConfigError


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GeneratorConfig:
    """Shape of the conditioning window and the synthesis network."""

    frame_size: int = 128
    cond_window: int = 3
    prev_outputs: int = 2
    base_channels: int = 32
    residual_blocks: int = 4

    def __post_init__(self) -> None:
        if not _is_power_of_two(self.frame_size) or self.frame_size < 64:
            raise ConfigError(
                f"frame_size must be a power of two >= 64, got {self.frame_size}"
            )
        if self.cond_window < 1:
            raise ConfigError(f"cond_window must be >= 1, got {self.cond_window}")
        if self.prev_outputs < 0:
            raise ConfigError(f"prev_outputs must be >= 0, got {self.prev_outputs}")
        if self.base_channels < 1:
            raise ConfigError(f"base_channels must be >= 1, got {self.base_channels}")
        if self.residual_blocks < 0:
            raise ConfigError(
                f"residual_blocks must be >= 0, got {self.residual_blocks}"
            )

    @property
    def in_channels(self) -> int:
        # Each conditioning step is an NMFC + gaze pair (6ch), plus RGB feedback
        # frames from previous outputs.
        return self.cond_window * 6 + self.prev_outputs * 3

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorConfig":
        return cls(**data)


@dataclass(frozen=True)
class DiscriminatorSetConfig:
    """Branches of the multi-discriminator: image, temporal dynamics, mouth."""

    dynamics_strides: tuple[int, ...] = (1, 2)
    dynamics_window: int = 3
    mouth_size: int = 64
    base_channels: int = 32

    def __post_init__(self) -> None:
        strides = tuple(self.dynamics_strides)
        object.__setattr__(self, "dynamics_strides", strides)
        if len(strides) == 0:
            raise ConfigError("dynamics_strides must name at least one scale")
        if any(s < 1 for s in strides):
            raise ConfigError(f"dynamics strides must be >= 1, got {strides}")
        if any(b <= a for a, b in zip(strides, strides[1:])):
            raise ConfigError(
                f"dynamics strides must be strictly increasing, got {strides}"
            )
        if self.dynamics_window < 2:
            raise ConfigError(
                f"dynamics_window must be >= 2, got {self.dynamics_window}"
            )
        if self.mouth_size < 8:
            raise ConfigError(f"mouth_size must be >= 8, got {self.mouth_size}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dynamics_strides"] = list(self.dynamics_strides)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "DiscriminatorSetConfig":
        data = dict(data)
        if "dynamics_strides" in data:
            data["dynamics_strides"] = tuple(data["dynamics_strides"])
        return cls(**data)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization schedule. LSGAN objective with feature matching."""

    epochs: int = 10
    batch: int = 4
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    feature_matching_weight: float = 10.0
    reconstruction_weight: float = 10.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ConfigError("learning rates must be positive")
        if self.feature_matching_weight < 0 or self.reconstruction_weight < 0:
            raise ConfigError("loss weights must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)


@dataclass(frozen=True)
class RendererConfig:
    """Everything a checkpoint needs to rebuild its networks."""

    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminators: DiscriminatorSetConfig = field(
        default_factory=DiscriminatorSetConfig
    )

    def to_dict(self) -> dict:
        return {
            "generator": self.generator.to_dict(),
            "discriminators": self.discriminators.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RendererConfig":
        return cls(
            generator=GeneratorConfig.from_dict(data["generator"]),
            discriminators=DiscriminatorSetConfig.from_dict(data["discriminators"]),
        )
