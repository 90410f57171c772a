"""Checkpoint loading and deterministic frame synthesis.

infer_frame runs the generator once on an explicit conditioning window;
FrameSynthesizer keeps the rolling window and previous-output feedback a
live stream needs, bootstrapping by repeating the first conditioning pair
and starting from black feedback frames.
"""

from __future__ import annotations

import json
import os
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import torch
from PIL import Image

from .config import RendererConfig, TrainConfig
from .errors import ConfigError, DataError
from .models import Generator


@dataclass
class LoadedRenderer:
    path: str
    generator: Generator
    cfg: RendererConfig
    train_cfg: TrainConfig | None
    manifest_hash: str
    history: list = field(default_factory=list)


def load_checkpoint(path: str) -> LoadedRenderer:
    """Rebuilds the generator from a checkpoint directory."""
    path = str(path)
    if not os.path.isdir(path):
        raise ConfigError(f"checkpoint directory not found: {path}")
    config_path = os.path.join(path, "config.json")
    try:
        with open(config_path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"checkpoint has no readable config.json: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"checkpoint config.json is not valid JSON: {exc}") from exc
    cfg = RendererConfig.from_dict(raw)
    train_cfg = TrainConfig.from_dict(raw["train"]) if "train" in raw else None
    try:
        blob = torch.load(
            os.path.join(path, "weights.pt"), map_location="cpu", weights_only=True
        )
    except Exception as exc:
        raise ConfigError(f"cannot read checkpoint weights: {exc}") from exc
    generator = Generator(cfg.generator)
    try:
        generator.load_state_dict(blob["generator"])
    except (KeyError, RuntimeError) as exc:
        raise ConfigError(
            f"checkpoint weights do not match the configured architecture: {exc}"
        ) from exc
    generator.eval()
    hash_path = os.path.join(path, "manifest_hash")
    try:
        with open(hash_path, "r", encoding="utf-8") as fh:
            manifest_hash = fh.read().strip()
    except OSError as exc:
        raise ConfigError(f"checkpoint has no manifest_hash: {exc}") from exc
    history = []
    history_path = os.path.join(path, "history.json")
    if os.path.exists(history_path):
        with open(history_path, "r", encoding="utf-8") as fh:
            history = json.load(fh)
    return LoadedRenderer(
        path=path,
        generator=generator,
        cfg=cfg,
        train_cfg=train_cfg,
        manifest_hash=manifest_hash,
        history=history,
    )


def _to_tanh(image: np.ndarray, size: int) -> torch.Tensor:
    """uint8 (H, W, 3) to float32 (3, size, size) in [-1, 1]."""
    arr = np.asarray(image)
    if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] != 3:
        raise DataError(f"expected uint8 (H, W, 3) image, got {arr.dtype} {arr.shape}")
    if arr.shape[:2] != (size, size):
        arr = np.asarray(Image.fromarray(arr).resize((size, size), Image.BILINEAR))
    return torch.from_numpy(arr.astype(np.float32) / 127.5 - 1.0).permute(2, 0, 1)


def _from_tanh(frame: torch.Tensor) -> np.ndarray:
    arr = frame.numpy().transpose(1, 2, 0)
    return np.clip(np.rint((arr + 1.0) * 127.5), 0.0, 255.0).astype(np.uint8)


def infer_frame(
    loaded: LoadedRenderer,
    cond_window: list[tuple[np.ndarray, np.ndarray]],
    prev_outputs: list[np.ndarray],
) -> np.ndarray:
    """One generator pass.  cond_window holds (nmfc, gaze) pairs oldest
    first and must be exactly cond_window long; prev_outputs holds the
    previous generated frames oldest first.  Returns uint8 RGB at the
    model's frame size; deterministic for identical inputs."""
    cfg = loaded.cfg.generator
    if len(cond_window) != cfg.cond_window:
        raise ConfigError(
            f"conditioning window has {len(cond_window)} pairs, "
            f"model expects {cfg.cond_window}"
        )
    if len(prev_outputs) != cfg.prev_outputs:
        raise ConfigError(
            f"got {len(prev_outputs)} previous outputs, model expects {cfg.prev_outputs}"
        )
    size = cfg.frame_size
    cond = torch.cat(
        [torch.cat([_to_tanh(n, size), _to_tanh(g, size)], dim=0) for n, g in cond_window],
        dim=0,
    ).unsqueeze(0)
    prev = None
    if cfg.prev_outputs:
        prev = torch.cat([_to_tanh(p, size) for p in prev_outputs], dim=0).unsqueeze(0)
    with torch.inference_mode():
        out = loaded.generator(cond, prev)[0]
    return _from_tanh(out)


def reconstruct_l1(loaded: LoadedRenderer, dataset_dir: str) -> dict:
    """Autoregressive reconstruction error over an exported dataset.

    Replays the conditioning sequence through a FrameSynthesizer, exactly as
    a live stream would run it, and compares each output to the real frame.
    Returns mean absolute error in [0, 1] image units plus the frame count
    and whether the checkpoint was trained on this dataset's manifest.
    """
    import hashlib

    root = str(dataset_dir)
    manifest_path = os.path.join(root, "manifest.json")
    try:
        with open(manifest_path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read manifest: {exc}") from exc
    manifest = json.loads(raw)
    count = int(manifest["count"])
    if not os.path.isdir(os.path.join(root, "real")):
        raise DataError(f"dataset has no real/ frames under {root}")
    size = loaded.cfg.generator.frame_size
    synth = FrameSynthesizer(loaded)
    total = 0.0
    for i in range(count):
        name = "%06d.png" % i
        try:
            with Image.open(os.path.join(root, "nmfc", name)) as img:
                nmfc = np.asarray(img.convert("RGB"))
            with Image.open(os.path.join(root, "gaze", name)) as img:
                gaze = np.asarray(img.convert("RGB"))
            with Image.open(os.path.join(root, "real", name)) as img:
                real = img.convert("RGB")
                if real.size != (size, size):
                    real = real.resize((size, size), Image.BILINEAR)
                real = np.asarray(real)
        except OSError as exc:
            raise DataError(f"manifest mismatch: cannot read frame {i}: {exc}") from exc
        out = synth.step(nmfc, gaze)
        total += float(
            np.abs(out.astype(np.float64) - real.astype(np.float64)).mean() / 255.0
        )
    return {
        "l1": total / count,
        "frames": count,
        "manifest_match": hashlib.sha256(raw).hexdigest() == loaded.manifest_hash,
    }


class FrameSynthesizer:
    """Rolling inference state for one stream of conditioning frames."""

    def __init__(self, loaded: LoadedRenderer):
        self.loaded = loaded
        cfg = loaded.cfg.generator
        self._conds: deque = deque(maxlen=cfg.cond_window)
        self._prevs: deque = deque(maxlen=max(cfg.prev_outputs, 1))

    def reset(self) -> None:
        self._conds.clear()
        self._prevs.clear()

    def step(self, nmfc: np.ndarray, gaze: np.ndarray) -> np.ndarray:
        cfg = self.loaded.cfg.generator
        self._conds.append((nmfc, gaze))
        window = list(self._conds)
        while len(window) < cfg.cond_window:
            window.insert(0, window[0])
        prevs = list(self._prevs)[-cfg.prev_outputs :] if cfg.prev_outputs else []
        if cfg.prev_outputs:
            black = np.zeros((cfg.frame_size, cfg.frame_size, 3), dtype=np.uint8)
            while len(prevs) < cfg.prev_outputs:
                prevs.insert(0, black)
        out = infer_frame(self.loaded, window, prevs)
        self._prevs.append(out)
        return out
