"""Builders for small conditioning-layout datasets used across the tests.

The layout mirrors what the engine's exporter writes: nmfc/%06d.png,
gaze/%06d.png, optional real/%06d.png, and manifest.json with count, size,
fps, mouth_rois, profile_label, timestamps, has_real.
"""

from __future__ import annotations

import json
import os

import numpy as np
from PIL import Image


def smooth_noise(rng: np.random.Generator, size: int, coarse: int = 8) -> np.ndarray:
    """Low-frequency random image: a coarse grid upsampled bilinearly."""
    grid = rng.integers(0, 256, size=(coarse, coarse, 3), dtype=np.uint8)
    img = Image.fromarray(grid).resize((size, size), Image.BILINEAR)
    return np.asarray(img)


def synth_real(nmfc: np.ndarray, gaze: np.ndarray) -> np.ndarray:
    """Deterministic conditioning-to-frame transform a small convnet can learn:
    a few-pixel shift of the NMFC blended with the gaze map."""
    shifted = np.roll(nmfc.astype(np.float64), shift=(2, 3), axis=(0, 1))
    mix = 0.8 * shifted + 0.2 * gaze.astype(np.float64)
    return np.clip(mix, 0.0, 255.0).astype(np.uint8)


def default_roi(size: int, i: int) -> list[int]:
    side = max(8, size // 3)
    x = size // 4 + (i % 3)
    y = size // 4 + 4
    return [x, y, side, side]


def write_dataset(
    root,
    count: int = 12,
    size: int = 64,
    with_real: bool = True,
    seed: int = 0,
    fps: float = 25.0,
    label: str = "unit",
    rois: list[list[int]] | None = None,
) -> str:
    """Writes the dataset under root; returns the manifest path."""
    root = str(root)
    os.makedirs(os.path.join(root, "nmfc"), exist_ok=True)
    os.makedirs(os.path.join(root, "gaze"), exist_ok=True)
    if with_real:
        os.makedirs(os.path.join(root, "real"), exist_ok=True)
    rng = np.random.default_rng(seed)
    if rois is None:
        rois = [default_roi(size, i) for i in range(count)]
    for i in range(count):
        nmfc = smooth_noise(rng, size)
        gaze = smooth_noise(rng, size, coarse=4)
        Image.fromarray(nmfc).save(os.path.join(root, "nmfc", "%06d.png" % i))
        Image.fromarray(gaze).save(os.path.join(root, "gaze", "%06d.png" % i))
        if with_real:
            real = synth_real(nmfc, gaze)
            Image.fromarray(real).save(os.path.join(root, "real", "%06d.png" % i))
    manifest = {
        "count": count,
        "size": [size, size],
        "fps": fps,
        "mouth_rois": [list(r) for r in rois],
        "profile_label": label,
        "timestamps": [i / fps for i in range(count)],
        "has_real": bool(with_real),
    }
    path = os.path.join(root, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
