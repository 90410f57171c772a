"""Loader for exported conditioning datasets.

Expects the exporter's layout: nmfc/%06d.png and gaze/%06d.png conditioning
maps, real/%06d.png ground-truth frames, and manifest.json naming the frame
count, pixel size, fps, per-frame mouth rois, and profile label.  Images are
held in memory as float32 CHW tensors scaled to [-1, 1].
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image

from .config import GeneratorConfig
from .errors import DataError
from .ops import MIN_MOUTH_ROI

MANIFEST_KEYS = ("count", "size", "fps", "mouth_rois", "profile_label")


def scale_roi(roi, from_size: tuple[int, int], to_size: int) -> tuple[int, int, int, int]:
    """Rescales a pixel roi from the dataset's native size to the training
    size, clamped inside the frame.  Rejects rois that rescaling makes
    smaller than the mouth critic's minimum."""
    x, y, w, h = (int(v) for v in roi)
    sx = to_size / float(from_size[0])
    sy = to_size / float(from_size[1])
    nx = int(np.floor(x * sx))
    ny = int(np.floor(y * sy))
    nw = int(np.ceil(w * sx))
    nh = int(np.ceil(h * sy))
    nx = max(0, min(nx, to_size - 1))
    ny = max(0, min(ny, to_size - 1))
    nw = min(nw, to_size - nx)
    nh = min(nh, to_size - ny)
    if nw < MIN_MOUTH_ROI or nh < MIN_MOUTH_ROI:
        raise DataError(
            f"mouth roi ({x}, {y}, {w}, {h}) becomes {nw}x{nh} at size {to_size}, "
            f"below the {MIN_MOUTH_ROI} px minimum"
        )
    return nx, ny, nw, nh


@dataclass
class FrameWindow:
    """Inputs and target for generating one frame under teacher forcing."""

    index: int
    cond: torch.Tensor  # (6*cond_window, H, W), oldest pair first
    prev: torch.Tensor  # (3*prev_outputs, H, W), oldest frame first
    target: torch.Tensor  # (3, H, W)
    roi: tuple[int, int, int, int]


def _load_image_dir(root: str, name: str, count: int, frame_size: int) -> torch.Tensor:
    folder = os.path.join(root, name)
    if not os.path.isdir(folder):
        raise DataError(f"dataset has no {name}/ directory under {root}")
    files = sorted(f for f in os.listdir(folder) if f.endswith(".png"))
    if len(files) != count:
        raise DataError(
            f"manifest mismatch: {name}/ holds {len(files)} frames, manifest says {count}"
        )
    frames = []
    for i in range(count):
        path = os.path.join(folder, "%06d.png" % i)
        try:
            with Image.open(path) as img:
                rgb = img.convert("RGB")
                if rgb.size != (frame_size, frame_size):
                    rgb = rgb.resize((frame_size, frame_size), Image.BILINEAR)
                arr = np.asarray(rgb, dtype=np.float32)
        except OSError as exc:
            raise DataError(f"manifest mismatch: cannot read {path}: {exc}") from exc
        frames.append(torch.from_numpy(arr / 127.5 - 1.0).permute(2, 0, 1))
    return torch.stack(frames, dim=0)


class ConditioningDataset:
    """All frames of one exported sequence, ready for training windows."""

    def __init__(self, root: str, gen_cfg: GeneratorConfig):
        self.root = str(root)
        self.cfg = gen_cfg
        manifest_path = os.path.join(self.root, "manifest.json")
        try:
            with open(manifest_path, "rb") as fh:
                raw = fh.read()
        except OSError as exc:
            raise DataError(f"cannot read manifest: {exc}") from exc
        self.manifest_hash = hashlib.sha256(raw).hexdigest()
        try:
            manifest = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DataError(f"manifest is not valid JSON: {exc}") from exc
        for key in MANIFEST_KEYS:
            if key not in manifest:
                raise DataError(f"manifest is missing '{key}'")
        self.count = int(manifest["count"])
        self.fps = float(manifest["fps"])
        self.profile_label = str(manifest["profile_label"])
        size = manifest["size"]
        if self.count < 1:
            raise DataError("dataset is empty")
        rois = manifest["mouth_rois"]
        if len(rois) != self.count:
            raise DataError(
                f"manifest mismatch: {len(rois)} mouth_rois for {self.count} frames"
            )
        self.rois = [
            scale_roi(r, (int(size[0]), int(size[1])), gen_cfg.frame_size) for r in rois
        ]
        self.nmfc = _load_image_dir(self.root, "nmfc", self.count, gen_cfg.frame_size)
        self.gaze = _load_image_dir(self.root, "gaze", self.count, gen_cfg.frame_size)
        if not os.path.isdir(os.path.join(self.root, "real")):
            raise DataError(
                f"dataset has no real/ frames under {self.root}; "
                "training needs ground-truth images (export with --images)"
            )
        self.real = _load_image_dir(self.root, "real", self.count, gen_cfg.frame_size)

    def cond_pair(self, i: int) -> torch.Tensor:
        return torch.cat([self.nmfc[i], self.gaze[i]], dim=0)

    def window(self, t: int) -> FrameWindow:
        """Teacher-forced inputs for frame t: the conditioning window ends at
        t (clamped at the start like inference bootstrap), previous frames
        are ground truth, black before the sequence begins."""
        cfg = self.cfg
        cond = torch.cat(
            [self.cond_pair(max(0, t - k)) for k in range(cfg.cond_window - 1, -1, -1)],
            dim=0,
        )
        parts = []
        for j in range(cfg.prev_outputs, 0, -1):
            i = t - j
            if i < 0:
                parts.append(torch.full_like(self.real[0], -1.0))
            else:
                parts.append(self.real[i])
        prev = (
            torch.cat(parts, dim=0)
            if parts
            else torch.zeros((0,) + self.real.shape[2:], dtype=self.real.dtype)
        )
        return FrameWindow(index=t, cond=cond, prev=prev, target=self.real[t], roi=self.rois[t])

    def batch(self, indices) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, list]:
        wins = [self.window(int(t)) for t in indices]
        cond = torch.stack([w.cond for w in wins], dim=0)
        prev = torch.stack([w.prev for w in wins], dim=0)
        target = torch.stack([w.target for w in wins], dim=0)
        return cond, prev, target, [w.roi for w in wins]
