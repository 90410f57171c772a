"""Tensor ops shared by training and the discriminators.

dynamics_stacks slices a frame sequence into strided temporal windows for
the dynamics critics; mouth_crop cuts and resizes the mouth region both the
real and generated side of the mouth critic see.
"""

from __future__ import annotations

from collections.abc import Sequence

import torch
import torch.nn.functional as F

from .errors import DataError

MIN_MOUTH_ROI = 8


def dynamics_stacks(
    frames: torch.Tensor | Sequence[torch.Tensor],
    window: int = 3,
    strides: Sequence[int] = (1, 2),
) -> dict[int, torch.Tensor]:
    """Strided temporal windows of a frame sequence, channel-concatenated.

    frames is (N, C, H, W) or a sequence of (C, H, W).  For each stride s
    the result holds every window [f_t, f_{t+s}, ..., f_{t+(window-1)s}]
    that fits, so the count at stride s is N - (window-1)*s.  The sequence
    must be long enough to give the coarsest scale at least one window.
    """
    if not isinstance(frames, torch.Tensor):
        frames = torch.stack(list(frames), dim=0)
    n, c = frames.shape[0], frames.shape[1]
    need = (window - 1) * max(strides) + 1
    if n < need:
        raise DataError(
            f"sequence too short for dynamics windows: {n} frames, "
            f"need {need} for window {window} at stride {max(strides)}"
        )
    out: dict[int, torch.Tensor] = {}
    for s in strides:
        count = n - (window - 1) * s
        idx = torch.arange(count).unsqueeze(1) + s * torch.arange(window).unsqueeze(0)
        stacked = frames[idx.reshape(-1)]  # (count*window, C, H, W)
        out[s] = stacked.reshape(count, window * c, *frames.shape[2:])
    return out


def mouth_crop(
    frame: torch.Tensor, roi: Sequence[int], out_size: int = 64
) -> torch.Tensor:
    """Crops roi = (x, y, w, h) and bilinearly resizes it to out_size square.

    Accepts (C, H, W) or (B, C, H, W); integer inputs are promoted to
    float32.  A roi already at out_size is copied without resampling, so
    aligned crops are exact gathers.
    """
    x, y, w, h = (int(v) for v in roi)
    if w < MIN_MOUTH_ROI or h < MIN_MOUTH_ROI:
        raise DataError(f"mouth roi too small: {w}x{h}, minimum side is {MIN_MOUTH_ROI}")
    height, width = frame.shape[-2], frame.shape[-1]
    if x < 0 or y < 0 or x + w > width or y + h > height:
        raise DataError(
            f"mouth roi out of bounds: ({x}, {y}, {w}, {h}) in {width}x{height} frame"
        )
    if not torch.is_floating_point(frame):
        frame = frame.to(torch.float32)
    crop = frame[..., y : y + h, x : x + w]
    if (h, w) == (out_size, out_size):
        return crop.contiguous()
    batched = crop.dim() == 4
    if not batched:
        crop = crop.unsqueeze(0)
    out = F.interpolate(crop, size=(out_size, out_size), mode="bilinear", align_corners=False)
    return out if batched else out.squeeze(0)
