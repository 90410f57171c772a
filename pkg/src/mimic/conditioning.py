"""Conditioning images for the neural renderer.

Two aligned maps per frame: the NMFC image (the mesh rasterized with its
fixed normalized-coordinate palette, so a pixel's color names the piece of
face it shows regardless of pose or identity) and the gaze map (eyelid
polygons in red/blue, pupil discs in green).  Plus the square mouth crop
used by the mouth discriminator, and a deterministic PNG sequence exporter.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import raster
from .errors import DataError
from .geometry import Pose, rotate_points
from .model import LEFT_EYE, MOUTH, RIGHT_EYE, FaceModel, NmfcPalette, synthesize_shape
from .tracking import GazeState, TrackedFrame

PUPIL_RADIUS_FRACTION = 0.15
MOUTH_MARGIN_FRACTION = 0.2


@dataclass
class RasterSettings:
    width: int = 256
    height: int = 256
    background: tuple[int, int, int] = (0, 0, 0)
    cull_backfaces: bool = True

    @staticmethod
    def from_dict(data: dict) -> "RasterSettings":
        data = dict(data)
        if "background" in data:
            data["background"] = tuple(int(v) for v in data["background"])
        return RasterSettings(**data)


@dataclass
class ConditioningFrame:
    t: float
    nmfc: np.ndarray  # (H, W, 3) uint8
    gaze: np.ndarray  # (H, W, 3) uint8
    mouth_box: tuple[int, int, int, int]  # x, y, w, h in pixels


def project_vertices(model: FaceModel, alpha, beta, pose: Pose) -> tuple[np.ndarray, np.ndarray]:
    """Projects the synthesized mesh; returns (xy (V, 2), depth (V,)).

    The xy values are bit-identical to geometry.project_points on the same
    mesh, so sampling the render at these positions is exact.
    """
    cam = rotate_points(synthesize_shape(model, alpha, beta), pose)
    xy = pose.scale * cam[:, :2] + pose.translation
    return xy, cam[:, 2]


def render_nmfc(model: FaceModel, palette: NmfcPalette, xy: np.ndarray, depth: np.ndarray, settings: RasterSettings) -> np.ndarray:
    pixels, _, _ = raster.rasterize(
        xy,
        depth,
        palette.colors,
        model.triangles,
        settings.width,
        settings.height,
        background=settings.background,
        cull_backfaces=settings.cull_backfaces,
    )
    return pixels


def _eye_box_2d(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    return 0.5 * (lo + hi), hi - lo


def render_gaze_map(model: FaceModel, xy: np.ndarray, gaze: GazeState, settings: RasterSettings) -> np.ndarray:
    """Eyelid polygons (left red, right blue) and pupil discs (green).

    Pupils are drawn only for eyes whose gaze offsets are valid; each sits at
    the eye-box center displaced by the offset times the box half-extents,
    with radius a fixed fraction of the box width.
    """
    image = np.zeros((settings.height, settings.width, 3), dtype=np.uint8)
    for contour, offset, valid, channel in (
        (model.eye_meta.left_contour, gaze.left, gaze.left_valid, 0),
        (model.eye_meta.right_contour, gaze.right, gaze.right_valid, 2),
    ):
        poly = xy[contour]
        raster.fill_polygon(image, poly, channel)
        if valid:
            center, size = _eye_box_2d(poly)
            pupil = center + offset * (0.5 * size)
            raster.fill_disc(image, pupil, PUPIL_RADIUS_FRACTION * size[0], 1)
    return image


def mouth_roi(landmarks_2d: np.ndarray, settings: RasterSettings) -> tuple[int, int, int, int]:
    """Square crop around the projected mouth, clipped to the frame.

    Expands the mouth bounding box by a margin on every side, grows the
    shorter dimension to make it square, then snaps to integer pixels.
    Clipping at the frame border may cut the square down.
    """
    pts = np.asarray(landmarks_2d, dtype=np.float64)
    if pts.shape[0] == 68:
        pts = pts[MOUTH]
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    dims = hi - lo
    lo = lo - MOUTH_MARGIN_FRACTION * dims
    hi = hi + MOUTH_MARGIN_FRACTION * dims
    side = float(max(hi - lo))
    center = 0.5 * (lo + hi)
    x = int(np.floor(center[0] - 0.5 * side))
    y = int(np.floor(center[1] - 0.5 * side))
    s = int(np.ceil(side))
    x0 = max(0, x)
    y0 = max(0, y)
    x1 = min(settings.width, x + s)
    y1 = min(settings.height, y + s)
    return x0, y0, max(0, x1 - x0), max(0, y1 - y0)


def render_conditioning(model: FaceModel, palette: NmfcPalette, tracked: TrackedFrame, settings: RasterSettings | None = None) -> ConditioningFrame:
    settings = settings or RasterSettings()
    xy, depth = project_vertices(model, tracked.identity, tracked.expression, tracked.pose)
    nmfc = render_nmfc(model, palette, xy, depth, settings)
    gaze = render_gaze_map(model, xy, tracked.gaze, settings)
    box = mouth_roi(xy[model.landmark_map], settings)
    return ConditioningFrame(t=tracked.t, nmfc=nmfc, gaze=gaze, mouth_box=box)


def centered_pose(model: FaceModel, settings: RasterSettings | None = None, fill: float = 0.75) -> Pose:
    """Identity rotation, head centered and scaled to `fill` of the frame."""
    settings = settings or RasterSettings()
    radius = float(np.abs(model.mean_shape[:, :2]).max())
    if radius <= 0.0:
        raise DataError("model has no planar extent")
    scale = 0.5 * fill * min(settings.width, settings.height) / radius
    return Pose(scale=scale, translation=np.array([settings.width / 2.0, settings.height / 2.0]))


# ---------------------------------------------------------------------------
# PNG sequences
# ---------------------------------------------------------------------------

def save_png(image: np.ndarray, path: str) -> None:
    """Fixed encoder settings so identical pixels give identical files."""
    Image.fromarray(image, "RGB").save(path, format="PNG", compress_level=6, optimize=False)


def load_png(path: str) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def export_sequence(
    out_dir: str,
    frames: list[tuple[ConditioningFrame, np.ndarray | None]],
    fps: float | None = None,
    profile_label: str = "",
    settings: RasterSettings | None = None,
) -> str:
    """Writes nmfc/%06d.png, gaze/%06d.png (plus real/%06d.png when ground
    truth images are supplied) and manifest.json; returns the manifest path.

    Real images must be given for all frames or none.
    """
    settings = settings or RasterSettings()
    if not frames:
        raise DataError("nothing to export: empty frame list")
    n_real = sum(1 for _, real in frames if real is not None)
    if n_real not in (0, len(frames)):
        raise DataError(f"real images cover {n_real} of {len(frames)} frames; need all or none")
    nmfc_dir = os.path.join(out_dir, "nmfc")
    gaze_dir = os.path.join(out_dir, "gaze")
    os.makedirs(nmfc_dir, exist_ok=True)
    os.makedirs(gaze_dir, exist_ok=True)
    if n_real:
        os.makedirs(os.path.join(out_dir, "real"), exist_ok=True)
    for i, (frame, real) in enumerate(frames):
        save_png(frame.nmfc, os.path.join(nmfc_dir, "%06d.png" % i))
        save_png(frame.gaze, os.path.join(gaze_dir, "%06d.png" % i))
        if real is not None:
            save_png(real, os.path.join(out_dir, "real", "%06d.png" % i))
    ts = [float(f.t) for f, _ in frames]
    if fps is None:
        # Fall back to the median frame interval when the caller has no rate.
        fps = 1.0 / float(np.median(np.diff(ts))) if len(ts) > 1 else 0.0
    manifest = {
        "count": len(frames),
        "size": [settings.width, settings.height],
        "fps": float(fps),
        "mouth_rois": [[int(v) for v in f.mouth_box] for f, _ in frames],
        "profile_label": profile_label,
        "timestamps": ts,
        "has_real": bool(n_real),
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


def load_manifest(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest is not valid JSON: {exc}") from exc
    for key in ("count", "size", "fps", "mouth_rois", "profile_label"):
        if key not in manifest:
            raise DataError(f"manifest is missing '{key}'")
    return manifest
