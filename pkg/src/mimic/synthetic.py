"""Deterministic synthetic landmark streams with known ground truth.

Drives a morphable model through smooth sinusoidal pose and expression
motion, projects its landmark and pupil vertices, and optionally adds seeded
Gaussian pixel noise.  Used by tests and the benchmark; never by the runtime
pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose, project_points, quat_from_rotation_matrix
from .model import FaceModel, synthesize_shape
from .tracking import GazeState, LandmarkFrame, TrackedFrame, estimate_gaze


@dataclass
class MotionScript:
    seed: int = 0
    n_frames: int = 100
    fps: float = 25.0
    image_size: tuple[int, int] = (256, 256)
    noise_sigma: float = 0.0
    yaw_deg: float = 12.0
    pitch_deg: float = 8.0
    roll_deg: float = 4.0
    scale_wobble: float = 0.04
    translation_px: float = 6.0
    identity_sigma: float = 0.04
    expression_amp: float = 0.035


def _euler_quat(yaw: float, pitch: float, roll: float) -> np.ndarray:
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
    rz = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
    return quat_from_rotation_matrix(rz @ ry @ rx)


def generate_stream(model: FaceModel, script: MotionScript) -> tuple[list[LandmarkFrame], list[TrackedFrame]]:
    """Returns (landmark frames, ground-truth tracked frames), same length."""
    rng = np.random.default_rng(script.seed)
    w, h = script.image_size
    base_scale = 0.4 * min(w, h)
    center = np.array([w / 2.0, h / 2.0])

    alpha = rng.normal(0.0, script.identity_sigma, model.n_id)
    k_exp = model.n_exp
    exp_freq = rng.uniform(0.2, 0.6, k_exp)
    exp_phase = rng.uniform(0.0, 2.0 * np.pi, k_exp)
    exp_amp = script.expression_amp * rng.uniform(0.3, 1.0, k_exp)
    pose_phase = rng.uniform(0.0, 2.0 * np.pi, 5)
    noise = rng.normal(0.0, 1.0, (script.n_frames, 70, 2)) if script.noise_sigma > 0.0 else None

    pupils = np.array([model.eye_meta.left_pupil, model.eye_meta.right_pupil])
    frames: list[LandmarkFrame] = []
    truth: list[TrackedFrame] = []
    prev_gaze: GazeState | None = None

    for i in range(script.n_frames):
        t = i / script.fps
        yaw = np.deg2rad(script.yaw_deg) * np.sin(2.0 * np.pi * 0.45 * t + pose_phase[0])
        pitch = np.deg2rad(script.pitch_deg) * np.sin(2.0 * np.pi * 0.30 * t + pose_phase[1])
        roll = np.deg2rad(script.roll_deg) * np.sin(2.0 * np.pi * 0.20 * t + pose_phase[2])
        scale = base_scale * (1.0 + script.scale_wobble * np.sin(2.0 * np.pi * 0.25 * t + pose_phase[3]))
        wobble = np.sin(2.0 * np.pi * 0.35 * t + pose_phase[4])
        translation = center + script.translation_px * np.array([wobble, np.cos(2.0 * np.pi * 0.35 * t + pose_phase[4])])
        beta = exp_amp * np.sin(2.0 * np.pi * exp_freq * t + exp_phase)
        pose = Pose(rotation=_euler_quat(yaw, pitch, roll), scale=float(scale), translation=translation)

        mesh = synthesize_shape(model, alpha, beta)
        pts = project_points(mesh[model.landmark_map], pose)
        iris = project_points(mesh[pupils], pose)
        clean = LandmarkFrame(t=t, points=pts.copy(), iris=iris.copy(), frame_size=(w, h))
        gaze = estimate_gaze(clean, prev_gaze)
        prev_gaze = gaze
        truth.append(
            TrackedFrame(
                t=t,
                identity=alpha.copy(),
                expression=beta,
                pose=pose,
                gaze=gaze,
                residual_rmse=0.0,
            )
        )
        if noise is not None:
            pts = pts + script.noise_sigma * noise[i, :68]
            iris = iris + script.noise_sigma * noise[i, 68:]
        frames.append(LandmarkFrame(t=t, points=pts, iris=iris, frame_size=(w, h)))
    return frames, truth
