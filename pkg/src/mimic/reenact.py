"""Identity swap: drive a calibrated target head with a source performance.

A target profile freezes the target's identity coefficients plus the
statistics needed to retarget motion: the range its expressions actually
covered and the mean/spread of its pose scale and translation.  Swapping
replaces the tracked identity with the profile's, rescales and clamps the
expression, optionally transfers gaze, and optionally retargets the pose
into the target's framing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError, EmptyClip, InvalidStats, ModelMismatch
from .geometry import Pose
from .model import FaceModel
from .tracking import GazeState, TrackedFrame


@dataclass
class PoseStats:
    mean_scale: float
    mean_translation: np.ndarray  # (2,)
    scale_std: float = 0.0
    translation_std: np.ndarray | None = None  # (2,)

    def __post_init__(self):
        self.mean_translation = np.asarray(self.mean_translation, dtype=np.float64)
        if self.translation_std is None:
            self.translation_std = np.zeros(2)
        self.translation_std = np.asarray(self.translation_std, dtype=np.float64)

    def validate(self) -> None:
        if not np.isfinite(self.mean_scale) or self.mean_scale <= 0.0:
            raise InvalidStats(f"mean scale must be positive and finite, got {self.mean_scale}")
        if self.mean_translation.shape != (2,) or not np.all(np.isfinite(self.mean_translation)):
            raise InvalidStats("mean translation must be a finite 2-vector")
        if not np.isfinite(self.scale_std) or self.scale_std < 0.0:
            raise InvalidStats(f"scale std must be non-negative and finite, got {self.scale_std}")
        if self.translation_std.shape != (2,) or not np.all(np.isfinite(self.translation_std)) or np.any(self.translation_std < 0.0):
            raise InvalidStats("translation std must be a non-negative finite 2-vector")


@dataclass
class ExpressionRange:
    lo: np.ndarray  # (K_exp,)
    hi: np.ndarray  # (K_exp,)

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)

    def validate(self) -> None:
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise InvalidStats("expression range bounds must be matching vectors")
        if not (np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi))):
            raise InvalidStats("expression range bounds must be finite")
        if np.any(self.lo > self.hi):
            raise InvalidStats("expression range has lo > hi")

    def clamp(self, beta: np.ndarray) -> np.ndarray:
        return np.minimum(self.hi, np.maximum(self.lo, beta))


@dataclass
class TargetProfile:
    label: str
    model_name: str
    identity: np.ndarray  # (K_id,)
    expression_range: ExpressionRange
    pose_stats: PoseStats

    def __post_init__(self):
        self.identity = np.asarray(self.identity, dtype=np.float64)

    def validate(self) -> None:
        if self.identity.ndim != 1 or not np.all(np.isfinite(self.identity)):
            raise InvalidStats("profile identity must be a finite vector")
        self.expression_range.validate()
        self.pose_stats.validate()

    def check_model(self, model: FaceModel) -> None:
        if self.model_name != model.name:
            raise ModelMismatch(f"profile was built for model '{self.model_name}', not '{model.name}'")
        if self.identity.shape[0] != model.n_id:
            raise ModelMismatch(
                f"profile has {self.identity.shape[0]} identity coefficients, model expects {model.n_id}"
            )
        if self.expression_range.lo.shape[0] != model.n_exp:
            raise ModelMismatch(
                f"profile expression range covers {self.expression_range.lo.shape[0]} coefficients, model expects {model.n_exp}"
            )


@dataclass
class SwapPolicy:
    retarget_pose: bool = True
    expression_gain: float = 1.0
    transfer_gaze: bool = True
    clamp_expression: bool = True

    def validate(self) -> None:
        if not np.isfinite(self.expression_gain) or self.expression_gain < 0.0:
            raise DataError(f"expression gain must be finite and >= 0, got {self.expression_gain}")

    @staticmethod
    def from_dict(data: dict) -> "SwapPolicy":
        policy = SwapPolicy(**data)
        policy.validate()
        return policy

    def to_dict(self) -> dict:
        return {
            "retarget_pose": self.retarget_pose,
            "expression_gain": self.expression_gain,
            "transfer_gaze": self.transfer_gaze,
            "clamp_expression": self.clamp_expression,
        }


def pose_stats_from(poses: list[Pose]) -> PoseStats:
    scales = np.array([p.scale for p in poses])
    translations = np.stack([p.translation for p in poses])
    stats = PoseStats(
        mean_scale=float(scales.mean()),
        mean_translation=translations.mean(axis=0),
        scale_std=float(scales.std()),
        translation_std=translations.std(axis=0),
    )
    stats.validate()
    return stats


def build_target_profile(model: FaceModel, tracked: list[TrackedFrame], label: str = "target") -> TargetProfile:
    """Profile statistics over a tracked clip from a calibrated tracker.

    All frames must carry the same (frozen) identity; expression range and
    pose statistics are sample min/max and mean/std over the clip.
    """
    if not tracked:
        raise EmptyClip("cannot build a profile from an empty clip")
    identity = tracked[0].identity
    for tf in tracked[1:]:
        if not np.array_equal(tf.identity, identity):
            raise DataError("clip frames disagree on identity; calibrate before building a profile")
    betas = np.stack([tf.expression for tf in tracked])
    profile = TargetProfile(
        label=label,
        model_name=model.name,
        identity=identity.copy(),
        expression_range=ExpressionRange(lo=betas.min(axis=0), hi=betas.max(axis=0)),
        pose_stats=pose_stats_from([tf.pose for tf in tracked]),
    )
    profile.validate()
    return profile


def retarget_pose(pose: Pose, source: PoseStats, target: PoseStats) -> Pose:
    """Maps a source pose into the target's framing.

    Scale follows the ratio of mean scales; translation keeps the source's
    offset from its own mean, re-expressed around the target's mean.  The
    arithmetic is arranged so equal source and target statistics pass the
    pose through bit for bit.
    """
    source.validate()
    target.validate()
    ratio = target.mean_scale / source.mean_scale
    scale = pose.scale * ratio
    translation = pose.translation * ratio + (target.mean_translation - source.mean_translation * ratio)
    return Pose(rotation=pose.rotation.copy(), scale=scale, translation=translation)


def swap_identity(
    tracked: TrackedFrame,
    profile: TargetProfile,
    policy: SwapPolicy | None = None,
    source_stats: PoseStats | None = None,
) -> TrackedFrame:
    """Replaces the tracked identity with the profile's.

    Expression is scaled by the policy gain and, when clamping is on, limited
    to the range the target actually produced.  With gaze transfer off the
    output looks straight ahead.  Pose retargeting requires source
    statistics.
    """
    policy = policy or SwapPolicy()
    beta = tracked.expression * policy.expression_gain
    if policy.clamp_expression:
        beta = profile.expression_range.clamp(beta)
    if policy.transfer_gaze:
        gaze = GazeState(
            left=tracked.gaze.left.copy(),
            right=tracked.gaze.right.copy(),
            left_valid=tracked.gaze.left_valid,
            right_valid=tracked.gaze.right_valid,
        )
    else:
        gaze = GazeState(left=np.zeros(2), right=np.zeros(2), left_valid=True, right_valid=True)
    pose = tracked.pose.copy()
    if policy.retarget_pose:
        if source_stats is None:
            raise DataError("pose retargeting needs source pose statistics")
        pose = retarget_pose(pose, source_stats, profile.pose_stats)
    return TrackedFrame(
        t=tracked.t,
        identity=profile.identity.copy(),
        expression=beta,
        pose=pose,
        gaze=gaze,
        residual_rmse=tracked.residual_rmse,
        stale=tracked.stale,
    )


# ---------------------------------------------------------------------------
# Profile files
# ---------------------------------------------------------------------------

def save_profile(profile: TargetProfile, path: str) -> None:
    profile.validate()
    obj = {
        "model_name": profile.model_name,
        "label": profile.label,
        "identity": [float(v) for v in profile.identity],
        "pose_stats": {
            "mean_scale": float(profile.pose_stats.mean_scale),
            "mean_translation": [float(v) for v in profile.pose_stats.mean_translation],
            "scale_std": float(profile.pose_stats.scale_std),
            "translation_std": [float(v) for v in profile.pose_stats.translation_std],
        },
        "expression_range": {
            "min": [float(v) for v in profile.expression_range.lo],
            "max": [float(v) for v in profile.expression_range.hi],
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_profile(path: str) -> TargetProfile:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read profile: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"profile is not valid JSON: {exc}") from exc
    try:
        profile = TargetProfile(
            label=str(obj["label"]),
            model_name=str(obj["model_name"]),
            identity=np.asarray(obj["identity"], dtype=np.float64),
            expression_range=ExpressionRange(
                lo=np.asarray(obj["expression_range"]["min"], dtype=np.float64),
                hi=np.asarray(obj["expression_range"]["max"], dtype=np.float64),
            ),
            pose_stats=PoseStats(
                mean_scale=float(obj["pose_stats"]["mean_scale"]),
                mean_translation=np.asarray(obj["pose_stats"]["mean_translation"], dtype=np.float64),
                scale_std=float(obj["pose_stats"]["scale_std"]),
                translation_std=np.asarray(obj["pose_stats"]["translation_std"], dtype=np.float64),
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"profile is missing or corrupts a field: {exc}") from exc
    profile.validate()
    return profile
