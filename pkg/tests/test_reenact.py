"""Tests for target profiles, the identity swap, and pose retargeting."""

import json

import numpy as np
import pytest

from mimic.errors import DataError, EmptyClip, InvalidStats, ModelMismatch
from mimic.geometry import Pose, quat_from_axis_angle
from mimic.reenact import (
    ExpressionRange,
    PoseStats,
    SwapPolicy,
    TargetProfile,
    build_target_profile,
    load_profile,
    pose_stats_from,
    retarget_pose,
    save_profile,
    swap_identity,
)
from mimic.synthetic import MotionScript, generate_stream
from mimic.tracking import GazeState, SolverConfig, TrackedFrame, fit_identity

NO_RT = SwapPolicy(retarget_pose=False)


@pytest.fixture(scope="module")
def clip(small_model):
    return generate_stream(small_model, MotionScript(seed=21, n_frames=24))


@pytest.fixture(scope="module")
def fit(small_model, clip):
    frames, _ = clip
    return fit_identity(small_model, frames, SolverConfig())


@pytest.fixture(scope="module")
def fit_tracked(clip, fit):
    frames, _ = clip
    alpha, per_frame = fit
    return [
        TrackedFrame(
            t=f.t,
            identity=alpha,
            expression=beta,
            pose=pose,
            gaze=GazeState(left=np.zeros(2), right=np.zeros(2), left_valid=True, right_valid=True),
            residual_rmse=0.0,
        )
        for f, (pose, beta) in zip(frames, per_frame)
    ]


@pytest.fixture(scope="module")
def profile(small_model, fit_tracked):
    return build_target_profile(small_model, fit_tracked, label="subject-a")


def tracked(beta, gaze=None, pose=None, identity_dim=6):
    return TrackedFrame(
        t=1.25,
        identity=np.full(identity_dim, 0.3),
        expression=np.asarray(beta, dtype=np.float64),
        pose=pose or Pose(rotation=quat_from_axis_angle([0, 1, 0], 0.2), scale=90.0, translation=np.array([120.0, 130.0])),
        gaze=gaze or GazeState(left=np.array([0.3, -0.1]), right=np.array([0.2, 0.0]), left_valid=True, right_valid=True),
        residual_rmse=0.42,
    )


class TestBuildProfile:
    def test_matches_identity_fit(self, clip, fit, profile):
        frames, truth = clip
        alpha, per_frame = fit
        assert profile.identity.tobytes() == alpha.tobytes()
        betas = np.stack([b for _, b in per_frame])
        assert np.array_equal(profile.expression_range.lo, betas.min(axis=0))
        assert np.array_equal(profile.expression_range.hi, betas.max(axis=0))
        scales = np.array([p.scale for p, _ in per_frame])
        translations = np.stack([p.translation for p, _ in per_frame])
        assert profile.pose_stats.mean_scale == float(scales.mean())
        assert np.array_equal(profile.pose_stats.mean_translation, translations.mean(axis=0))
        assert profile.pose_stats.scale_std == float(scales.std())
        assert np.array_equal(profile.pose_stats.translation_std, translations.std(axis=0))
        ta = truth[0].identity
        cos = float(alpha @ ta) / (np.linalg.norm(alpha) * np.linalg.norm(ta))
        assert cos >= 0.999

    def test_model_name_recorded(self, small_model, profile):
        assert profile.model_name == small_model.name
        profile.check_model(small_model)

    def test_check_model_rejects_other_model(self, small_model, full_model, profile):
        with pytest.raises(ModelMismatch):
            profile.check_model(full_model)

    def test_empty_clip_rejected(self, small_model):
        with pytest.raises(EmptyClip):
            build_target_profile(small_model, [], label="empty")

    def test_mixed_identity_rejected(self, small_model, fit_tracked):
        from dataclasses import replace

        other = replace(fit_tracked[1], identity=fit_tracked[1].identity + 1e-9)
        with pytest.raises(DataError, match="identity"):
            build_target_profile(small_model, [fit_tracked[0], other], label="mixed")

    def test_single_frame_has_zero_spread(self, small_model, fit_tracked):
        profile = build_target_profile(small_model, fit_tracked[:1], label="one")
        assert profile.pose_stats.scale_std == 0.0
        assert np.array_equal(profile.pose_stats.translation_std, [0.0, 0.0])
        assert np.array_equal(profile.expression_range.lo, profile.expression_range.hi)


class TestPoseStatsFrom:
    def test_population_std(self, rng):
        poses = [
            Pose(scale=float(s), translation=t)
            for s, t in zip(80 + 5 * rng.random(12), 100 + 20 * rng.random((12, 2)))
        ]
        stats = pose_stats_from(poses)
        scales = np.array([p.scale for p in poses])
        translations = np.stack([p.translation for p in poses])
        assert stats.mean_scale == float(scales.mean())
        assert stats.scale_std == float(scales.std(ddof=0))
        assert np.array_equal(stats.translation_std, translations.std(axis=0, ddof=0))

    def test_negative_spread_impossible(self, rng):
        for trial in range(20):
            poses = [
                Pose(scale=float(50 + 100 * rng.random()), translation=200 * rng.random(2))
                for _ in range(int(1 + rng.integers(1, 8)))
            ]
            stats = pose_stats_from(poses)
            assert stats.scale_std >= 0.0
            assert np.all(stats.translation_std >= 0.0)


class TestSwapIdentity:
    def test_identity_is_replaced_bitwise(self, profile):
        src = tracked(np.zeros(8))
        out = swap_identity(src, profile, NO_RT)
        assert out.identity.tobytes() == profile.identity.tobytes()
        assert src.identity[0] == 0.3  # source untouched

    def test_unit_gain_in_range_expression_is_bit_preserved(self, profile):
        mid = 0.5 * (profile.expression_range.lo + profile.expression_range.hi)
        src = tracked(mid)
        out = swap_identity(src, profile, SwapPolicy(retarget_pose=False, expression_gain=1.0, clamp_expression=True))
        assert out.expression.tobytes() == mid.tobytes()

    def test_gain_scales_expression(self, profile):
        src = tracked(np.full(8, 0.001))
        out = swap_identity(src, profile, SwapPolicy(retarget_pose=False, expression_gain=2.0, clamp_expression=False))
        assert np.array_equal(out.expression, np.full(8, 0.002))

    def test_zero_gain_freezes_expression(self, profile):
        src = tracked(np.full(8, 0.5))
        out = swap_identity(src, profile, SwapPolicy(retarget_pose=False, expression_gain=0.0, clamp_expression=False))
        assert np.array_equal(out.expression, np.zeros(8))

    def test_clamp_limits_to_profile_range(self, profile):
        src = tracked(np.full(8, 10.0))
        out = swap_identity(src, profile, SwapPolicy(retarget_pose=False, expression_gain=1.0, clamp_expression=True))
        assert np.array_equal(out.expression, profile.expression_range.hi)
        out_lo = swap_identity(tracked(np.full(8, -10.0)), profile, NO_RT)
        assert np.array_equal(out_lo.expression, profile.expression_range.lo)

    def test_gaze_transfer_on_preserves_bits(self, profile):
        gaze = GazeState(left=np.array([0.31, -0.12]), right=np.array([0.23, 0.04]), left_valid=True, right_valid=False)
        out = swap_identity(tracked(np.zeros(8), gaze=gaze), profile, SwapPolicy(retarget_pose=False, transfer_gaze=True))
        assert out.gaze.left.tobytes() == gaze.left.tobytes()
        assert out.gaze.right.tobytes() == gaze.right.tobytes()
        assert out.gaze.left_valid and not out.gaze.right_valid

    def test_gaze_transfer_off_is_neutral(self, profile):
        gaze = GazeState(left=np.array([0.9, 0.9]), right=np.array([-0.9, 0.9]), left_valid=True, right_valid=True)
        out = swap_identity(tracked(np.zeros(8), gaze=gaze), profile, SwapPolicy(retarget_pose=False, transfer_gaze=False))
        assert np.array_equal(out.gaze.left, [0.0, 0.0])
        assert np.array_equal(out.gaze.right, [0.0, 0.0])
        assert out.gaze.left_valid and out.gaze.right_valid

    def test_pose_passes_through_without_retarget(self, profile):
        src = tracked(np.zeros(8))
        out = swap_identity(src, profile, SwapPolicy(retarget_pose=False))
        assert out.pose.rotation.tobytes() == src.pose.rotation.tobytes()
        assert out.pose.scale == src.pose.scale
        assert out.pose.translation.tobytes() == src.pose.translation.tobytes()

    def test_default_policy_retargets(self, profile):
        # Retargeting is on by default, so source stats are required.
        with pytest.raises(DataError):
            swap_identity(tracked(np.zeros(8)), profile)
        out = swap_identity(tracked(np.zeros(8)), profile, source_stats=profile.pose_stats)
        assert out.identity.tobytes() == profile.identity.tobytes()

    def test_retarget_applies_target_framing(self, profile):
        src_stats = PoseStats(mean_scale=2.0 * profile.pose_stats.mean_scale, mean_translation=np.array([10.0, 20.0]))
        src = tracked(np.zeros(8))
        out = swap_identity(src, profile, SwapPolicy(retarget_pose=True), src_stats)
        want = retarget_pose(src.pose, src_stats, profile.pose_stats)
        assert out.pose.scale == want.scale
        assert out.pose.translation.tobytes() == want.translation.tobytes()

    def test_metadata_carried_through(self, profile):
        src = tracked(np.zeros(8))
        out = swap_identity(src, profile, NO_RT)
        assert out.t == src.t
        assert out.residual_rmse == src.residual_rmse
        assert out.stale == src.stale


class TestRetargetPose:
    def test_equal_stats_is_bit_exact(self, profile):
        pose = Pose(rotation=quat_from_axis_angle([1, 0, 0], 0.3), scale=87.5, translation=np.array([101.25, 140.5]))
        out = retarget_pose(pose, profile.pose_stats, profile.pose_stats)
        assert out.rotation.tobytes() == pose.rotation.tobytes()
        assert out.scale == pose.scale
        assert out.translation.tobytes() == pose.translation.tobytes()

    def test_formula(self):
        src = PoseStats(mean_scale=100.0, mean_translation=np.array([128.0, 128.0]))
        tgt = PoseStats(mean_scale=50.0, mean_translation=np.array([64.0, 64.0]))
        pose = Pose(scale=110.0, translation=np.array([138.0, 118.0]))
        out = retarget_pose(pose, src, tgt)
        ratio = 0.5
        assert out.scale == 110.0 * ratio
        want = pose.translation * ratio + (tgt.mean_translation - src.mean_translation * ratio)
        assert np.array_equal(out.translation, want)
        # Offset-from-mean reading: 10 px right of the source mean becomes 5 px
        # right of the target mean at half scale.
        assert np.allclose(out.translation, [69.0, 59.0])

    def test_rotation_never_changes(self):
        src = PoseStats(mean_scale=100.0, mean_translation=np.array([128.0, 128.0]))
        tgt = PoseStats(mean_scale=80.0, mean_translation=np.array([100.0, 90.0]))
        pose = Pose(rotation=quat_from_axis_angle([0.3, 1.0, -0.2], 0.7), scale=95.0, translation=np.array([120.0, 130.0]))
        out = retarget_pose(pose, src, tgt)
        assert out.rotation.tobytes() == pose.rotation.tobytes()

    def test_invalid_stats_raise(self):
        good = PoseStats(mean_scale=100.0, mean_translation=np.array([128.0, 128.0]))
        with pytest.raises(InvalidStats):
            retarget_pose(Pose(), PoseStats(mean_scale=0.0, mean_translation=np.zeros(2)), good)
        with pytest.raises(InvalidStats):
            retarget_pose(Pose(), good, PoseStats(mean_scale=np.nan, mean_translation=np.zeros(2)))
        with pytest.raises(InvalidStats):
            good_bad_std = PoseStats(mean_scale=90.0, mean_translation=np.zeros(2), scale_std=-0.5)
            retarget_pose(Pose(), good, good_bad_std)


class TestProfileFiles:
    def test_round_trip_is_bit_exact(self, profile, tmp_path):
        path = str(tmp_path / "profile.json")
        save_profile(profile, path)
        back = load_profile(path)
        assert back.label == profile.label
        assert back.model_name == profile.model_name
        assert back.identity.tobytes() == profile.identity.tobytes()
        assert back.expression_range.lo.tobytes() == profile.expression_range.lo.tobytes()
        assert back.expression_range.hi.tobytes() == profile.expression_range.hi.tobytes()
        assert back.pose_stats.mean_scale == profile.pose_stats.mean_scale
        assert back.pose_stats.mean_translation.tobytes() == profile.pose_stats.mean_translation.tobytes()
        assert back.pose_stats.scale_std == profile.pose_stats.scale_std
        assert back.pose_stats.translation_std.tobytes() == profile.pose_stats.translation_std.tobytes()

    def test_file_layout(self, profile, tmp_path):
        path = tmp_path / "p.json"
        save_profile(profile, str(path))
        obj = json.loads(path.read_text())
        assert set(obj) == {"model_name", "label", "identity", "pose_stats", "expression_range"}
        assert set(obj["pose_stats"]) == {"mean_scale", "mean_translation", "scale_std", "translation_std"}
        assert set(obj["expression_range"]) == {"min", "max"}
        assert isinstance(obj["identity"], list)

    def test_save_is_deterministic(self, profile, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        save_profile(profile, str(a))
        save_profile(profile, str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_missing_field_raises(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"label": "x", "model_name": "y", "identity": [0.1]}')
        with pytest.raises(DataError):
            load_profile(str(path))

    def test_corrupt_json_raises(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{nope")
        with pytest.raises(DataError):
            load_profile(str(path))

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(DataError):
            load_profile(str(tmp_path / "absent.json"))

    def test_nonpositive_scale_rejected_on_load(self, profile, tmp_path):
        path = tmp_path / "p.json"
        save_profile(profile, str(path))
        obj = json.loads(path.read_text())
        obj["pose_stats"]["mean_scale"] = -1.0
        path.write_text(json.dumps(obj))
        with pytest.raises(InvalidStats):
            load_profile(str(path))

    def test_inverted_range_rejected(self, profile, tmp_path):
        path = tmp_path / "p.json"
        save_profile(profile, str(path))
        obj = json.loads(path.read_text())
        rng_obj = obj["expression_range"]
        rng_obj["min"], rng_obj["max"] = rng_obj["max"], rng_obj["min"]
        path.write_text(json.dumps(obj))
        with pytest.raises(InvalidStats):
            load_profile(str(path))

    def test_identity_length_mismatch_vs_model(self, small_model, profile):
        wrong = TargetProfile(
            label="w",
            model_name=small_model.name,
            identity=np.zeros(small_model.n_id + 1),
            expression_range=profile.expression_range,
            pose_stats=profile.pose_stats,
        )
        with pytest.raises(ModelMismatch, match="identity"):
            wrong.check_model(small_model)


class TestExpressionRange:
    def test_clamp_is_componentwise(self):
        r = ExpressionRange(lo=np.array([-1.0, 0.0]), hi=np.array([1.0, 0.5]))
        assert np.array_equal(r.clamp(np.array([-2.0, 0.25])), [-1.0, 0.25])
        assert np.array_equal(r.clamp(np.array([0.5, 2.0])), [0.5, 0.5])

    def test_values_on_bounds_pass_through(self):
        r = ExpressionRange(lo=np.array([-0.25]), hi=np.array([0.75]))
        assert r.clamp(np.array([-0.25]))[0] == -0.25
        assert r.clamp(np.array([0.75]))[0] == 0.75
