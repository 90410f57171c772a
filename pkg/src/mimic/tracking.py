"""Landmark-driven face tracking.

Per frame: closed-form scaled-orthographic pose initialization, Gauss-Newton
pose refinement with an analytic Jacobian, ridge least squares for expression
coefficients, gaze offsets from iris landmarks, and an adaptive low-pass
filter over every output channel.  Identity coefficients are fit once over a
clip (or bootstrapped from the first N frames of a live stream) and then
frozen.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, DegenerateConfiguration, NumericalFailure
from .geometry import (
    Pose,
    nearest_rotation_from_rows,
    project_points,
    project_theta,
    projection_jacobian,
    quat_from_rotation_matrix,
    quat_normalize,
)
from .model import LEFT_EYE, N_LANDMARKS, RIGHT_EYE, FaceModel, synthesize_shape

log = logging.getLogger(__name__)

_RANK_TOL = 1e-8


@dataclass
class SmootherConfig:
    min_cutoff_hz: float = 1.0
    beta: float = 0.05
    d_cutoff_hz: float = 1.0


@dataclass
class SolverConfig:
    lambda_id: float = 1e-3
    lambda_exp: float = 5e-4
    gn_max_iters: int = 10
    gn_tol: float = 1e-6  # relative step norm
    outer_iters: int = 3
    calibration_frames: int = 30
    prior_radius: float = 10.0  # hard bound on |alpha|
    smoother: SmootherConfig = field(default_factory=SmootherConfig)

    @staticmethod
    def from_dict(data: dict) -> "SolverConfig":
        data = dict(data)
        sm = data.pop("smoother", None)
        cfg = SolverConfig(**data)
        if sm:
            cfg.smoother = SmootherConfig(**sm)
        return cfg


@dataclass
class LandmarkFrame:
    t: float
    points: np.ndarray  # (68, 2) pixels
    iris: np.ndarray | None = None  # (2, 2) pixels: left, right centers
    frame_size: tuple[int, int] = (256, 256)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.shape != (N_LANDMARKS, 2):
            raise DataError(f"landmark frame needs (68, 2) points, got {self.points.shape}")
        if self.iris is not None:
            self.iris = np.asarray(self.iris, dtype=np.float64)
            if self.iris.shape != (2, 2):
                raise DataError(f"iris block must be (2, 2), got {self.iris.shape}")


@dataclass
class GazeState:
    left: np.ndarray = field(default_factory=lambda: np.zeros(2))
    right: np.ndarray = field(default_factory=lambda: np.zeros(2))
    left_valid: bool = False
    right_valid: bool = False

    def __post_init__(self):
        self.left = np.asarray(self.left, dtype=np.float64)
        self.right = np.asarray(self.right, dtype=np.float64)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.left, self.right])


@dataclass
class TrackedFrame:
    t: float
    identity: np.ndarray  # (K_id,)
    expression: np.ndarray  # (K_exp,)
    pose: Pose
    gaze: GazeState
    residual_rmse: float
    stale: bool = False


# ---------------------------------------------------------------------------
# Pose
# ---------------------------------------------------------------------------

def _centered(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = a.mean(axis=0)
    return a - mean, mean


def landmarks_collinear(points2d: np.ndarray) -> bool:
    centered, _ = _centered(np.asarray(points2d, dtype=np.float64))
    sv = np.linalg.svd(centered, compute_uv=False)
    return sv[1] <= _RANK_TOL * max(sv[0], 1e-30)


def initial_pose(landmarks_2d: np.ndarray, ref_points: np.ndarray) -> Pose:
    """Closed-form scaled-orthographic pose from 2D-3D correspondences.

    Solves the two projection rows by least squares on centered coordinates,
    takes the mean row norm as scale, snaps the rows to the nearest rotation
    via SVD, and recovers translation from the centroids.
    """
    obs = np.asarray(landmarks_2d, dtype=np.float64)
    ref = np.asarray(ref_points, dtype=np.float64)
    if obs.shape[0] != ref.shape[0] or obs.shape[0] < 4:
        raise DataError("need at least 4 matched points")
    x, ref_mean = _centered(ref)
    u, obs_mean = _centered(obs)
    sv = np.linalg.svd(x, compute_uv=False)
    if sv[2] <= _RANK_TOL * max(sv[0], 1e-30):
        raise DegenerateConfiguration("reference points are coplanar or collinear")
    if landmarks_collinear(obs):
        raise DegenerateConfiguration("2D landmarks are collinear")
    r1, *_ = np.linalg.lstsq(x, u[:, 0], rcond=None)
    r2, *_ = np.linalg.lstsq(x, u[:, 1], rcond=None)
    scale = 0.5 * (np.linalg.norm(r1) + np.linalg.norm(r2))
    if scale <= 0.0 or not np.isfinite(scale):
        raise DegenerateConfiguration("estimated scale is not positive")
    rot = nearest_rotation_from_rows(r1, r2)
    quat = quat_from_rotation_matrix(rot)
    translation = obs_mean - scale * (rot @ ref_mean)[:2]
    return Pose(rotation=quat, scale=scale, translation=translation)


def reprojection_rmse(pose: Pose, landmarks_2d: np.ndarray, ref_points: np.ndarray) -> float:
    delta = project_points(ref_points, pose) - landmarks_2d
    return float(np.sqrt(np.mean(np.sum(delta * delta, axis=1))))


def _objective(theta: np.ndarray, obs_flat: np.ndarray, ref: np.ndarray) -> float:
    r = project_theta(theta, ref).reshape(-1) - obs_flat
    return float(r @ r)


def refine_pose(pose: Pose, landmarks_2d: np.ndarray, ref_points: np.ndarray, cfg: SolverConfig | None = None, trace: list | None = None) -> Pose:
    """Gauss-Newton refinement over (quaternion, scale, translation).

    The step solves the linearized system by least squares, which leaves the
    quaternion's radial direction (a gauge freedom of the parametrization)
    untouched; the quaternion is renormalized after every accepted step.  A
    halving line search keeps the objective non-increasing.
    """
    cfg = cfg or SolverConfig()
    obs = np.asarray(landmarks_2d, dtype=np.float64)
    ref = np.asarray(ref_points, dtype=np.float64)
    obs_flat = obs.reshape(-1)
    theta = pose.as_theta()
    obj = _objective(theta, obs_flat, ref)
    if trace is not None:
        trace.append(obj)
    if not np.isfinite(obj):
        raise NumericalFailure("objective is not finite at the starting pose")

    for _ in range(cfg.gn_max_iters):
        residual = project_theta(theta, ref).reshape(-1) - obs_flat
        jac = projection_jacobian(theta, ref)
        step, *_ = np.linalg.lstsq(jac, -residual, rcond=None)
        if not np.all(np.isfinite(step)):
            # Tikhonov rescue on the normal equations.
            jtj = jac.T @ jac + 1e-9 * np.eye(7)
            try:
                step = np.linalg.solve(jtj, -jac.T @ residual)
            except np.linalg.LinAlgError as exc:
                raise NumericalFailure("normal equations singular beyond damping") from exc
            if not np.all(np.isfinite(step)):
                raise NumericalFailure("pose step is not finite")

        accepted = None
        lam = 1.0
        for _ in range(24):
            cand = theta + lam * step
            norm = np.linalg.norm(cand[:4])
            if norm > 0.0 and cand[4] > 0.0:
                cand[:4] /= norm
                cand_obj = _objective(cand, obs_flat, ref)
                if cand_obj <= obj:
                    accepted = (cand, cand_obj, lam)
                    break
            lam *= 0.5
        if accepted is None:
            break
        new_theta, obj, lam = accepted
        rel_step = lam * float(np.linalg.norm(step)) / (float(np.linalg.norm(theta)) + 1e-12)
        theta = new_theta
        if trace is not None:
            trace.append(obj)
        if rel_step < cfg.gn_tol:
            break
    return Pose.from_theta(theta)


# ---------------------------------------------------------------------------
# Linear coefficient fits
# ---------------------------------------------------------------------------

def _landmark_coord_rows(model: FaceModel) -> np.ndarray:
    return (3 * model.landmark_map[:, None] + np.arange(3)[None, :]).reshape(-1)


def _landmark_bases(model: FaceModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows = _landmark_coord_rows(model)
    mean = model.mean_shape.astype(np.float64)[model.landmark_map]
    id_b = model.id_basis.astype(np.float64)[rows].reshape(N_LANDMARKS, 3, -1)
    exp_b = model.exp_basis.astype(np.float64)[rows].reshape(N_LANDMARKS, 3, -1)
    return mean, id_b, exp_b


def _projected_basis(pose: Pose, basis: np.ndarray) -> np.ndarray:
    """Rows of the linear system mapping coefficients to projected offsets."""
    from .geometry import rotation_matrix

    p = pose.scale * rotation_matrix(pose.rotation)[:2, :]
    return np.einsum("rc,ncK->nrK", p, basis).reshape(2 * N_LANDMARKS, -1)


def _ridge_solve(ata: np.ndarray, atb: np.ndarray, lam: float) -> np.ndarray:
    return np.linalg.solve(ata + lam * np.eye(ata.shape[0]), atb)


def fit_expression(model: FaceModel, alpha: np.ndarray, pose: Pose, landmarks_2d: np.ndarray, cfg: SolverConfig | None = None) -> np.ndarray:
    """Ridge least squares for expression coefficients at a fixed pose."""
    cfg = cfg or SolverConfig()
    mean, id_b, exp_b = _landmark_bases(model)
    base = mean + id_b @ np.asarray(alpha, dtype=np.float64)
    residual = (np.asarray(landmarks_2d, dtype=np.float64) - project_points(base, pose)).reshape(-1)
    a = _projected_basis(pose, exp_b)
    return _ridge_solve(a.T @ a, a.T @ residual, cfg.lambda_exp)


def _identity_objective(model, frames_pts, alpha, poses, betas, cfg) -> float:
    mean, id_b, exp_b = _landmark_bases(model)
    total = cfg.lambda_id * float(alpha @ alpha)
    for pts, pose, beta in zip(frames_pts, poses, betas):
        ref = mean + id_b @ alpha + exp_b @ beta
        delta = project_points(ref, pose) - pts
        total += float(np.sum(delta * delta)) + cfg.lambda_exp * float(beta @ beta)
    return total


def fit_identity(model: FaceModel, frames: list[LandmarkFrame], cfg: SolverConfig | None = None, trace: list | None = None) -> tuple[np.ndarray, list[tuple[Pose, np.ndarray]]]:
    """Joint identity fit over a clip by block-coordinate descent.

    Alternates per-frame pose refinement, per-frame expression ridge fits and
    one global identity ridge fit for cfg.outer_iters rounds.  Frames whose
    landmarks are degenerate are dropped; if none survive the clip is
    unusable.  The round-end objective is appended to `trace` when given and
    never increases.
    """
    cfg = cfg or SolverConfig()
    usable = [f for f in frames if not landmarks_collinear(f.points)]
    dropped = len(frames) - len(usable)
    if dropped:
        log.warning("identity fit dropped %d degenerate frame(s)", dropped)
    if not usable:
        raise DegenerateConfiguration("all frames in the clip are degenerate")

    mean, id_b, exp_b = _landmark_bases(model)
    pts = [f.points for f in usable]
    k_id = model.n_id
    alpha = np.zeros(k_id)
    betas = [np.zeros(model.n_exp) for _ in usable]
    poses: list[Pose | None] = [None] * len(usable)

    for round_idx in range(max(1, cfg.outer_iters)):
        for i, obs in enumerate(pts):
            ref = mean + id_b @ alpha + exp_b @ betas[i]
            start = poses[i] if poses[i] is not None else initial_pose(obs, ref)
            poses[i] = refine_pose(start, obs, ref, cfg)
            betas[i] = fit_expression(model, alpha, poses[i], obs, cfg)
        ata = np.zeros((k_id, k_id))
        atb = np.zeros(k_id)
        for i, obs in enumerate(pts):
            a = _projected_basis(poses[i], id_b)
            base = mean + exp_b @ betas[i]
            residual = (obs - project_points(base, poses[i])).reshape(-1)
            ata += a.T @ a
            atb += a.T @ residual
        alpha = _ridge_solve(ata, atb, cfg.lambda_id)
        norm = float(np.linalg.norm(alpha))
        if norm > cfg.prior_radius:
            alpha *= cfg.prior_radius / norm
        if trace is not None:
            trace.append(_identity_objective(model, pts, alpha, poses, betas, cfg))
        del round_idx
    return alpha, list(zip([p for p in poses], betas))


# ---------------------------------------------------------------------------
# Gaze
# ---------------------------------------------------------------------------

def _eye_box(points: np.ndarray, idx: list[int]) -> tuple[np.ndarray, np.ndarray]:
    eye = points[idx]
    lo = eye.min(axis=0)
    hi = eye.max(axis=0)
    return 0.5 * (lo + hi), hi - lo


def _gaze_offset(center, size, iris_point):
    if size[0] <= 0.0 or size[1] <= 0.0 or not np.all(np.isfinite(iris_point)):
        return None
    u = 2.0 * (iris_point[0] - center[0]) / size[0]
    v = 2.0 * (iris_point[1] - center[1]) / size[1]
    return np.clip([u, v], -1.0, 1.0)


def estimate_gaze(lf: LandmarkFrame, prev: GazeState | None = None) -> GazeState:
    """Gaze offsets in [-1, 1]^2 from iris centers relative to the eye boxes.

    A missing or degenerate eye keeps the previous offsets but reports
    validity False.
    """
    out = GazeState()
    for side, idx in (("left", LEFT_EYE), ("right", RIGHT_EYE)):
        center, size = _eye_box(lf.points, idx)
        offset = None
        if lf.iris is not None:
            offset = _gaze_offset(center, size, lf.iris[0 if side == "left" else 1])
        if offset is None:
            carried = getattr(prev, side).copy() if prev is not None else np.zeros(2)
            setattr(out, side, carried)
            setattr(out, f"{side}_valid", False)
        else:
            setattr(out, side, np.asarray(offset))
            setattr(out, f"{side}_valid", True)
    return out


# ---------------------------------------------------------------------------
# Smoothing
# ---------------------------------------------------------------------------

def _smoothing_factor(t_e: float, cutoff) -> np.ndarray:
    r = 2.0 * np.pi * cutoff * t_e
    return r / (r + 1.0)


class OneEuroFilter:
    """Adaptive first-order low-pass over a vector channel.

    The cutoff rises with the (low-passed) speed of the signal, so slow
    drift gets heavy smoothing while fast motion passes through.  Calls with
    a non-increasing timestamp return the previous output untouched and set
    the warned flag.
    """

    def __init__(self, cfg: SmootherConfig):
        self.cfg = cfg
        self.x_prev: np.ndarray | None = None
        self.dx_prev: np.ndarray | None = None
        self.t_prev: float | None = None

    def __call__(self, t: float, x: np.ndarray) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        if self.x_prev is None:
            self.x_prev = x.copy()
            self.dx_prev = np.zeros_like(x)
            self.t_prev = t
            return x.copy(), False
        t_e = t - self.t_prev
        if t_e <= 0.0:
            return self.x_prev.copy(), True
        a_d = _smoothing_factor(t_e, self.cfg.d_cutoff_hz)
        dx = (x - self.x_prev) / t_e
        dx_hat = a_d * dx + (1.0 - a_d) * self.dx_prev
        cutoff = self.cfg.min_cutoff_hz + self.cfg.beta * np.abs(dx_hat)
        a = _smoothing_factor(t_e, cutoff)
        x_hat = a * x + (1.0 - a) * self.x_prev
        self.x_prev = x_hat
        self.dx_prev = dx_hat
        self.t_prev = t
        return x_hat.copy(), False


class FrameSmoother:
    """One filter per output channel of the tracker."""

    def __init__(self, cfg: SmootherConfig):
        self.quat = OneEuroFilter(cfg)
        self.scale = OneEuroFilter(cfg)
        self.translation = OneEuroFilter(cfg)
        self.expression = OneEuroFilter(cfg)
        self.gaze = OneEuroFilter(cfg)
        self.last_warned = False

    def apply(self, tf: TrackedFrame) -> TrackedFrame:
        q_in = tf.pose.rotation
        if self.quat.x_prev is not None and float(np.dot(q_in, self.quat.x_prev)) < 0.0:
            q_in = -q_in  # keep the quaternion on the same hemisphere as the filter state
        q, w1 = self.quat(tf.t, q_in)
        s, w2 = self.scale(tf.t, np.array([tf.pose.scale]))
        tr, w3 = self.translation(tf.t, tf.pose.translation)
        beta, w4 = self.expression(tf.t, tf.expression)
        gz, w5 = self.gaze(tf.t, tf.gaze.as_vector())
        self.last_warned = bool(w1 or w2 or w3 or w4 or w5)
        if self.last_warned:
            log.warning("non-monotonic timestamp %.6f; smoother holding previous output", tf.t)
        return TrackedFrame(
            t=tf.t,
            identity=tf.identity,
            expression=beta,
            pose=Pose(rotation=quat_normalize(q), scale=float(s[0]), translation=tr),
            gaze=GazeState(left=gz[:2], right=gz[2:], left_valid=tf.gaze.left_valid, right_valid=tf.gaze.right_valid),
            residual_rmse=tf.residual_rmse,
            stale=tf.stale,
        )


# ---------------------------------------------------------------------------
# Streaming tracker
# ---------------------------------------------------------------------------

class Tracker:
    """Stateful per-frame tracker.

    When built without identity coefficients it buffers the first
    cfg.calibration_frames frames, runs the joint identity fit on them, and
    freezes the result; until then frames are tracked against the mean head.
    """

    def __init__(self, model: FaceModel, cfg: SolverConfig | None = None, identity: np.ndarray | None = None):
        self.model = model
        self.cfg = cfg or SolverConfig()
        self.identity = None if identity is None else np.asarray(identity, dtype=np.float64).copy()
        self.calibrated = identity is not None
        self.smoother = FrameSmoother(self.cfg.smoother)
        self.last: TrackedFrame | None = None
        self._raw_pose: Pose | None = None
        self._raw_beta: np.ndarray | None = None
        self._raw_gaze: GazeState | None = None
        self._pending: list[LandmarkFrame] = []
        self._mean, self._id_b, self._exp_b = _landmark_bases(model)

    def _calibrate_if_ready(self, lf: LandmarkFrame) -> None:
        if self.calibrated:
            return
        self._pending.append(lf)
        if len(self._pending) >= self.cfg.calibration_frames:
            alpha, _ = fit_identity(self.model, self._pending, self.cfg)
            self.identity = alpha
            self.calibrated = True
            self._pending = []
            log.info("identity calibrated from %d frames", self.cfg.calibration_frames)

    def track_frame(self, lf: LandmarkFrame) -> TrackedFrame:
        if landmarks_collinear(lf.points):
            if self.last is None:
                raise DegenerateConfiguration("first frame landmarks are degenerate")
            stale = replace(self.last, t=lf.t, stale=True)
            self.last = stale
            return stale

        self._calibrate_if_ready(lf)
        alpha = self.identity if self.identity is not None else np.zeros(self.model.n_id)
        beta = self._raw_beta if self._raw_beta is not None else np.zeros(self.model.n_exp)

        pose = self._raw_pose
        for _ in range(max(1, self.cfg.outer_iters)):
            ref = self._mean + self._id_b @ alpha + self._exp_b @ beta
            pose = refine_pose(pose, lf.points, ref, self.cfg) if pose is not None else refine_pose(initial_pose(lf.points, ref), lf.points, ref, self.cfg)
            beta = fit_expression(self.model, alpha, pose, lf.points, self.cfg)

        gaze = estimate_gaze(lf, self._raw_gaze)
        ref = self._mean + self._id_b @ alpha + self._exp_b @ beta
        rmse = reprojection_rmse(pose, lf.points, ref)
        raw = TrackedFrame(
            t=lf.t,
            identity=alpha.copy(),
            expression=beta,
            pose=pose,
            gaze=gaze,
            residual_rmse=rmse,
        )
        self._raw_pose = pose
        self._raw_beta = beta
        self._raw_gaze = gaze
        out = self.smoother.apply(raw)
        self.last = out
        return out


def track_clip(model: FaceModel, frames: list[LandmarkFrame], cfg: SolverConfig | None = None):
    """Batch tracking of a whole clip with a jointly fit identity.

    Calibrates identity over every usable frame, then replays the clip
    through the smoother.  Degenerate frames repeat the previous output with
    the stale flag set (leading degenerate frames are dropped).  Returns
    (alpha, tracked frames, pose statistics of the smoothed output).
    """
    from .reenact import pose_stats_from  # local import: reenact imports this module

    cfg = cfg or SolverConfig()
    usable_idx = [i for i, f in enumerate(frames) if not landmarks_collinear(f.points)]
    if not usable_idx:
        raise DegenerateConfiguration("all frames in the clip are degenerate")
    alpha, per_frame = fit_identity(model, [frames[i] for i in usable_idx], cfg)

    mean, id_b, exp_b = _landmark_bases(model)
    smoother = FrameSmoother(cfg.smoother)
    prev_gaze: GazeState | None = None
    last: TrackedFrame | None = None
    results: list[TrackedFrame] = []
    j = 0
    dropped_leading = 0
    for i, lf in enumerate(frames):
        if j < len(usable_idx) and usable_idx[j] == i:
            pose, beta = per_frame[j]
            j += 1
            gaze = estimate_gaze(lf, prev_gaze)
            prev_gaze = gaze
            ref = mean + id_b @ alpha + exp_b @ beta
            raw = TrackedFrame(
                t=lf.t,
                identity=alpha.copy(),
                expression=beta,
                pose=pose,
                gaze=gaze,
                residual_rmse=reprojection_rmse(pose, lf.points, ref),
            )
            last = smoother.apply(raw)
            results.append(last)
        elif last is not None:
            results.append(replace(last, t=lf.t, stale=True))
        else:
            dropped_leading += 1
    if dropped_leading:
        log.warning("dropped %d leading degenerate frame(s)", dropped_leading)
    # Stats over the smoothed output, stale repeats included: the same basis
    # a profile built from these frames uses, so self-retargeting is exact.
    stats = pose_stats_from([r.pose for r in results])
    return alpha, results, stats


# ---------------------------------------------------------------------------
# Landmark stream files (one JSON object per line)
# ---------------------------------------------------------------------------

def read_landmark_stream(path: str) -> list[LandmarkFrame]:
    frames = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                pts = np.asarray(obj["pts"], dtype=np.float64).reshape(N_LANDMARKS, 2)
                iris = obj.get("iris")
                frames.append(
                    LandmarkFrame(
                        t=float(obj["t"]),
                        points=pts,
                        iris=None if iris is None else np.asarray(iris, dtype=np.float64).reshape(2, 2),
                        frame_size=(int(obj["w"]), int(obj["h"])),
                    )
                )
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}:{line_no}: bad landmark record: {exc}") from exc
    return frames


def write_landmark_stream(path: str, frames: list[LandmarkFrame]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in frames:
            obj = {
                "t": f.t,
                "w": int(f.frame_size[0]),
                "h": int(f.frame_size[1]),
                "pts": [float(v) for v in f.points.reshape(-1)],
                "iris": None if f.iris is None else [float(v) for v in f.iris.reshape(-1)],
            }
            fh.write(json.dumps(obj) + "\n")
