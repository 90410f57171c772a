"""Quaternion rotations and the weak-perspective camera.

Conventions used everywhere in this package:

* quaternions are (w, x, y, z), unit norm for a valid pose;
* the camera frame has x right, y down, z pointing into the scene, so a
  smaller rotated z is closer to the camera;
* projection is scaled orthographic: p2d = s * (R(q) @ p)[:2] + t, with s in
  pixels per model unit and t in pixels.  Rotated z is kept only for
  occlusion, it never shrinks x/y.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

QUAT_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


@dataclass
class Pose:
    """Rigid head pose under the weak-perspective camera."""

    rotation: np.ndarray = field(default_factory=lambda: QUAT_IDENTITY.copy())
    scale: float = 1.0
    translation: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        self.scale = float(self.scale)

    def copy(self) -> "Pose":
        return Pose(self.rotation.copy(), self.scale, self.translation.copy())

    def as_theta(self) -> np.ndarray:
        """Flat parameter vector (qw, qx, qy, qz, s, tx, ty) used by the solvers."""
        return np.concatenate([self.rotation, [self.scale], self.translation])

    @staticmethod
    def from_theta(theta: np.ndarray) -> "Pose":
        theta = np.asarray(theta, dtype=np.float64)
        return Pose(theta[:4].copy(), float(theta[4]), theta[5:7].copy())


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q)


def quat_angle(qa: np.ndarray, qb: np.ndarray) -> float:
    """Geodesic rotation angle in radians between two unit quaternions."""
    d = abs(float(np.dot(quat_normalize(qa), quat_normalize(qb))))
    return 2.0 * float(np.arccos(min(1.0, d)))


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * float(angle)
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def rotation_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix for a quaternion, valid for any nonzero q.

    The normalized form R = M(q) / |q|^2 keeps the function well defined away
    from the unit sphere, which the pose solver relies on when it
    differentiates through raw quaternion coordinates.
    """
    w, x, y, z = np.asarray(q, dtype=np.float64)
    n = w * w + x * x + y * y + z * z
    if n <= 0.0 or not np.isfinite(n):
        raise ValueError("quaternion norm must be positive and finite")
    m = np.array(
        [
            [w * w + x * x - y * y - z * z, 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), w * w - x * x + y * y - z * z, 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), w * w - x * x - y * y + z * z],
        ]
    )
    return m / n


def rotation_matrix_jacobian(q: np.ndarray) -> np.ndarray:
    """d rotation_matrix / d q_k as a (4, 3, 3) stack."""
    w, x, y, z = np.asarray(q, dtype=np.float64)
    n = w * w + x * x + y * y + z * z
    r = rotation_matrix(q)
    dm = np.array(
        [
            [[2 * w, -2 * z, 2 * y], [2 * z, 2 * w, -2 * x], [-2 * y, 2 * x, 2 * w]],
            [[2 * x, 2 * y, 2 * z], [2 * y, -2 * x, -2 * w], [2 * z, 2 * w, -2 * x]],
            [[-2 * y, 2 * x, 2 * w], [2 * x, 2 * y, 2 * z], [-2 * w, 2 * z, -2 * y]],
            [[-2 * z, -2 * w, 2 * x], [2 * w, -2 * z, 2 * y], [2 * x, 2 * y, 2 * z]],
        ],
        dtype=np.float64,
    )
    qv = np.array([w, x, y, z])
    return dm / n - (2.0 * qv / n)[:, None, None] * r[None, :, :]


def quat_from_rotation_matrix(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w >= 0) for a proper rotation matrix."""
    r = np.asarray(r, dtype=np.float64)
    tr = r[0, 0] + r[1, 1] + r[2, 2]
    if tr > 0.0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = np.array([0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s])
    elif r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
        s = 2.0 * np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
        q = np.array([(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s])
    elif r[1, 1] >= r[2, 2]:
        s = 2.0 * np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2])
        q = np.array([(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1])
        q = np.array([(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s])
    q = quat_normalize(q)
    if q[0] < 0.0:
        q = -q
    return q


def rotate_points(points: np.ndarray, pose: Pose) -> np.ndarray:
    """Camera-frame coordinates of model points; column 2 is depth."""
    r = rotation_matrix(pose.rotation)
    return np.asarray(points, dtype=np.float64) @ r.T


def project_points(points: np.ndarray, pose: Pose) -> np.ndarray:
    """Weak-perspective image positions, (N, 2) pixels."""
    cam = rotate_points(points, pose)
    return pose.scale * cam[:, :2] + pose.translation


def project_theta(theta: np.ndarray, points: np.ndarray) -> np.ndarray:
    """project_points on a flat parameter vector; the function the pose solver
    differentiates, kept separate so tests can finite-difference it directly."""
    return project_points(points, Pose.from_theta(theta))


def projection_jacobian(theta: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Analytic Jacobian of project_theta, shape (2N, 7).

    Row 2i is d p_i.x / d theta, row 2i+1 is d p_i.y.  Columns follow
    (qw, qx, qy, qz, s, tx, ty).
    """
    theta = np.asarray(theta, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    q, s = theta[:4], theta[4]
    n = points.shape[0]
    r = rotation_matrix(q)
    dr = rotation_matrix_jacobian(q)

    jac = np.zeros((2 * n, 7))
    cam = points @ r.T
    for k in range(4):
        dcam = points @ dr[k].T
        jac[0::2, k] = s * dcam[:, 0]
        jac[1::2, k] = s * dcam[:, 1]
    jac[0::2, 4] = cam[:, 0]
    jac[1::2, 4] = cam[:, 1]
    jac[0::2, 5] = 1.0
    jac[1::2, 6] = 1.0
    return jac


def nearest_rotation_from_rows(r1: np.ndarray, r2: np.ndarray) -> np.ndarray:
    """Proper rotation whose first two rows are nearest to r1, r2 (via SVD)."""
    b = np.stack([r1, r2]).astype(np.float64)
    u, _, vt = np.linalg.svd(b, full_matrices=False)
    rows = u @ vt
    r3 = np.cross(rows[0], rows[1])
    return np.vstack([rows, r3])
