"""Linear face model: mean shape plus identity and expression bases.

Shapes are synthesized as mean + id_basis @ alpha + exp_basis @ beta over the
flattened 3V coordinate vector.  Models live on disk as a directory with a
model.json manifest and raw little-endian blobs; all float payloads are 32-bit
so a save/load round trip is exact.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull

from .errors import BlobSizeMismatch, DataError, InvalidModel, TooFewVertices

N_LANDMARKS = 68
# iBUG-68 index groups used by several modules.
JAW = list(range(0, 17))
NOSE = list(range(27, 36))
LEFT_EYE = list(range(36, 42))
RIGHT_EYE = list(range(42, 48))
MOUTH = list(range(48, 68))

_BLOB_NAMES = {
    "mean": "blobs/mean.f32",
    "id_basis": "blobs/id.f32",
    "exp_basis": "blobs/exp.f32",
    "triangles": "blobs/tri.u32",
}


@dataclass
class EyeMeta:
    """Vertex ids for the eyelid rings and the nominal pupil vertices."""

    left_contour: np.ndarray
    right_contour: np.ndarray
    left_pupil: int
    right_pupil: int

    def __post_init__(self):
        self.left_contour = np.asarray(self.left_contour, dtype=np.int64)
        self.right_contour = np.asarray(self.right_contour, dtype=np.int64)
        self.left_pupil = int(self.left_pupil)
        self.right_pupil = int(self.right_pupil)


@dataclass
class FaceModel:
    name: str
    mean_shape: np.ndarray  # (V, 3) float32, centroid at the origin
    id_basis: np.ndarray  # (3V, K_id) float32, orthonormal columns
    exp_basis: np.ndarray  # (3V, K_exp) float32, orthonormal columns
    triangles: np.ndarray  # (T, 3) uint32, outward winding
    landmark_map: np.ndarray  # (68,) int64, distinct vertex ids
    eye_meta: EyeMeta

    @property
    def n_vertices(self) -> int:
        return self.mean_shape.shape[0]

    @property
    def n_id(self) -> int:
        return self.id_basis.shape[1]

    @property
    def n_exp(self) -> int:
        return self.exp_basis.shape[1]

    def validate(self) -> None:
        v = self.n_vertices
        if self.mean_shape.shape != (v, 3):
            raise InvalidModel(f"mean_shape must be (V, 3), got {self.mean_shape.shape}")
        if self.id_basis.shape[0] != 3 * v or self.exp_basis.shape[0] != 3 * v:
            raise InvalidModel("basis rows must equal 3*V when flattened")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise InvalidModel(f"triangles must be (T, 3), got {self.triangles.shape}")
        if self.triangles.size and int(self.triangles.max()) >= v:
            bad = int(self.triangles.max())
            raise InvalidModel(f"triangle vertex index {bad} out of range for V={v}")
        if self.landmark_map.shape != (N_LANDMARKS,):
            raise InvalidModel(f"landmark_map must hold {N_LANDMARKS} entries")
        if len(set(self.landmark_map.tolist())) != N_LANDMARKS:
            raise InvalidModel("landmark_map entries must be distinct")
        if self.landmark_map.min() < 0 or int(self.landmark_map.max()) >= v:
            raise InvalidModel("landmark_map index out of range")
        for ids in (self.eye_meta.left_contour, self.eye_meta.right_contour):
            if ids.min() < 0 or int(ids.max()) >= v:
                raise InvalidModel("eye contour vertex id out of range")
        for pid in (self.eye_meta.left_pupil, self.eye_meta.right_pupil):
            if not 0 <= pid < v:
                raise InvalidModel(f"pupil vertex id {pid} out of range")
        if not (np.isfinite(self.mean_shape).all() and np.isfinite(self.id_basis).all() and np.isfinite(self.exp_basis).all()):
            raise InvalidModel("model arrays must be finite")
        centroid = np.linalg.norm(self.mean_shape.astype(np.float64).mean(axis=0))
        diag = float(np.linalg.norm(self.mean_shape.max(axis=0) - self.mean_shape.min(axis=0)))
        if centroid > 1e-9 * max(diag, 1e-30):
            raise InvalidModel(f"mean shape not centered: |centroid| = {centroid:.3e}")


@dataclass
class NmfcPalette:
    """Fixed per-vertex color map: mean-shape coordinates normalized to [0, 1]."""

    colors: np.ndarray  # (V, 3) float64


def synthesize_shape(model: FaceModel, alpha, beta) -> np.ndarray:
    """Mesh vertices (V, 3) float64 for identity and expression coefficients."""
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    if alpha.shape[0] != model.n_id:
        raise DataError(f"alpha has {alpha.shape[0]} coefficients, model expects K_id={model.n_id}")
    if beta.shape[0] != model.n_exp:
        raise DataError(f"beta has {beta.shape[0]} coefficients, model expects K_exp={model.n_exp}")
    flat = (
        model.mean_shape.astype(np.float64).reshape(-1)
        + model.id_basis.astype(np.float64) @ alpha
        + model.exp_basis.astype(np.float64) @ beta
    )
    return flat.reshape(-1, 3)


def landmark_positions(model: FaceModel, mesh: np.ndarray) -> np.ndarray:
    """Gather the 68 landmark vertex rows from a synthesized mesh."""
    return np.asarray(mesh)[model.landmark_map]


def nmfc_palette(model: FaceModel) -> NmfcPalette:
    mean = model.mean_shape.astype(np.float64)
    lo = mean.min(axis=0)
    extent = mean.max(axis=0) - lo
    colors = np.empty_like(mean)
    for axis in range(3):
        if extent[axis] <= 0.0:
            colors[:, axis] = 0.5
        else:
            colors[:, axis] = (mean[:, axis] - lo[axis]) / extent[axis]
    return NmfcPalette(colors=colors)


def save_model(model: FaceModel, path: str) -> None:
    """Write model.json plus raw blobs; output bytes depend only on the model."""
    model.validate()
    os.makedirs(os.path.join(path, "blobs"), exist_ok=True)
    manifest = {
        "name": model.name,
        "vertices": model.n_vertices,
        "k_id": model.n_id,
        "k_exp": model.n_exp,
        "triangles": int(model.triangles.shape[0]),
        "landmark_map": [int(i) for i in model.landmark_map],
        "eye_meta": {
            "left_contour": [int(i) for i in model.eye_meta.left_contour],
            "right_contour": [int(i) for i in model.eye_meta.right_contour],
            "left_pupil": model.eye_meta.left_pupil,
            "right_pupil": model.eye_meta.right_pupil,
        },
        "blobs": dict(_BLOB_NAMES),
    }
    with open(os.path.join(path, "model.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    blobs = {
        "mean": np.ascontiguousarray(model.mean_shape.reshape(-1), dtype="<f4"),
        "id_basis": np.ascontiguousarray(model.id_basis, dtype="<f4"),
        "exp_basis": np.ascontiguousarray(model.exp_basis, dtype="<f4"),
        "triangles": np.ascontiguousarray(model.triangles.reshape(-1), dtype="<u4"),
    }
    for key, arr in blobs.items():
        with open(os.path.join(path, _BLOB_NAMES[key]), "wb") as fh:
            fh.write(arr.tobytes())


def _read_blob(path: str, rel: str, dtype: str, count: int, what: str) -> np.ndarray:
    full = os.path.join(path, rel)
    if not os.path.exists(full):
        raise DataError(f"missing blob file: {full}")
    raw = np.fromfile(full, dtype=dtype)
    if raw.size != count:
        raise BlobSizeMismatch(f"{what} blob {rel} holds {raw.size} elements, metadata expects {count}")
    return raw


def load_model(path: str) -> FaceModel:
    manifest_path = os.path.join(path, "model.json")
    if not os.path.exists(manifest_path):
        raise DataError(f"missing model manifest: {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"unparseable model.json: {exc}") from exc
    try:
        v = int(meta["vertices"])
        k_id = int(meta["k_id"])
        k_exp = int(meta["k_exp"])
        n_tri = int(meta["triangles"])
        blobs = meta["blobs"]
        eye = meta["eye_meta"]
        model = FaceModel(
            name=str(meta["name"]),
            mean_shape=_read_blob(path, blobs["mean"], "<f4", 3 * v, "mean").reshape(v, 3),
            id_basis=_read_blob(path, blobs["id_basis"], "<f4", 3 * v * k_id, "id basis").reshape(3 * v, k_id),
            exp_basis=_read_blob(path, blobs["exp_basis"], "<f4", 3 * v * k_exp, "exp basis").reshape(3 * v, k_exp),
            triangles=_read_blob(path, blobs["triangles"], "<u4", 3 * n_tri, "triangle").reshape(n_tri, 3),
            landmark_map=np.asarray(meta["landmark_map"], dtype=np.int64),
            eye_meta=EyeMeta(
                left_contour=eye["left_contour"],
                right_contour=eye["right_contour"],
                left_pupil=eye["left_pupil"],
                right_pupil=eye["right_pupil"],
            ),
        )
    except KeyError as exc:
        raise DataError(f"model.json missing field {exc}") from exc
    model.validate()
    return model


# ---------------------------------------------------------------------------
# Synthetic model generator
# ---------------------------------------------------------------------------

# Semi-axes of the head ellipsoid and the face-plane scaling that maps the
# canonical landmark layout onto its front (negative z) side.
_AXES = np.array([0.78, 1.05, 0.88])
_PLANE_SCALE = np.array([0.80 * _AXES[0], 0.82 * _AXES[1]])
# Forward offsets (toward the camera) that pull the nose landmarks off the
# quadric so the landmark cloud has usable depth structure.
_NOSE_BUMP = [0.010, 0.025, 0.045, 0.065, 0.030, 0.045, 0.055, 0.045, 0.030]


def _landmark_layout() -> np.ndarray:
    """Canonical 68-point face layout in face-plane units (u right, v down)."""
    uv = np.zeros((N_LANDMARKS, 2))
    ang = np.pi * np.arange(17) / 16.0
    uv[JAW, 0] = -0.92 * np.cos(ang)
    uv[JAW, 1] = 0.10 + 0.80 * np.sin(ang)
    j = np.arange(5)
    uv[17:22, 0] = -0.62 + 0.10 * j
    uv[17:22, 1] = -0.46 - 0.10 * np.sin(np.pi * j / 4.0)
    uv[22:27, 0] = 0.22 + 0.10 * j
    uv[22:27, 1] = -0.46 - 0.10 * np.sin(np.pi * j / 4.0)
    uv[27:31, 0] = 0.0
    uv[27:31, 1] = -0.36 + 0.13 * np.arange(4)
    uv[31:36, 0] = -0.15 + 0.075 * j
    uv[31:36, 1] = 0.18 - 0.006 * (j - 2.0) ** 2
    for start, center, a, b, angles in (
        (36, (-0.38, -0.30), 0.145, 0.075, (180, 120, 60, 0, 300, 240)),
        (42, (0.38, -0.30), 0.145, 0.075, (180, 120, 60, 0, 300, 240)),
        (48, (0.0, 0.48), 0.30, 0.13, (180, 150, 120, 90, 60, 30, 0, 330, 300, 270, 240, 210)),
        (60, (0.0, 0.48), 0.19, 0.055, (180, 135, 90, 45, 0, 315, 270, 225)),
    ):
        rad = np.deg2rad(np.asarray(angles, dtype=np.float64))
        uv[start : start + len(angles), 0] = center[0] + a * np.cos(rad)
        uv[start : start + len(angles), 1] = center[1] - b * np.sin(rad)
    return uv


def _on_front_surface(uv: np.ndarray) -> np.ndarray:
    """Map face-plane points onto the front of the ellipsoid (z < 0)."""
    xy = uv * _PLANE_SCALE
    radicand = 1.0 - (xy[:, 0] / _AXES[0]) ** 2 - (xy[:, 1] / _AXES[1]) ** 2
    z = -_AXES[2] * np.sqrt(np.maximum(radicand, 0.04))
    return np.column_stack([xy, z])


def _fibonacci_ellipsoid(n: int) -> np.ndarray:
    i = np.arange(n, dtype=np.float64)
    zz = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - zz * zz))
    th = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.column_stack([r * np.cos(th), r * np.sin(th), zz]) * _AXES


def _recenter_f32(points: np.ndarray, adjust_vertex: int) -> np.ndarray:
    """Center the cloud and absorb float32 rounding into one designated vertex
    so the stored mean satisfies the centering invariant exactly enough."""
    pts = (points - points.mean(axis=0)).astype(np.float32)
    for _ in range(4):
        total = pts.astype(np.float64).sum(axis=0)
        if np.all(np.abs(total) / len(pts) <= 1e-10):
            break
        for axis in range(3):
            pts[adjust_vertex, axis] = np.float32(float(pts[adjust_vertex, axis]) - total[axis])
    return pts


def _sparse_orthonormal_basis(rng: np.random.Generator, coord_pool: np.ndarray, n_columns: int, rows: int) -> np.ndarray:
    """Exactly orthonormal float32 basis: columns with disjoint supports inside
    coord_pool and power-of-two entries, so Gram(B) is the identity bit for bit
    even after 32-bit storage."""
    if 4 * n_columns <= coord_pool.size:
        support = 4
        value = 0.5
    elif n_columns <= coord_pool.size:
        support = 1
        value = 1.0
    else:
        raise DataError(
            f"cannot host {n_columns} orthonormal columns on {coord_pool.size} landmark coordinates"
        )
    order = rng.permutation(coord_pool)
    basis = np.zeros((rows, n_columns), dtype=np.float32)
    for k in range(n_columns):
        idx = order[support * k : support * (k + 1)]
        signs = np.where(rng.random(support) < 0.5, -1.0, 1.0)
        basis[idx, k] = (value * signs).astype(np.float32)
    return basis


def make_synthetic_model(seed: int = 0, n_vertices: int = 3000, n_id: int = 20, n_exp: int = 20, name: str | None = None) -> FaceModel:
    """Deterministic head-like test model.

    The mean is an ellipsoid head with the 68 landmark vertices embedded on
    its front side and two pupil vertices raised slightly off the surface.
    Identity and expression bases are orthonormal with disjoint supports on
    landmark coordinates, which keeps every coefficient observable from the
    2D landmarks alone.
    """
    n_special = N_LANDMARKS + 2
    if n_vertices < n_special:
        raise TooFewVertices(f"need at least {n_special} vertices, got {n_vertices}")
    if n_id < 1 or n_exp < 1:
        raise DataError("n_id and n_exp must be at least 1")
    rng = np.random.default_rng(seed)

    landmarks = _on_front_surface(_landmark_layout())
    landmarks[NOSE, 2] -= _NOSE_BUMP
    pupils = _on_front_surface(np.array([[-0.38, -0.30], [0.38, -0.30]]))
    pupils[:, 2] -= 0.03
    special = np.vstack([landmarks, pupils])

    candidates = _fibonacci_ellipsoid(n_vertices + 256)
    keep = np.ones(len(candidates), dtype=bool)
    for p in special:
        keep &= np.linalg.norm(candidates - p, axis=1) > 0.035
    fill = candidates[keep][: n_vertices - n_special]
    if fill.shape[0] < n_vertices - n_special:
        raise TooFewVertices("fill point generation exhausted; lower n_vertices")

    perm = rng.permutation(n_vertices)
    points = np.empty((n_vertices, 3))
    points[perm[:n_special]] = special
    points[perm[n_special:]] = fill
    # Rounding slack lands on a fill vertex, or on a pupil when there is none.
    adjust = int(perm[n_special]) if n_vertices > n_special else int(perm[N_LANDMARKS])
    mean = _recenter_f32(points, adjust_vertex=adjust)

    hull = ConvexHull(mean.astype(np.float64))
    tris = hull.simplices.astype(np.int64)
    pts64 = mean.astype(np.float64)
    normals = np.cross(pts64[tris[:, 1]] - pts64[tris[:, 0]], pts64[tris[:, 2]] - pts64[tris[:, 0]])
    flip = np.einsum("ij,ij->i", normals, hull.equations[:, :3]) < 0.0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    # Canonical triangle order: smallest vertex first (cyclic, keeps winding),
    # rows sorted, so the on-disk layout is stable and tidy.
    roll = np.argmin(tris, axis=1)
    tris = np.stack([tris[np.arange(len(tris)), (roll + k) % 3] for k in range(3)], axis=1)
    tris = tris[np.lexsort((tris[:, 2], tris[:, 1], tris[:, 0]))]

    landmark_map = perm[:N_LANDMARKS].astype(np.int64)
    coord_pool = (3 * landmark_map[:, None] + np.arange(3)[None, :]).reshape(-1)
    basis = _sparse_orthonormal_basis(rng, coord_pool, n_id + n_exp, rows=3 * n_vertices)

    model = FaceModel(
        name=name or f"synthetic-{seed}",
        mean_shape=mean,
        id_basis=basis[:, :n_id].copy(),
        exp_basis=basis[:, n_id:].copy(),
        triangles=tris.astype(np.uint32),
        landmark_map=landmark_map,
        eye_meta=EyeMeta(
            left_contour=landmark_map[LEFT_EYE],
            right_contour=landmark_map[RIGHT_EYE],
            left_pupil=int(perm[N_LANDMARKS]),
            right_pupil=int(perm[N_LANDMARKS + 1]),
        ),
    )
    model.validate()
    return model
