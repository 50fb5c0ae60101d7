"""Shared geometric and image primitives.

Conventions used throughout the package:

- Camera frame: +X right, +Y down, +Z forward.  Pixel u runs along +X
  (columns), pixel v along +Y (rows), so image arrays are indexed
  ``img[v, u]``.
- Poses are camera-to-world rigid transforms (4x4, row-major when
  serialized).
- Depth images store the camera-frame z coordinate in meters, with 0
  encoding "no measurement".

All types are plain immutable containers; nothing here mutates after
construction, so instances can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

ROTATION_TOL = 1e-6
NORMAL_TOL = 1e-4


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera intrinsics in pixel units."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width):
            raise ValueError(f"cx={self.cx} outside [0, {self.width})")
        if not (0 <= self.cy < self.height):
            raise ValueError(f"cy={self.cy} outside [0, {self.height})")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class Pose:
    """Camera-to-world rigid transform.

    The top-left 3x3 block must be a proper rotation (orthonormal,
    det = +1 within 1e-6) and the last row (0, 0, 0, 1).
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"pose matrix must be 4x4, got {m.shape}")
        r = m[:3, :3]
        if not np.allclose(r @ r.T, np.eye(3), atol=ROTATION_TOL):
            raise ValueError("pose rotation block is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ROTATION_TOL:
            raise ValueError("pose rotation block has det != +1")
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=ROTATION_TOL):
            raise ValueError("pose last row must be (0, 0, 0, 1)")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(4))

    @staticmethod
    def from_rotation_translation(rotation: np.ndarray, translation: np.ndarray) -> "Pose":
        m = np.eye(4)
        m[:3, :3] = rotation
        m[:3, 3] = translation
        return Pose(m)

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:3, 3]

    def inverse(self) -> "Pose":
        r = self.rotation.T
        return Pose.from_rotation_translation(r, -r @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """Returns the pose applying ``other`` first, then ``self``."""
        return Pose(self.matrix @ other.matrix)

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = pts @ self.rotation.T + self.translation
        return out[0] if np.asarray(points).ndim == 1 else out

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = (pts - self.translation) @ self.rotation
        return out[0] if np.asarray(points).ndim == 1 else out


def project(point_cam, intr: Intrinsics) -> Optional[Tuple[float, float, float]]:
    """Projects a camera-frame point to pixel coordinates.

    Returns (u, v, z) with u = fx*x/z + cx, v = fy*y/z + cy, or None when
    the point is at or behind the camera plane (z <= 0) or outside the
    image bounds.
    """
    x, y, z = float(point_cam[0]), float(point_cam[1]), float(point_cam[2])
    if z <= 0.0:
        return None
    u = intr.fx * x / z + intr.cx
    v = intr.fy * y / z + intr.cy
    if not (0.0 <= u <= intr.width - 1 and 0.0 <= v <= intr.height - 1):
        return None
    return (u, v, z)


def project_points(points_cam: np.ndarray, intr: Intrinsics):
    """Vectorized projection of (N, 3) camera-frame points.

    Returns (u, v, z, valid); u/v/z are undefined where valid is False.
    """
    pts = np.asarray(points_cam, dtype=np.float64)
    z = pts[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * pts[:, 0] / z + intr.cx
        v = intr.fy * pts[:, 1] / z + intr.cy
    valid = (
        (z > 0.0)
        & (u >= 0.0)
        & (u <= intr.width - 1)
        & (v >= 0.0)
        & (v <= intr.height - 1)
    )
    return u, v, z, valid


def unproject(u: float, v: float, depth: float, intr: Intrinsics) -> np.ndarray:
    """Back-projects a pixel with known depth into the camera frame."""
    if depth <= 0:
        raise ValueError(f"depth must be positive, got {depth}")
    return np.array(
        [(u - intr.cx) * depth / intr.fx, (v - intr.cy) * depth / intr.fy, depth]
    )


def unproject_pixels(u: np.ndarray, v: np.ndarray, depth: np.ndarray, intr: Intrinsics) -> np.ndarray:
    """Vectorized unprojection; all inputs are 1-D arrays of equal length."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    return np.stack(
        [(u - intr.cx) * depth / intr.fx, (v - intr.cy) * depth / intr.fy, depth],
        axis=1,
    )


def transform(pose: Pose, point_world) -> np.ndarray:
    """Maps a world-frame point into the camera frame of ``pose``."""
    return pose.world_to_camera(point_world)


@dataclass(frozen=True)
class DepthImage:
    """Per-pixel depth in meters; 0 encodes an invalid / missing pixel."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError(f"depth image must be 2-D, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("depth image contains non-finite values")
        if np.any(vals < 0):
            raise ValueError("depth image contains negative values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def valid(self) -> np.ndarray:
        return self.values > 0


@dataclass(frozen=True)
class LabelImage:
    """Per-pixel non-negative integer mask ids; 0 is reserved for "no mask"."""

    ids: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids)
        if ids.ndim != 2:
            raise ValueError(f"label image must be 2-D, got shape {ids.shape}")
        if not np.issubdtype(ids.dtype, np.integer):
            raise ValueError("label image must be integer typed")
        if ids.size and (ids.min() < 0 or ids.max() > 0xFFFF):
            raise ValueError("label ids must fit in 16 bits")
        ids = ids.astype(np.int32)
        ids.setflags(write=False)
        object.__setattr__(self, "ids", ids)

    @property
    def width(self) -> int:
        return self.ids.shape[1]

    @property
    def height(self) -> int:
        return self.ids.shape[0]


@dataclass(frozen=True)
class PointCloud:
    """Points in meters with optional per-point color / normal / instance channels."""

    positions: np.ndarray
    colors: Optional[np.ndarray] = None
    normals: Optional[np.ndarray] = None
    instance_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        n = len(pos)
        if self.colors is not None:
            cols = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(cols) != n:
                raise ValueError(f"colors length {len(cols)} != positions length {n}")
            if cols.size and (cols.min() < 0 or cols.max() > 1):
                raise ValueError("colors must lie in [0, 1]")
            cols.setflags(write=False)
            object.__setattr__(self, "colors", cols)
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(nrm) != n:
                raise ValueError(f"normals length {len(nrm)} != positions length {n}")
            if nrm.size:
                norms = np.linalg.norm(nrm, axis=1)
                if np.any(np.abs(norms - 1.0) > NORMAL_TOL):
                    raise ValueError("normals must have unit norm")
            nrm.setflags(write=False)
            object.__setattr__(self, "normals", nrm)
        if self.instance_ids is not None:
            ids = np.asarray(self.instance_ids).reshape(-1).astype(np.int64)
            if len(ids) != n:
                raise ValueError(f"instance_ids length {len(ids)} != positions length {n}")
            if ids.size and ids.min() < 0:
                raise ValueError("instance ids must be non-negative")
            ids.setflags(write=False)
            object.__setattr__(self, "instance_ids", ids)

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class TriMesh:
    """Triangle mesh; zero-area faces are dropped at construction."""

    vertices: np.ndarray
    faces: np.ndarray
    colors: Optional[np.ndarray] = None
    n_degenerate: int = 0

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if faces.size and faces.max() >= len(verts):
            raise ValueError("face index out of range")
        if faces.size and faces.min() < 0:
            raise ValueError("negative face index")
        if faces.size:
            a = verts[faces[:, 1]] - verts[faces[:, 0]]
            b = verts[faces[:, 2]] - verts[faces[:, 0]]
            area2 = np.linalg.norm(np.cross(a, b), axis=1)
            keep = area2 > 1e-14
            object.__setattr__(self, "n_degenerate", int((~keep).sum()))
            faces = faces[keep]
        verts.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)
        if self.colors is not None:
            cols = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(cols) != len(verts):
                raise ValueError("per-vertex colors length mismatch")
            cols.setflags(write=False)
            object.__setattr__(self, "colors", cols)


@dataclass(frozen=True)
class CameraView:
    """One frame: pose + intrinsics plus whatever images are attached.

    ``labels`` maps a mask-source name ("color", "depth", "oracle", ...)
    to that source's label image.  All attached images must match the
    intrinsics' width/height.
    """

    pose: Pose
    intrinsics: Intrinsics
    depth: Optional[DepthImage] = None
    color: Optional[np.ndarray] = None
    labels: Dict[str, LabelImage] = field(default_factory=dict)

    def __post_init__(self):
        w, h = self.intrinsics.width, self.intrinsics.height
        if self.depth is not None and (self.depth.width, self.depth.height) != (w, h):
            raise ValueError("depth image size does not match intrinsics")
        if self.color is not None:
            if self.color.shape[:2] != (h, w):
                raise ValueError("color image size does not match intrinsics")
        for name, lab in self.labels.items():
            if (lab.width, lab.height) != (w, h):
                raise ValueError(f"label image '{name}' size does not match intrinsics")
