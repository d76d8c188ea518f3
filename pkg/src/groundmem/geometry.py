"""Pinhole-camera model, pose handling, and world/grid index conversions.

COORDINATE CONVENTIONS
======================
These are fixed once here and used everywhere else in the package.

World frame (right-handed):
  - x, y span the ground plane; z points up (height above the floor).
  - A robot pose is (x, y, z, theta): theta is the heading about the
    vertical axis, theta = 0 faces +x, positive theta turns toward +y
    (counterclockwise seen from above).

Image frame:
  - A pixel is addressed as (i, j) = (row, column). The homogeneous
    pixel vector used for ray shooting is (i, j, 1), in that order.
  - j (column) increases along the image-plane x axis, i.e. toward the
    camera's right. i (row) increases along the image-plane y axis.
  - Intrinsics: fx and cx act on the column coordinate, fy and cy act
    on the row coordinate. A pixel ray in camera coordinates is
    ((i - cy) / fy, (j - cx) / fx, 1), so the third camera axis is the
    optical (forward) axis and the stored depth is the distance along
    that axis, not the euclidean ray length.

Camera frame (right-handed):
  - Axis order matches the (i, j, 1) vector: axis 1 is the row
    direction, axis 2 the column direction, axis 3 the optical axis.
  - For the frame to stay right-handed (extrinsic rotations must have
    determinant +1) the row axis points physically UP at zero pitch:
    with pitch 0 and heading theta the camera looks horizontally, the
    column axis points to its right, and row indices increase skyward.
  - camera_pitch tilts the camera about its column axis; positive
    pitch looks down toward the floor.

Extrinsics map world points INTO the camera frame:
    p_cam = rotation @ p_world + translation
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, NonPositiveDepthError

__all__ = [
    "Pose",
    "CameraIntrinsics",
    "Extrinsics",
    "CellIndex",
    "GridSpec",
    "extrinsics_from_pose",
    "pixel_to_world",
    "pixels_to_world",
    "world_to_pixel",
    "world_to_pixels",
    "world_to_cell",
    "cells_from_world",
    "intrinsics_for_stride",
    "downsample_to_feature_grid",
]

_ROT_TOL = 1e-9


def _wrap_angle(theta: float) -> float:
    """Normalize an angle to [-pi, pi)."""
    return (theta + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class Pose:
    """Robot pose: ground position, height, and heading about the vertical axis."""

    x: float
    y: float
    z: float
    theta: float

    def __post_init__(self):
        for name in ("x", "y", "z", "theta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"pose field {name} must be finite")
        object.__setattr__(self, "theta", _wrap_angle(self.theta))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics. fx/cx act on columns, fy/cy on rows (see module docstring)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width):
            raise ValueError("cx must lie strictly inside the image width")
        if not (0 < self.cy < self.height):
            raise ValueError("cy must lie strictly inside the image height")


class Extrinsics:
    """World-to-camera rigid transform: p_cam = rotation @ p_world + translation."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation: np.ndarray, translation: np.ndarray):
        rotation = np.asarray(rotation, dtype=np.float64)
        translation = np.asarray(translation, dtype=np.float64).reshape(3)
        if rotation.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if not np.all(np.isfinite(rotation)) or not np.all(np.isfinite(translation)):
            raise ValueError("extrinsics entries must be finite")
        if np.max(np.abs(rotation.T @ rotation - np.eye(3))) > _ROT_TOL:
            raise ValueError("rotation must be orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > _ROT_TOL:
            raise ValueError("rotation must be proper (determinant +1)")
        self.rotation = rotation
        self.translation = translation

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        """Apply the transform to one point (3,) or a stack (..., 3)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return (pts - self.translation) @ self.rotation

    def inverse(self) -> "Extrinsics":
        return Extrinsics(self.rotation.T, -self.rotation.T @ self.translation)

    @property
    def camera_center(self) -> np.ndarray:
        """Camera origin expressed in world coordinates."""
        return -self.rotation.T @ self.translation

    def as_matrix(self) -> np.ndarray:
        """4x4 homogeneous world-to-camera matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def __repr__(self):
        return f"Extrinsics(center={self.camera_center.round(4).tolist()})"


class CellIndex(tuple):
    """Grid cell index (u, v): u counts cells along world x, v along world y."""

    __slots__ = ()

    def __new__(cls, u: int, v: int):
        if u < 0 or v < 0:
            raise ValueError("cell indices must be nonnegative")
        return super().__new__(cls, (int(u), int(v)))

    @property
    def u(self) -> int:
        return self[0]

    @property
    def v(self) -> int:
        return self[1]


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a ground-plane raster: origin corner, cell size, cell counts.

    breadth counts cells along world x, length along world y. A world
    point (x, y) falls in cell (u, v) = floor((x - x0) / cell), floor((y - y0) / cell).
    """

    origin_x: float
    origin_y: float
    cell_size: float
    breadth: int
    length: int

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.breadth < 1 or self.length < 1:
            raise ValueError("grid must contain at least one cell")

    @classmethod
    def from_extent(
        cls,
        xmin: float,
        ymin: float,
        xmax: float,
        ymax: float,
        cell_size: float = 0.2,
        pad_cells: int = 1,
    ) -> "GridSpec":
        """Cover a bounding rectangle, padded by pad_cells on every side."""
        if xmax <= xmin or ymax <= ymin:
            raise ValueError("extent must have positive area")
        breadth = math.ceil((xmax - xmin) / cell_size) + 2 * pad_cells
        length = math.ceil((ymax - ymin) / cell_size) + 2 * pad_cells
        return cls(
            origin_x=xmin - pad_cells * cell_size,
            origin_y=ymin - pad_cells * cell_size,
            cell_size=cell_size,
            breadth=breadth,
            length=length,
        )

    @property
    def n_cells(self) -> int:
        return self.breadth * self.length


def extrinsics_from_pose(
    pose: Pose, camera_height: float = 1.25, camera_pitch: float = 0.0
) -> Extrinsics:
    """Extrinsics of a camera rigidly mounted on a robot at the given pose.

    The camera sits camera_height meters above the pose's z, shares the
    pose's heading, and is tilted down by camera_pitch radians (0 means
    forward-facing). Axis conventions are in the module docstring.
    """
    ct, st = math.cos(pose.theta), math.sin(pose.theta)
    cp, sp = math.cos(camera_pitch), math.sin(camera_pitch)
    # Camera axes in world coordinates; rows of the rotation matrix.
    row_axis = (ct * sp, st * sp, cp)
    col_axis = (st, -ct, 0.0)
    fwd_axis = (ct * cp, st * cp, -sp)
    rotation = np.array([row_axis, col_axis, fwd_axis])
    center = np.array([pose.x, pose.y, pose.z + camera_height])
    return Extrinsics(rotation, -rotation @ center)


def pixel_to_world(
    i: float, j: float, depth: float, intrinsics: CameraIntrinsics, extrinsics: Extrinsics
) -> np.ndarray:
    """Shoot a ray through pixel (i, j) = (row, col) to the given depth.

    Returns the world point (x, y, z). Depth is measured along the
    optical axis.
    """
    if depth <= 0:
        raise NonPositiveDepthError(f"depth must be positive, got {depth}")
    p_cam = np.array(
        [
            depth * (i - intrinsics.cy) / intrinsics.fy,
            depth * (j - intrinsics.cx) / intrinsics.fx,
            depth,
        ]
    )
    return extrinsics.camera_to_world(p_cam)


def pixels_to_world(
    rows: np.ndarray,
    cols: np.ndarray,
    depth: np.ndarray,
    intrinsics: CameraIntrinsics,
    extrinsics: Extrinsics,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized pixel_to_world.

    Pixels with nonpositive or nonfinite depth are not projected; they
    come back flagged False in the validity mask with zeroed points.
    Returns (points (..., 3), valid (...)).
    """
    rows = np.asarray(rows, dtype=np.float64)
    cols = np.asarray(cols, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    valid = np.isfinite(depth) & (depth > 0)
    d = np.where(valid, depth, 1.0)
    p_cam = np.stack(
        [
            d * (rows - intrinsics.cy) / intrinsics.fy,
            d * (cols - intrinsics.cx) / intrinsics.fx,
            d,
        ],
        axis=-1,
    )
    points = extrinsics.camera_to_world(p_cam)
    points[~valid] = 0.0
    return points, valid


def world_to_pixel(
    point: np.ndarray, intrinsics: CameraIntrinsics, extrinsics: Extrinsics
) -> tuple[float, float, float]:
    """Project a world point into the image. Returns (i, j, depth).

    Raises BehindCameraError when the point's camera-frame depth is
    zero or negative (the point cannot be rendered). The returned pixel
    is continuous and may lie outside the image bounds; callers decide
    whether to clip.
    """
    p_cam = extrinsics.world_to_camera(np.asarray(point, dtype=np.float64))
    depth = float(p_cam[2])
    if depth <= 0:
        raise BehindCameraError(f"point has camera depth {depth}")
    i = intrinsics.cy + intrinsics.fy * p_cam[0] / depth
    j = intrinsics.cx + intrinsics.fx * p_cam[1] / depth
    return float(i), float(j), depth


def world_to_pixels(
    points: np.ndarray, intrinsics: CameraIntrinsics, extrinsics: Extrinsics
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized world_to_pixel: returns (rows, cols, depth, in_front)."""
    p_cam = extrinsics.world_to_camera(np.asarray(points, dtype=np.float64))
    depth = p_cam[..., 2]
    in_front = depth > 0
    safe = np.where(in_front, depth, 1.0)
    rows = intrinsics.cy + intrinsics.fy * p_cam[..., 0] / safe
    cols = intrinsics.cx + intrinsics.fx * p_cam[..., 1] / safe
    return rows, cols, depth, in_front


def world_to_cell(x: float, y: float, spec: GridSpec) -> CellIndex | None:
    """Ground-plane point to grid cell; None when outside the grid extent."""
    u = math.floor((x - spec.origin_x) / spec.cell_size)
    v = math.floor((y - spec.origin_y) / spec.cell_size)
    if u < 0 or v < 0 or u >= spec.breadth or v >= spec.length:
        return None
    return CellIndex(u, v)


def cells_from_world(
    xs: np.ndarray, ys: np.ndarray, spec: GridSpec
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized world_to_cell: returns (u, v, in_bounds).

    Out-of-bounds entries hold clipped indices; consult the mask.
    """
    u = np.floor((np.asarray(xs) - spec.origin_x) / spec.cell_size).astype(np.int64)
    v = np.floor((np.asarray(ys) - spec.origin_y) / spec.cell_size).astype(np.int64)
    in_bounds = (u >= 0) & (v >= 0) & (u < spec.breadth) & (v < spec.length)
    return np.clip(u, 0, spec.breadth - 1), np.clip(v, 0, spec.length - 1), in_bounds


def intrinsics_for_stride(intrinsics: CameraIntrinsics, stride: int) -> CameraIntrinsics:
    """Intrinsics of the feature-map grid obtained by center sampling.

    Feature pixel (r, c) corresponds to image pixel
    (r * stride + stride // 2, c * stride + stride // 2), so rays shot
    through feature pixels with these intrinsics coincide with rays
    through the sampled image pixels.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if intrinsics.width % stride or intrinsics.height % stride:
        raise ValueError("image size must be divisible by the stride")
    half = stride // 2
    return CameraIntrinsics(
        fx=intrinsics.fx / stride,
        fy=intrinsics.fy / stride,
        cx=(intrinsics.cx - half) / stride,
        cy=(intrinsics.cy - half) / stride,
        width=intrinsics.width // stride,
        height=intrinsics.height // stride,
    )


def downsample_to_feature_grid(image: np.ndarray, stride: int) -> np.ndarray:
    """Nearest-neighbor resample to feature-map resolution (center sampling).

    Matches intrinsics_for_stride: output pixel (r, c) is input pixel
    (r * stride + stride // 2, c * stride + stride // 2).
    """
    half = stride // 2
    return image[half::stride, half::stride]
