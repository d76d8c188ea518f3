"""Synthetic embodied data: box-world scenes, depth rendering, episodes.

Scenes are axis-aligned box worlds on a flat floor at z = 0, enclosed
by perimeter walls. Depth is rendered by slab-method ray/box
intersection, which an all-faces brute-force oracle can check exactly;
meshes would preclude that. Ground truth (visible objects with boxes
and masks) falls out of the same render via per-pixel surface owners.

Depth semantics: a pixel's depth is the distance along the camera's
optical axis to the first surface on its ray (planar depth, matching
the pinhole model in geometry.py). Pixels whose rays leave the world
without hitting anything hold the sentinel value +inf.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, MalformedSnapshotError, PlacementFailureError
from .geometry import (
    CameraIntrinsics,
    Extrinsics,
    Pose,
    downsample_to_feature_grid,
    extrinsics_from_pose,
)
from .seeding import STREAM_EPISODES, STREAM_NOISE, STREAM_SCENE, rng_for

__all__ = [
    "Wall",
    "SceneObject",
    "Scene",
    "GroundTruthObject",
    "Frame",
    "Episode",
    "NoiseConfig",
    "DEFAULT_INTRINSICS",
    "generate_scene",
    "generate_episodes",
    "render_depth",
    "render_depth_and_owners",
    "ground_truth",
    "apply_sensor_noise",
    "scene_to_json",
    "scene_from_json",
    "save_episode_pack",
    "load_episode_pack",
]

DEFAULT_INTRINSICS = CameraIntrinsics(fx=100.0, fy=100.0, cx=80.0, cy=60.0, width=160, height=120)

OWNER_NONE = -1
OWNER_FLOOR = -2
OWNER_WALL = -3


@dataclass(frozen=True)
class Wall:
    """Axis-aligned wall segment, rendered as a thin box of given height."""

    x1: float
    y1: float
    x2: float
    y2: float
    height: float = 3.0
    thickness: float = 0.1

    def __post_init__(self):
        if self.x1 != self.x2 and self.y1 != self.y2:
            raise ValueError("wall segments must be axis-aligned")
        if self.height <= 0 or self.thickness <= 0:
            raise ValueError("wall height and thickness must be positive")

    def as_box(self) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
        half = self.thickness / 2.0
        lo = (min(self.x1, self.x2) - half, min(self.y1, self.y2) - half, 0.0)
        hi = (max(self.x1, self.x2) + half, max(self.y1, self.y2) + half, self.height)
        return lo, hi


@dataclass(frozen=True)
class SceneObject:
    """A classed axis-aligned box resting on the floor."""

    class_id: int
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError("class_id must be nonnegative")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("object box must have positive size on every axis")

    @property
    def footprint(self) -> tuple[float, float, float, float]:
        return (self.lo[0], self.lo[1], self.hi[0], self.hi[1])


@dataclass(frozen=True)
class Scene:
    """Static world: extent rectangle, perimeter walls, classed objects."""

    extent: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    walls: tuple[Wall, ...]
    objects: tuple[SceneObject, ...]

    def __post_init__(self):
        xmin, ymin, xmax, ymax = self.extent
        if xmax <= xmin or ymax <= ymin:
            raise ValueError("extent must have positive area")
        for obj in self.objects:
            if (
                obj.lo[0] < xmin
                or obj.lo[1] < ymin
                or obj.hi[0] > xmax
                or obj.hi[1] > ymax
                or obj.lo[2] < 0
            ):
                raise ValueError(f"object {obj} extends outside the scene extent")

    def surface_boxes(self) -> tuple[np.ndarray, np.ndarray, int]:
        """All renderable boxes: objects first, then walls.

        Returns (lo (B, 3), hi (B, 3), n_objects).
        """
        boxes = [(o.lo, o.hi) for o in self.objects] + [w.as_box() for w in self.walls]
        if not boxes:
            return np.zeros((0, 3)), np.zeros((0, 3)), 0
        lo = np.array([b[0] for b in boxes], dtype=np.float64)
        hi = np.array([b[1] for b in boxes], dtype=np.float64)
        return lo, hi, len(self.objects)


@dataclass(frozen=True)
class GroundTruthObject:
    """One visible object instance in one frame."""

    class_id: int
    box: np.ndarray  # (4,) image-resolution (x1, y1, x2, y2), half-open
    mask: np.ndarray  # (h, w) bool at feature-map resolution
    pixel_count: int  # mask pixel count at feature-map resolution
    object_index: int  # index into scene.objects


@dataclass(frozen=True)
class Frame:
    pose: Pose
    depth: np.ndarray  # (H, W) float64, +inf where no surface was hit
    gt: tuple[GroundTruthObject, ...]


@dataclass(frozen=True)
class Episode:
    index: int
    frames: tuple[Frame, ...]

    def __len__(self):
        return len(self.frames)


@dataclass(frozen=True)
class NoiseConfig:
    """Additive Gaussian sensor noise, scaled by a common multiplier."""

    depth_sigma: float = 0.1
    position_sigma: float = 0.1
    heading_sigma: float = 0.01
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("depth_sigma", "position_sigma", "heading_sigma", "scale"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def is_identity(self) -> bool:
        s = self.scale
        return s == 0 or (self.depth_sigma == 0 and self.position_sigma == 0 and self.heading_sigma == 0)


# ---------------------------------------------------------------------------
# scene generation


def _footprints_overlap(a, b, gap=0.0):
    return not (
        a[2] + gap <= b[0] or b[2] + gap <= a[0] or a[3] + gap <= b[1] or b[3] + gap <= a[1]
    )


def generate_scene(
    seed: int,
    extent: tuple[float, float, float, float] = (0.0, 0.0, 20.0, 20.0),
    n_objects: int = 12,
    n_classes: int = 8,
    *,
    min_size: tuple[float, float, float] = (0.4, 0.4, 0.3),
    max_size: tuple[float, float, float] = (1.2, 1.2, 1.5),
    wall_height: float = 3.0,
    wall_margin: float = 0.3,
    clearance: float = 0.5,
    max_retries: int = 200,
) -> Scene:
    """Deterministic box world with non-overlapping objects.

    Classes are assigned round-robin (object i gets class i mod
    n_classes) so every class occurs when n_objects >= n_classes.
    Placement is rejection sampling with a clearance gap between
    footprints; exhausting the retry budget raises PlacementFailureError.
    """
    if n_objects < 0 or n_classes < 1:
        raise ValueError("need n_objects >= 0 and n_classes >= 1")
    xmin, ymin, xmax, ymax = extent
    rng = rng_for(seed, STREAM_SCENE)
    walls = (
        Wall(xmin, ymin, xmax, ymin, height=wall_height),
        Wall(xmax, ymin, xmax, ymax, height=wall_height),
        Wall(xmax, ymax, xmin, ymax, height=wall_height),
        Wall(xmin, ymax, xmin, ymin, height=wall_height),
    )
    objects: list[SceneObject] = []
    for i in range(n_objects):
        placed = False
        for _ in range(max_retries):
            sx = rng.uniform(min_size[0], max_size[0])
            sy = rng.uniform(min_size[1], max_size[1])
            sz = rng.uniform(min_size[2], max_size[2])
            x = rng.uniform(xmin + wall_margin, xmax - wall_margin - sx)
            y = rng.uniform(ymin + wall_margin, ymax - wall_margin - sy)
            candidate = (x, y, x + sx, y + sy)
            if any(_footprints_overlap(candidate, o.footprint, gap=clearance) for o in objects):
                continue
            objects.append(
                SceneObject(class_id=i % n_classes, lo=(x, y, 0.0), hi=(x + sx, y + sy, sz))
            )
            placed = True
            break
        if not placed:
            raise PlacementFailureError(
                f"could not place object {i} after {max_retries} attempts; "
                "reduce n_objects or clearance"
            )
    return Scene(extent=extent, walls=walls, objects=tuple(objects))


# ---------------------------------------------------------------------------
# rendering


def _ray_directions(intrinsics: CameraIntrinsics, extrinsics: Extrinsics) -> np.ndarray:
    """World-frame ray direction per pixel, (H*W, 3), row-major.

    Directions are unnormalized with camera-frame forward component 1,
    so the ray parameter t equals planar depth.
    """
    h, w = intrinsics.height, intrinsics.width
    rows, cols = np.meshgrid(
        np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
    )
    d_cam = np.stack(
        [
            (rows - intrinsics.cy) / intrinsics.fy,
            (cols - intrinsics.cx) / intrinsics.fx,
            np.ones_like(rows),
        ],
        axis=-1,
    ).reshape(-1, 3)
    return d_cam @ extrinsics.rotation


def _slab_hits(origin: np.ndarray, dirs: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Entry parameter of each ray into each box; +inf where missed.

    Returns (B, N) float64. Rays starting inside a box count as misses
    (cameras never start inside scene geometry).
    """
    eps = 1e-9
    parallel = dirs == 0.0  # (N, 3)
    safe = np.where(parallel, 1.0, dirs)
    t_a = (lo[:, None, :] - origin) / safe  # (B, N, 3)
    t_b = (hi[:, None, :] - origin) / safe
    tmin = np.minimum(t_a, t_b)
    tmax = np.maximum(t_a, t_b)
    inside = (origin >= lo)[:, None, :] & (origin <= hi)[:, None, :]  # (B, 1, 3)
    par = parallel[None, :, :]
    tmin = np.where(par, np.where(inside, -np.inf, np.inf), tmin)
    tmax = np.where(par, np.where(inside, np.inf, -np.inf), tmax)
    t_enter = tmin.max(axis=2)
    t_exit = tmax.min(axis=2)
    hit = (t_exit >= t_enter) & (t_enter > eps)
    return np.where(hit, t_enter, np.inf)


def render_depth_and_owners(
    scene: Scene,
    pose: Pose,
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
    *,
    camera_height: float = 1.25,
    camera_pitch: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Depth map plus per-pixel surface owner.

    Owners: object index >= 0, OWNER_WALL, OWNER_FLOOR, or OWNER_NONE
    for rays that leave the world (depth +inf there).
    """
    ext = extrinsics_from_pose(pose, camera_height=camera_height, camera_pitch=camera_pitch)
    origin = ext.camera_center
    dirs = _ray_directions(intrinsics, ext)
    n = dirs.shape[0]
    lo, hi, n_objects = scene.surface_boxes()

    if lo.shape[0]:
        entries = _slab_hits(origin, dirs, lo, hi)  # (B, N)
        box_idx = entries.argmin(axis=0)
        box_t = entries[box_idx, np.arange(n)]
    else:
        box_idx = np.zeros(n, dtype=np.int64)
        box_t = np.full(n, np.inf)

    dz = dirs[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        floor_t = np.where(dz < 0, -origin[2] / dz, np.inf)

    depth = np.minimum(box_t, floor_t)
    owners = np.full(n, OWNER_NONE, dtype=np.int32)
    box_wins = box_t <= floor_t
    hit_any = np.isfinite(depth)
    owners[hit_any & box_wins & (box_idx < n_objects)] = box_idx[
        hit_any & box_wins & (box_idx < n_objects)
    ].astype(np.int32)
    owners[hit_any & box_wins & (box_idx >= n_objects)] = OWNER_WALL
    owners[hit_any & ~box_wins] = OWNER_FLOOR
    shape = (intrinsics.height, intrinsics.width)
    return depth.reshape(shape), owners.reshape(shape)


def render_depth(
    scene: Scene,
    pose: Pose,
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
    *,
    camera_height: float = 1.25,
    camera_pitch: float = 0.0,
) -> np.ndarray:
    """Per-pixel planar depth to the nearest surface; +inf for no hit."""
    depth, _ = render_depth_and_owners(
        scene, pose, intrinsics, camera_height=camera_height, camera_pitch=camera_pitch
    )
    return depth


def ground_truth(
    scene: Scene,
    pose: Pose,
    depth: np.ndarray,
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
    *,
    stride: int = 4,
    min_pixels: int = 16,
    camera_height: float = 1.25,
    camera_pitch: float = 0.0,
    owners: np.ndarray | None = None,
) -> list[GroundTruthObject]:
    """Visible objects with image-resolution boxes and feature-resolution masks.

    An object is visible when at least min_pixels of its surface
    survive the depth test at feature-map resolution. The box tightly
    bounds its visible pixels at image resolution, half-open, x along
    columns. Pass owners from render_depth_and_owners to skip the
    re-render.
    """
    depth = np.asarray(depth)
    if depth.shape != (intrinsics.height, intrinsics.width):
        raise DimensionMismatchError(
            f"depth shape {depth.shape} != intrinsics {(intrinsics.height, intrinsics.width)}"
        )
    if owners is None:
        _, owners = render_depth_and_owners(
            scene, pose, intrinsics, camera_height=camera_height, camera_pitch=camera_pitch
        )
    elif owners.shape != depth.shape:
        raise DimensionMismatchError("owners map must match depth resolution")
    owners_feat = downsample_to_feature_grid(owners, stride)
    out = []
    for idx in range(len(scene.objects)):
        mask = owners_feat == idx
        count = int(mask.sum())
        if count < min_pixels:
            continue
        rows, cols = np.nonzero(owners == idx)
        box = np.array(
            [cols.min(), rows.min(), cols.max() + 1, rows.max() + 1], dtype=np.float64
        )
        out.append(
            GroundTruthObject(
                class_id=scene.objects[idx].class_id,
                box=box,
                mask=mask,
                pixel_count=count,
                object_index=idx,
            )
        )
    return out


# ---------------------------------------------------------------------------
# episodes


def _position_free(scene: Scene, x: float, y: float, radius: float, wall_margin: float) -> bool:
    xmin, ymin, xmax, ymax = scene.extent
    if not (
        xmin + wall_margin + radius <= x <= xmax - wall_margin - radius
        and ymin + wall_margin + radius <= y <= ymax - wall_margin - radius
    ):
        return False
    for obj in scene.objects:
        fx1, fy1, fx2, fy2 = obj.footprint
        if fx1 - radius <= x <= fx2 + radius and fy1 - radius <= y <= fy2 + radius:
            return False
    return True


def generate_episodes(
    scene: Scene,
    count: int = 50,
    length: int = 20,
    seed: int = 0,
    *,
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
    stride: int = 4,
    min_pixels: int = 16,
    step_length: float = 0.25,
    max_turn: float = 0.3,
    camera_height: float = 1.25,
    camera_pitch: float = 0.0,
    robot_radius: float = 0.2,
    max_retries: int = 500,
) -> list[Episode]:
    """Random short walks with rendered depth and extracted ground truth.

    Each step turns by at most max_turn radians and advances at most
    step_length meters; a blocked step falls back to turning in place,
    so episodes always reach full length. All poses are collision-free
    against object footprints inflated by robot_radius.
    """
    if count < 0 or length < 1:
        raise ValueError("need count >= 0 and length >= 1")
    episodes = []
    for ep_index in range(count):
        rng = rng_for(seed, STREAM_EPISODES, ep_index)
        for _ in range(max_retries):
            x = rng.uniform(scene.extent[0], scene.extent[2])
            y = rng.uniform(scene.extent[1], scene.extent[3])
            if _position_free(scene, x, y, robot_radius, wall_margin=0.3):
                break
        else:
            raise PlacementFailureError(
                f"no free start pose found for episode {ep_index} "
                f"after {max_retries} attempts"
            )
        theta = rng.uniform(-math.pi, math.pi)
        frames = []
        for step in range(length):
            if step > 0:
                moved = False
                for _ in range(20):
                    d_theta = rng.uniform(-max_turn, max_turn)
                    nx = x + step_length * math.cos(theta + d_theta)
                    ny = y + step_length * math.sin(theta + d_theta)
                    if _position_free(scene, nx, ny, robot_radius, wall_margin=0.3):
                        x, y, theta = nx, ny, theta + d_theta
                        moved = True
                        break
                if not moved:
                    theta = theta + d_theta  # turn in place, stay put
            pose = Pose(x, y, 0.0, theta)
            depth, owners = render_depth_and_owners(
                scene, pose, intrinsics, camera_height=camera_height, camera_pitch=camera_pitch
            )
            gt = ground_truth(
                scene,
                pose,
                depth,
                intrinsics,
                stride=stride,
                min_pixels=min_pixels,
                owners=owners,
            )
            frames.append(Frame(pose=pose, depth=depth, gt=tuple(gt)))
        episodes.append(Episode(index=ep_index, frames=tuple(frames)))
    return episodes


def survey_episode(
    scene: Scene,
    *,
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
    stride: int = 4,
    min_pixels: int = 16,
    distances: tuple[float, ...] = (1.5, 2.5),
    n_bearings: int = 8,
    camera_height: float = 1.25,
    camera_pitch: float = 0.0,
    robot_radius: float = 0.2,
    index: int = 0,
) -> Episode:
    """One deterministic walk that frames every object in turn.

    For each object and viewing distance the camera is placed on the
    first collision-free bearing around the object (starting on the side
    toward the room center) and aimed at the footprint center. Random
    walks can miss every object; this cannot, short of pathological
    clutter, which makes it the right source of calibration views.
    Fully deterministic: no randomness is involved at any step.
    """
    xmin, ymin, xmax, ymax = scene.extent
    room = ((xmin + xmax) / 2.0, (ymin + ymax) / 2.0)
    frames = []
    for obj in scene.objects:
        fx0, fy0, fx1, fy1 = obj.footprint
        cx, cy = (fx0 + fx1) / 2.0, (fy0 + fy1) / 2.0
        start = math.atan2(room[1] - cy, room[0] - cx)
        for distance in distances:
            for k in range(n_bearings):
                bearing = start + k * 2.0 * math.pi / n_bearings
                x = cx + distance * math.cos(bearing)
                y = cy + distance * math.sin(bearing)
                if not _position_free(scene, x, y, robot_radius, wall_margin=0.3):
                    continue
                pose = Pose(x, y, 0.0, math.atan2(cy - y, cx - x))
                depth, owners = render_depth_and_owners(
                    scene,
                    pose,
                    intrinsics,
                    camera_height=camera_height,
                    camera_pitch=camera_pitch,
                )
                gt = ground_truth(
                    scene,
                    pose,
                    depth,
                    intrinsics,
                    stride=stride,
                    min_pixels=min_pixels,
                    owners=owners,
                )
                frames.append(Frame(pose=pose, depth=depth, gt=tuple(gt)))
                break
    if not frames:
        raise PlacementFailureError("no free viewpoint around any object")
    return Episode(index=index, frames=tuple(frames))


# ---------------------------------------------------------------------------
# sensor noise


def apply_sensor_noise(
    pose: Pose, depth: np.ndarray, cfg: NoiseConfig, frame_index: int = 0
) -> tuple[Pose, np.ndarray]:
    """Additive Gaussian noise on pose (x, y, heading) and depth readings.

    Deterministic per (cfg.seed, frame_index). Depth noise applies only
    to finite readings and is clamped to a small positive floor; the
    no-hit sentinel stays +inf. With zero effective sigmas the inputs
    come back unchanged (depth as a copy).
    """
    depth = np.asarray(depth, dtype=np.float64)
    if cfg.is_identity:
        return pose, depth.copy()
    rng = rng_for(cfg.seed, STREAM_NOISE, frame_index)
    dx, dy = rng.normal(0.0, cfg.position_sigma * cfg.scale, size=2)
    d_theta = rng.normal(0.0, cfg.heading_sigma * cfg.scale)
    noise = rng.normal(0.0, cfg.depth_sigma * cfg.scale, size=depth.shape)
    noisy_pose = Pose(pose.x + dx, pose.y + dy, pose.z, pose.theta + d_theta)
    finite = np.isfinite(depth)
    noisy_depth = depth.copy()
    noisy_depth[finite] = np.maximum(depth[finite] + noise[finite], 1e-3)
    return noisy_pose, noisy_depth


# ---------------------------------------------------------------------------
# scene and episode serialization


def scene_to_json(scene: Scene) -> dict:
    """JSON-compatible dict, round-trippable via scene_from_json."""
    return {
        "extent": list(scene.extent),
        "walls": [
            {
                "x1": w.x1,
                "y1": w.y1,
                "x2": w.x2,
                "y2": w.y2,
                "height": w.height,
                "thickness": w.thickness,
            }
            for w in scene.walls
        ],
        "objects": [
            {"class_id": o.class_id, "lo": list(o.lo), "hi": list(o.hi)} for o in scene.objects
        ],
    }


def scene_from_json(doc: dict) -> Scene:
    try:
        walls = tuple(
            Wall(
                x1=w["x1"],
                y1=w["y1"],
                x2=w["x2"],
                y2=w["y2"],
                height=w.get("height", 3.0),
                thickness=w.get("thickness", 0.1),
            )
            for w in doc["walls"]
        )
        objects = tuple(
            SceneObject(class_id=int(o["class_id"]), lo=tuple(o["lo"]), hi=tuple(o["hi"]))
            for o in doc["objects"]
        )
        return Scene(extent=tuple(doc["extent"]), walls=walls, objects=objects)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedSnapshotError(f"invalid scene document: {exc}") from exc


_PACK_MAGIC = b"GMEP"
_PACK_VERSION = 1
_PACK_HEADER = struct.Struct("<4sIIIIIIII")  # magic, ver, n_eps, length, H, W, h, w, stride
_FRAME_POSE = struct.Struct("<4d")


def save_episode_pack(episodes: Sequence[Episode], intrinsics: CameraIntrinsics, stride: int) -> bytes:
    """Binary frame pack: header, then per frame pose, depth, ground truth.

    Depth is stored as little-endian float32; masks are bit-packed.
    """
    if not episodes:
        return _PACK_HEADER.pack(_PACK_MAGIC, _PACK_VERSION, 0, 0, intrinsics.height, intrinsics.width, intrinsics.height // stride, intrinsics.width // stride, stride)
    length = len(episodes[0].frames)
    big_h, big_w = intrinsics.height, intrinsics.width
    h, w = big_h // stride, big_w // stride
    parts = [
        _PACK_HEADER.pack(
            _PACK_MAGIC, _PACK_VERSION, len(episodes), length, big_h, big_w, h, w, stride
        )
    ]
    for ep in episodes:
        if len(ep.frames) != length:
            raise ValueError("all episodes in a pack must share one length")
        for frame in ep.frames:
            parts.append(_FRAME_POSE.pack(frame.pose.x, frame.pose.y, frame.pose.z, frame.pose.theta))
            parts.append(np.asarray(frame.depth, dtype="<f4").tobytes())
            parts.append(struct.pack("<I", len(frame.gt)))
            for gt in frame.gt:
                parts.append(
                    struct.pack(
                        "<II4dI",
                        gt.class_id,
                        gt.object_index,
                        *gt.box.tolist(),
                        gt.pixel_count,
                    )
                )
                parts.append(np.packbits(gt.mask).tobytes())
    return b"".join(parts)


def load_episode_pack(data: bytes) -> tuple[list[Episode], int]:
    """Parse save_episode_pack bytes -> (episodes, stride).

    The pack stores resolutions, not intrinsics; callers keep their
    intrinsics alongside (the run configuration records them).
    """
    if len(data) < _PACK_HEADER.size:
        raise MalformedSnapshotError(
            f"truncated pack header: need {_PACK_HEADER.size} bytes, have {len(data)}"
        )
    magic, version, n_eps, length, big_h, big_w, h, w, stride = _PACK_HEADER.unpack_from(data, 0)
    if magic != _PACK_MAGIC:
        raise MalformedSnapshotError(f"bad magic {magic!r} at offset 0")
    if version != _PACK_VERSION:
        raise MalformedSnapshotError(f"unsupported pack version {version} at offset 4")
    offset = _PACK_HEADER.size
    depth_bytes = big_h * big_w * 4
    mask_bytes = (h * w + 7) // 8
    episodes = []
    for ep_index in range(n_eps):
        frames = []
        for _ in range(length):
            if offset + _FRAME_POSE.size + depth_bytes + 4 > len(data):
                raise MalformedSnapshotError(f"truncated frame at offset {offset}")
            x, y, z, theta = _FRAME_POSE.unpack_from(data, offset)
            offset += _FRAME_POSE.size
            depth = (
                np.frombuffer(data, dtype="<f4", count=big_h * big_w, offset=offset)
                .reshape(big_h, big_w)
                .astype(np.float64)
            )
            offset += depth_bytes
            (n_gt,) = struct.unpack_from("<I", data, offset)
            offset += 4
            gts = []
            for _ in range(n_gt):
                rec = struct.Struct("<II4dI")
                if offset + rec.size + mask_bytes > len(data):
                    raise MalformedSnapshotError(f"truncated ground truth at offset {offset}")
                class_id, obj_index, x1, y1, x2, y2, pixel_count = rec.unpack_from(data, offset)
                offset += rec.size
                bits = np.frombuffer(data, dtype=np.uint8, count=mask_bytes, offset=offset)
                offset += mask_bytes
                mask = np.unpackbits(bits, count=h * w).astype(bool).reshape(h, w)
                gts.append(
                    GroundTruthObject(
                        class_id=class_id,
                        box=np.array([x1, y1, x2, y2]),
                        mask=mask,
                        pixel_count=pixel_count,
                        object_index=obj_index,
                    )
                )
            frames.append(Frame(pose=Pose(x, y, z, theta), depth=depth, gt=tuple(gts)))
        episodes.append(Episode(index=ep_index, frames=tuple(frames)))
    if offset != len(data):
        raise MalformedSnapshotError(f"trailing bytes at offset {offset}")
    return episodes, stride
