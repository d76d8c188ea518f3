"""Implicit object memory: a ground-plane grid of accumulated object features.

The grid stores, per 2-D cell, a running sum of object features (M) and
the number of frames in which the cell was inside the camera frustum
with valid depth (V). Writing projects the masked pixels of confident
detections onto the ground plane; reading shoots a ray through every
feature-map pixel, looks up the normalized cell feature along it, and
mixes it into the pixel feature.

Arithmetic contract (tests depend on it):
  - M and V are float32 / uint32; per-frame contributions are computed
    in float64, cast to float32, then added in frame order.
  - The per-cell mean over one frame is the pixel-count-weighted
    combination of proposal features, accumulated in proposal order:
    sum_i count_i * feature_i, divided by sum_i count_i.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import DimensionMismatchError, MalformedSnapshotError
from .geometry import (
    CameraIntrinsics,
    Extrinsics,
    GridSpec,
    cells_from_world,
    pixels_to_world,
)

if TYPE_CHECKING:
    from .detector import ClassEmbeddingTable, DetectorOutput

__all__ = [
    "MemoryGrid",
    "ProjectedFeatureFrame",
    "ConfidentObjects",
    "EnhancementParams",
    "score",
    "select_confident",
    "pixel_ray_cells",
    "project_object_features",
    "write",
    "normalize",
    "read",
    "snapshot_save",
    "snapshot_load",
    "random_orthonormal_columns",
    "fit_projection",
]


def sigmoid(x):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class MemoryGrid:
    """Accumulated object features M (a, l, d2) and view counts V (a, l)."""

    __slots__ = ("grid_spec", "feature_dim", "m", "v")

    def __init__(
        self,
        grid_spec: GridSpec,
        feature_dim: int = 512,
        m: np.ndarray | None = None,
        v: np.ndarray | None = None,
    ):
        if feature_dim < 1:
            raise ValueError("feature_dim must be positive")
        shape = (grid_spec.breadth, grid_spec.length, feature_dim)
        if m is None:
            m = np.zeros(shape, dtype=np.float32)
        else:
            m = np.ascontiguousarray(m, dtype=np.float32)
            if m.shape != shape:
                raise DimensionMismatchError(f"M has shape {m.shape}, expected {shape}")
        if v is None:
            v = np.zeros(shape[:2], dtype=np.uint32)
        else:
            v = np.ascontiguousarray(v, dtype=np.uint32)
            if v.shape != shape[:2]:
                raise DimensionMismatchError(f"V has shape {v.shape}, expected {shape[:2]}")
        self.grid_spec = grid_spec
        self.feature_dim = feature_dim
        self.m = m
        self.v = v

    @property
    def breadth(self) -> int:
        return self.grid_spec.breadth

    @property
    def length(self) -> int:
        return self.grid_spec.length

    def is_empty(self) -> bool:
        return not self.v.any()

    def copy(self) -> "MemoryGrid":
        return MemoryGrid(self.grid_spec, self.feature_dim, self.m.copy(), self.v.copy())

    def reset(self):
        self.m[:] = 0
        self.v[:] = 0

    def validate(self):
        """Check the storage invariants; raises ValueError on violation."""
        if not np.all(np.isfinite(self.m)):
            raise ValueError("M contains non-finite entries")
        unseen = self.v == 0
        if unseen.any() and np.any(self.m[unseen]):
            raise ValueError("cells with V = 0 must hold the zero feature")

    def __repr__(self):
        return (
            f"MemoryGrid({self.breadth}x{self.length}x{self.feature_dim}, "
            f"viewed_cells={int((self.v > 0).sum())})"
        )


class ProjectedFeatureFrame:
    """One frame's projected object features, stored sparsely.

    Semantically this is the dense pair (F: a x l x d2, visible_mask),
    with F nonzero only at cells receiving at least one confident
    object pixel and equal to the mean feature over those pixels.
    """

    __slots__ = (
        "grid_spec",
        "feature_dim",
        "touched_cells",
        "mean_features",
        "visible_mask",
        "n_skipped_invalid_depth",
        "n_skipped_out_of_bounds",
    )

    def __init__(
        self,
        grid_spec: GridSpec,
        feature_dim: int,
        touched_cells: np.ndarray,
        mean_features: np.ndarray,
        visible_mask: np.ndarray,
        n_skipped_invalid_depth: int = 0,
        n_skipped_out_of_bounds: int = 0,
    ):
        self.grid_spec = grid_spec
        self.feature_dim = feature_dim
        self.touched_cells = np.asarray(touched_cells, dtype=np.int64)
        self.mean_features = np.ascontiguousarray(mean_features, dtype=np.float32)
        self.visible_mask = np.asarray(visible_mask, dtype=bool)
        self.n_skipped_invalid_depth = int(n_skipped_invalid_depth)
        self.n_skipped_out_of_bounds = int(n_skipped_out_of_bounds)

    @property
    def f(self) -> np.ndarray:
        """Dense (a, l, d2) float32 feature matrix."""
        dense = np.zeros(
            (self.grid_spec.breadth, self.grid_spec.length, self.feature_dim),
            dtype=np.float32,
        )
        dense.reshape(-1, self.feature_dim)[self.touched_cells] = self.mean_features
        return dense


@dataclass
class ConfidentObjects:
    """Proposals passing the confidence threshold, order preserved."""

    features: np.ndarray  # (k, d2) float64
    masks: np.ndarray  # (k, h, w) bool
    indices: np.ndarray  # (k,) positions in the source DetectorOutput
    scores: np.ndarray  # (k,) max-over-classes score of each kept proposal

    def __len__(self):
        return len(self.indices)


@dataclass
class EnhancementParams:
    """Read-side mixing parameters: z_e = lam * (z_m @ w_m) + z_p."""

    w_m: np.ndarray
    lam: float = 5.0

    def __post_init__(self):
        self.w_m = np.ascontiguousarray(self.w_m, dtype=np.float64)
        if self.w_m.ndim != 2:
            raise ValueError("w_m must be a 2-D matrix")
        if not np.all(np.isfinite(self.w_m)):
            raise ValueError("w_m must be finite")
        if not (self.lam >= 0):
            raise ValueError("lam must be nonnegative")


def score(z_o: np.ndarray, table: "ClassEmbeddingTable", objectness: np.ndarray) -> np.ndarray:
    """Class-likelihood scores: sqrt(sigmoid(z_o . z_l^T) * o), shape (k, C).

    The geometric mean of the logistic feature/embedding similarity and
    the objectness keeps every entry in [0, 1].
    """
    z_o = np.asarray(z_o, dtype=np.float64)
    objectness = np.asarray(objectness, dtype=np.float64)
    if z_o.ndim != 2:
        raise DimensionMismatchError("z_o must be (k, d2)")
    if z_o.shape[1] != table.embeddings.shape[1]:
        raise DimensionMismatchError(
            f"feature dim {z_o.shape[1]} != table dim {table.embeddings.shape[1]}"
        )
    if objectness.shape != (z_o.shape[0],):
        raise DimensionMismatchError("objectness must be (k,)")
    if objectness.size and (objectness.min() < 0 or objectness.max() > 1):
        raise ValueError("objectness must lie in [0, 1]")
    similarity = z_o @ table.embeddings.T
    return np.sqrt(sigmoid(similarity) * objectness[:, None])


def select_confident(
    output: "DetectorOutput", table: "ClassEmbeddingTable", tau_s: float = 0.3
) -> ConfidentObjects:
    """Proposals whose best class score strictly exceeds tau_s."""
    if not 0.0 <= tau_s <= 1.0:
        raise ValueError("tau_s must lie in [0, 1]")
    k = output.object_features.shape[0]
    if k == 0:
        return ConfidentObjects(
            features=np.zeros((0, table.embeddings.shape[1])),
            masks=output.masks.reshape((0,) + output.masks.shape[1:]),
            indices=np.zeros(0, dtype=np.int64),
            scores=np.zeros(0),
        )
    s = score(output.object_features, table, output.objectness)
    best = s.max(axis=1)
    keep = best > tau_s
    return ConfidentObjects(
        features=np.asarray(output.object_features, dtype=np.float64)[keep],
        masks=output.masks[keep],
        indices=np.nonzero(keep)[0].astype(np.int64),
        scores=best[keep],
    )


def pixel_ray_cells(
    depth: np.ndarray,
    intrinsics: CameraIntrinsics,
    extrinsics: Extrinsics,
    grid_spec: GridSpec,
) -> tuple[np.ndarray, np.ndarray, int, int]:
    """Grid cell hit by each pixel's ray at its sensed depth.

    Returns (flat_cells (h, w) int64, usable (h, w) bool, n_invalid_depth,
    n_out_of_bounds). flat_cells entries are meaningful only where
    usable; a pixel is usable when its depth is finite and positive and
    the hit point falls inside the grid extent.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != (intrinsics.height, intrinsics.width):
        raise DimensionMismatchError(
            f"depth shape {depth.shape} != intrinsics {(intrinsics.height, intrinsics.width)}"
        )
    h, w = depth.shape
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    points, valid = pixels_to_world(rows, cols, depth, intrinsics, extrinsics)
    u, v, in_bounds = cells_from_world(points[..., 0], points[..., 1], grid_spec)
    usable = valid & in_bounds
    flat = u * grid_spec.length + v
    n_invalid = int((~valid).sum())
    n_oob = int((valid & ~in_bounds).sum())
    return flat, usable, n_invalid, n_oob


def project_object_features(
    confident: ConfidentObjects,
    depth: np.ndarray,
    intrinsics: CameraIntrinsics,
    extrinsics: Extrinsics,
    grid_spec: GridSpec,
) -> ProjectedFeatureFrame:
    """Project confident detections onto the ground-plane grid.

    Every valid-depth pixel of the frame marks its cell visible; masked
    pixels of confident proposals contribute their proposal's feature
    to the cell mean. Invalid-depth and out-of-extent pixels are
    skipped and counted, never fatal.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if confident.masks.ndim == 3 and len(confident) and confident.masks.shape[1:] != depth.shape:
        raise DimensionMismatchError(
            f"mask resolution {confident.masks.shape[1:]} != depth {depth.shape}"
        )
    flat, usable, n_invalid, n_oob = pixel_ray_cells(depth, intrinsics, extrinsics, grid_spec)
    n_cells = grid_spec.n_cells
    visible = np.zeros(n_cells, dtype=bool)
    visible[flat[usable]] = True

    feature_dim = int(confident.features.shape[1])
    sums = None
    counts = np.zeros(n_cells, dtype=np.int64)
    for feat, mask in zip(confident.features, confident.masks):
        idx = flat[mask & usable]
        if idx.size == 0:
            continue
        cnt = np.bincount(idx, minlength=n_cells)
        touched = np.nonzero(cnt)[0]
        if sums is None:
            sums = np.zeros((n_cells, feature_dim), dtype=np.float64)
        sums[touched] += cnt[touched, None].astype(np.float64) * feat
        counts += cnt

    if sums is None:
        touched_cells = np.zeros(0, dtype=np.int64)
        means = np.zeros((0, feature_dim), dtype=np.float32)
    else:
        touched_cells = np.nonzero(counts)[0]
        means = (sums[touched_cells] / counts[touched_cells, None]).astype(np.float32)
    return ProjectedFeatureFrame(
        grid_spec=grid_spec,
        feature_dim=feature_dim,
        touched_cells=touched_cells,
        mean_features=means,
        visible_mask=visible.reshape(grid_spec.breadth, grid_spec.length),
        n_skipped_invalid_depth=n_invalid,
        n_skipped_out_of_bounds=n_oob,
    )


def write(grid: MemoryGrid, frame: ProjectedFeatureFrame) -> MemoryGrid:
    """Accumulate one frame: M += F, V += 1 at visible cells. In place."""
    if frame.grid_spec != grid.grid_spec:
        raise DimensionMismatchError("frame grid geometry differs from the memory grid")
    if frame.touched_cells.size and frame.feature_dim != grid.feature_dim:
        raise DimensionMismatchError(
            f"frame feature dim {frame.feature_dim} != grid {grid.feature_dim}"
        )
    if frame.touched_cells.size:
        grid.m.reshape(-1, grid.feature_dim)[frame.touched_cells] += frame.mean_features
    grid.v[frame.visible_mask] += 1
    return grid


def normalize(grid: MemoryGrid) -> np.ndarray:
    """View-count-normalized features |M| = M / V, zero where V = 0."""
    out = np.zeros(grid.m.shape, dtype=np.float64)
    seen = grid.v > 0
    out[seen] = grid.m[seen].astype(np.float64) / grid.v[seen, None].astype(np.float64)
    return out


def _normalized_cell_features(grid: MemoryGrid, flat_cells: np.ndarray) -> np.ndarray:
    """|M| for a 1-D array of flat cell indices (duplicates allowed)."""
    unique, inverse = np.unique(flat_cells, return_inverse=True)
    m_flat = grid.m.reshape(-1, grid.feature_dim)
    v_flat = grid.v.reshape(-1)
    feats = m_flat[unique].astype(np.float64) / v_flat[unique, None].astype(np.float64)
    return feats[inverse]


def read(
    z_p: np.ndarray,
    grid: MemoryGrid,
    depth: np.ndarray,
    intrinsics: CameraIntrinsics,
    extrinsics: Extrinsics,
    params: EnhancementParams,
) -> np.ndarray:
    """Enhance pixel features with egocentric memory features.

    z_e = lam * (z_m @ w_m) + z_p, where z_m at each pixel is the
    normalized memory feature of the cell its ray hits (zero for
    invalid depth, rays leaving the grid, or unviewed cells). With
    lam = 0 or an empty memory the input is returned bit-for-bit (as a
    copy), so disabled enhancement is exactly the base pipeline.
    """
    z_p = np.asarray(z_p)
    depth = np.asarray(depth, dtype=np.float64)
    if z_p.ndim != 3:
        raise DimensionMismatchError("z_p must be (h, w, d1)")
    if z_p.shape[:2] != depth.shape:
        raise DimensionMismatchError(f"z_p spatial shape {z_p.shape[:2]} != depth {depth.shape}")
    if params.w_m.shape[0] != grid.feature_dim:
        raise DimensionMismatchError(
            f"w_m input dim {params.w_m.shape[0]} != memory dim {grid.feature_dim}"
        )
    if params.w_m.shape[1] != z_p.shape[2]:
        raise DimensionMismatchError(
            f"w_m output dim {params.w_m.shape[1]} != pixel dim {z_p.shape[2]}"
        )
    if params.lam == 0 or grid.is_empty():
        return z_p.copy()

    flat, usable, _, _ = pixel_ray_cells(depth, intrinsics, extrinsics, grid_spec=grid.grid_spec)
    hit = usable & (grid.v.reshape(-1)[flat] > 0)
    out = z_p.astype(np.float64, copy=True)
    if hit.any():
        z_m = _normalized_cell_features(grid, flat[hit])
        out[hit] += params.lam * (z_m @ params.w_m)
    return out


# ---------------------------------------------------------------------------
# snapshot persistence

_SNAPSHOT_MAGIC = b"GMSN"
_SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIdddI")  # magic, version, a, l, d2, cell, ox, oy, payload


def snapshot_save(grid: MemoryGrid) -> bytes:
    """Serialize a grid; an all-zero grid saves as a header-only snapshot.

    Validates the grid first so a corrupted in-memory state cannot be
    laundered through a save/load cycle.
    """
    grid.validate()
    has_payload = 0 if grid.is_empty() else 1
    header = _HEADER.pack(
        _SNAPSHOT_MAGIC,
        _SNAPSHOT_VERSION,
        grid.breadth,
        grid.length,
        grid.feature_dim,
        grid.grid_spec.cell_size,
        grid.grid_spec.origin_x,
        grid.grid_spec.origin_y,
        has_payload,
    )
    if not has_payload:
        return header
    return b"".join(
        (header, grid.m.astype("<f4", copy=False).tobytes(), grid.v.astype("<u4", copy=False).tobytes())
    )


def snapshot_load(data: bytes) -> MemoryGrid:
    """Parse bytes produced by snapshot_save; raises MalformedSnapshotError."""
    if len(data) < _HEADER.size:
        raise MalformedSnapshotError(
            f"truncated header: need {_HEADER.size} bytes, have {len(data)} (offset {len(data)})"
        )
    magic, version, a, l, d2, cell, ox, oy, has_payload = _HEADER.unpack_from(data, 0)
    if magic != _SNAPSHOT_MAGIC:
        raise MalformedSnapshotError(f"bad magic {magic!r} at offset 0")
    if version != _SNAPSHOT_VERSION:
        raise MalformedSnapshotError(f"unsupported version {version} at offset 4")
    if a < 1 or l < 1 or d2 < 1:
        raise MalformedSnapshotError(f"degenerate dimensions ({a}, {l}, {d2}) at offset 8")
    if not (np.isfinite(cell) and cell > 0):
        raise MalformedSnapshotError(f"invalid cell size {cell} at offset 20")
    if not (np.isfinite(ox) and np.isfinite(oy)):
        raise MalformedSnapshotError("non-finite origin at offset 28")
    if has_payload not in (0, 1):
        raise MalformedSnapshotError(f"invalid payload flag {has_payload} at offset 44")
    spec = GridSpec(origin_x=ox, origin_y=oy, cell_size=cell, breadth=a, length=l)
    if not has_payload:
        if len(data) != _HEADER.size:
            raise MalformedSnapshotError(
                f"trailing bytes after header-only snapshot at offset {_HEADER.size}"
            )
        return MemoryGrid(spec, d2)
    m_bytes = a * l * d2 * 4
    v_bytes = a * l * 4
    expected = _HEADER.size + m_bytes + v_bytes
    if len(data) != expected:
        raise MalformedSnapshotError(
            f"payload size mismatch: expected {expected} bytes, have {len(data)} "
            f"(offset {min(len(data), expected)})"
        )
    m = np.frombuffer(data, dtype="<f4", count=a * l * d2, offset=_HEADER.size)
    v = np.frombuffer(data, dtype="<u4", count=a * l, offset=_HEADER.size + m_bytes)
    if not np.all(np.isfinite(m)):
        raise MalformedSnapshotError(f"non-finite feature payload at offset {_HEADER.size}")
    # frombuffer views are read-only; the grid must own writable storage
    grid = MemoryGrid(spec, d2, m.reshape(a, l, d2).copy(), v.reshape(a, l).copy())
    try:
        grid.validate()
    except ValueError as exc:
        raise MalformedSnapshotError(f"invariant violation in payload: {exc}") from exc
    return grid


# ---------------------------------------------------------------------------
# enhancement projection matrices

def random_orthonormal_columns(d_in: int, d_out: int, rng: np.random.Generator) -> np.ndarray:
    """Deterministic (d_in, d_out) matrix with orthonormal columns."""
    if d_out > d_in:
        raise ValueError("d_out must not exceed d_in")
    gauss = rng.standard_normal((d_in, d_out))
    q, r = np.linalg.qr(gauss)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def fit_projection(
    memory_features: np.ndarray | Sequence,
    pixel_features: np.ndarray | Sequence,
    ridge: float = 1e-3,
) -> np.ndarray:
    """Least-squares W minimizing ||Z_m W - Z_p||^2 + ridge ||W||^2.

    Stands in for the trained read-out projection: given co-located
    (memory feature, pixel feature) pairs from a calibration pass, the
    fitted W maps memory features into the pixel-feature space.
    """
    z_m = np.asarray(memory_features, dtype=np.float64)
    z_p = np.asarray(pixel_features, dtype=np.float64)
    if z_m.ndim != 2 or z_p.ndim != 2 or z_m.shape[0] != z_p.shape[0]:
        raise DimensionMismatchError("need matching (n, d2) and (n, d1) sample matrices")
    if z_m.shape[0] == 0:
        raise ValueError("cannot fit a projection from zero samples")
    gram = z_m.T @ z_m + ridge * np.eye(z_m.shape[1])
    return np.linalg.solve(gram, z_m.T @ z_p)
