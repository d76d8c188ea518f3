"""Comparison memories sharing the feature-grid read/write interface.

Two baselines live here. The explicit object memory thresholds the
feature grid into a binary occupancy map, decodes each occupied cell to
its nearest class embedding, and reads back the hard class embedding
instead of the stored feature. The implicit pixel memory skips object
detection entirely: every frame's pixel features are pooled per cell
and merged into a recurrent hidden state.

Cell means and ray lookups reuse the projection arithmetic of the
feature grid, so all three memories disagree only in what they store,
never in where they store it.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, MalformedSnapshotError
from .geometry import CameraIntrinsics, Extrinsics, GridSpec
from .memory import EnhancementParams, MemoryGrid, normalize, pixel_ray_cells
from .seeding import STREAM_WEIGHTS, rng_for

DEFAULT_TAU_O = 0.4
DEFAULT_LAMBDA_EXPLICIT = 100.0
DEFAULT_LAMBDA_PIXEL = 20.0
DEFAULT_HIDDEN_DIM = 256


@dataclass(frozen=True)
class OccupancyMap:
    """Binary map of cells whose detection rate cleared the threshold."""

    grid_spec: GridSpec
    o: np.ndarray  # (breadth, length) bool

    def __post_init__(self):
        if self.o.shape != (self.grid_spec.breadth, self.grid_spec.length):
            raise DimensionMismatchError("occupancy shape does not match grid spec")
        if self.o.dtype != np.bool_:
            raise ValueError("occupancy must be boolean")


@dataclass(frozen=True)
class SemanticMap:
    """Per-cell class labels; 0 means unoccupied, c+1 means class c."""

    grid_spec: GridSpec
    s: np.ndarray  # (breadth, length) int32
    n_classes: int

    def __post_init__(self):
        if self.s.shape != (self.grid_spec.breadth, self.grid_spec.length):
            raise DimensionMismatchError("semantic map shape does not match grid spec")
        if self.s.min() < 0 or self.s.max() > self.n_classes:
            raise ValueError("semantic labels must lie in [0, n_classes]")


def occupancy(grid: MemoryGrid, tau_o: float = DEFAULT_TAU_O, *, norm_of_mean: bool = False) -> OccupancyMap:
    """Threshold each cell's detection rate into a binary map.

    The rate is ||M||_2 / V: unit-norm detection features make the sum
    norm count detections, so the ratio estimates how often a viewed
    cell contained a confident object. norm_of_mean switches the
    numerator to ||M / V||_2 (dividing by one more factor of V), kept
    as an alternative reading of the same ratio.
    """
    if tau_o < 0:
        raise ValueError("tau_o must be nonnegative")
    viewed = grid.v > 0
    norms = np.linalg.norm(grid.m.astype(np.float64), axis=2)
    rate = np.zeros(viewed.shape)
    denom = grid.v[viewed].astype(np.float64)
    if norm_of_mean:
        rate[viewed] = norms[viewed] / (denom * denom)
    else:
        rate[viewed] = norms[viewed] / denom
    return OccupancyMap(grid_spec=grid.grid_spec, o=viewed & (rate >= tau_o))


def decode_semantic_map(grid: MemoryGrid, occ: OccupancyMap, table) -> SemanticMap:
    """Label each occupied cell with its most similar class.

    Similarity is cosine against the normalized cell feature; since the
    per-cell norm is a shared positive factor (and embeddings are
    unit-norm), the argmax reduces to a dot product. Ties, including
    the all-zero feature, resolve to the lowest class index.
    """
    if occ.grid_spec != grid.grid_spec:
        raise DimensionMismatchError("occupancy was built for a different grid")
    if table.dim != grid.feature_dim:
        raise DimensionMismatchError(
            f"table dim {table.dim} != grid feature dim {grid.feature_dim}"
        )
    s = np.zeros((grid.breadth, grid.length), dtype=np.int32)
    if occ.o.any():
        mean = normalize(grid)[occ.o]
        scores = mean @ table.embeddings.T
        s[occ.o] = np.argmax(scores, axis=1).astype(np.int32) + 1
    return SemanticMap(grid_spec=grid.grid_spec, s=s, n_classes=table.n_classes)


def explicit_read(
    z_p: np.ndarray,
    semantic: SemanticMap,
    table,
    depth: np.ndarray,
    intrinsics: CameraIntrinsics,
    extrinsics: Extrinsics,
    params: EnhancementParams,
) -> np.ndarray:
    """Enhance pixel features with hard class embeddings.

    Each pixel's ray is looked up in the semantic map; pixels landing
    in an occupied cell receive lam * (z_l[class] @ w_m). Unoccupied
    cells and invalid rays leave the pixel unchanged, and lam = 0
    returns a bitwise copy.
    """
    z_p = np.asarray(z_p)
    if z_p.ndim != 3 or z_p.shape[:2] != depth.shape:
        raise DimensionMismatchError("pixel features must be (h, w, d1) matching depth")
    if params.w_m.shape != (table.dim, z_p.shape[2]):
        raise DimensionMismatchError(
            f"w_m must be {(table.dim, z_p.shape[2])}, got {params.w_m.shape}"
        )
    if params.lam == 0.0 or not semantic.s.any():
        return z_p.copy()
    flat, usable, _, _ = pixel_ray_cells(depth, intrinsics, extrinsics, semantic.grid_spec)
    labels = semantic.s.reshape(-1)[np.where(usable, flat, 0)]
    hit = usable & (labels > 0)
    out = z_p.astype(np.float64, copy=True)
    if hit.any():
        readings = table.embeddings @ params.w_m  # (C, d1)
        out[hit] += params.lam * readings[labels[hit] - 1]
    return out


# ---------------------------------------------------------------------------
# implicit pixel memory


@dataclass(frozen=True)
class GRUWeights:
    """Gated recurrent cell parameters, shared across all cells.

    Gate convention: z = sig(Wz x + Uz h + bz), r = sig(Wr x + Ur h + br),
    n = tanh(Wn x + r * (Un h) + bn), h' = (1 - z) * h + z * n.
    A zero update gate therefore leaves the state untouched.
    """

    w_z: np.ndarray
    u_z: np.ndarray
    b_z: np.ndarray
    w_r: np.ndarray
    u_r: np.ndarray
    b_r: np.ndarray
    w_n: np.ndarray
    u_n: np.ndarray
    b_n: np.ndarray

    def __post_init__(self):
        d3, d1 = self.w_z.shape
        for name in ("w_z", "w_r", "w_n"):
            if getattr(self, name).shape != (d3, d1):
                raise DimensionMismatchError(f"{name} must be ({d3}, {d1})")
        for name in ("u_z", "u_r", "u_n"):
            if getattr(self, name).shape != (d3, d3):
                raise DimensionMismatchError(f"{name} must be ({d3}, {d3})")
        for name in ("b_z", "b_r", "b_n"):
            if getattr(self, name).shape != (d3,):
                raise DimensionMismatchError(f"{name} must be ({d3},)")
        for name in ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_n", "u_n", "b_n"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} must be finite")

    @property
    def input_dim(self) -> int:
        return self.w_z.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w_z.shape[0]


def make_gru_weights(input_dim: int, hidden_dim: int = DEFAULT_HIDDEN_DIM, seed: int = 0) -> GRUWeights:
    """Seeded random cell weights; training is out of scope, so scaled
    Gaussian initialization stands in for learned parameters."""
    if input_dim < 1 or hidden_dim < 1:
        raise ValueError("dimensions must be positive")
    rng = rng_for(seed, STREAM_WEIGHTS, 2)
    w_scale = 1.0 / np.sqrt(input_dim)
    u_scale = 1.0 / np.sqrt(hidden_dim)
    def w():
        return w_scale * rng.standard_normal((hidden_dim, input_dim))
    def u():
        return u_scale * rng.standard_normal((hidden_dim, hidden_dim))
    zeros = np.zeros(hidden_dim)
    return GRUWeights(
        w_z=w(), u_z=u(), b_z=zeros.copy(),
        w_r=w(), u_r=u(), b_r=zeros.copy(),
        w_n=w(), u_n=u(), b_n=zeros.copy(),
    )


class PixelMemoryGrid:
    """Per-cell recurrent hidden state over the same ground-plane layout.

    p holds float64 hidden states (recurrences are precision-sensitive,
    so no float32 rounding between steps); seen marks cells that have
    ever been observed. Unobserved cells keep their zero initial state
    and are skipped by reads.
    """

    __slots__ = ("grid_spec", "weights", "p", "seen")

    def __init__(self, grid_spec: GridSpec, weights: GRUWeights, p=None, seen=None):
        self.grid_spec = grid_spec
        self.weights = weights
        shape = (grid_spec.breadth, grid_spec.length, weights.hidden_dim)
        if p is None:
            p = np.zeros(shape)
        if seen is None:
            seen = np.zeros(shape[:2], dtype=bool)
        if p.shape != shape:
            raise DimensionMismatchError(f"hidden state must have shape {shape}")
        if seen.shape != shape[:2] or seen.dtype != np.bool_:
            raise DimensionMismatchError("seen mask must be boolean at grid shape")
        self.p = np.asarray(p, dtype=np.float64)
        self.seen = seen

    @property
    def hidden_dim(self) -> int:
        return self.weights.hidden_dim

    @property
    def breadth(self) -> int:
        return self.grid_spec.breadth

    @property
    def length(self) -> int:
        return self.grid_spec.length

    def is_empty(self) -> bool:
        return not self.seen.any()

    def reset(self) -> None:
        self.p[:] = 0.0
        self.seen[:] = False

    def copy(self) -> "PixelMemoryGrid":
        return PixelMemoryGrid(self.grid_spec, self.weights, self.p.copy(), self.seen.copy())

    def validate(self) -> None:
        if not np.all(np.isfinite(self.p)):
            raise ValueError("hidden states must be finite")
        if np.any(self.p[~self.seen] != 0.0):
            raise ValueError("unseen cells must hold the zero initial state")


def _cell_means(z_p, flat, usable):
    """Mean pixel feature per observed cell: (cells, means)."""
    idx = flat[usable]
    if idx.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros((0, z_p.shape[-1]))
    values = z_p.reshape(-1, z_p.shape[-1])[usable.reshape(-1)].astype(np.float64)
    order = np.argsort(idx, kind="stable")
    idx_sorted = idx[order]
    starts = np.flatnonzero(np.r_[True, np.diff(idx_sorted) > 0])
    cells = idx_sorted[starts]
    sums = np.add.reduceat(values[order], starts, axis=0)
    counts = np.diff(np.r_[starts, idx_sorted.size])
    return cells, sums / counts[:, None]


def pixel_write(
    grid: PixelMemoryGrid,
    z_p: np.ndarray,
    depth: np.ndarray,
    intrinsics: CameraIntrinsics,
    extrinsics: Extrinsics,
) -> None:
    """Merge one frame of pixel features into the recurrent state.

    Every valid pixel ray votes its feature into its cell; each
    observed cell's mean drives one step of the shared recurrent cell.
    Cells outside the frustum are untouched, bitwise.
    """
    z_p = np.asarray(z_p)
    if z_p.ndim != 3 or z_p.shape[:2] != depth.shape:
        raise DimensionMismatchError("pixel features must be (h, w, d) matching depth")
    if z_p.shape[2] != grid.weights.input_dim:
        raise DimensionMismatchError(
            f"pixel feature dim {z_p.shape[2]} != cell input dim {grid.weights.input_dim}"
        )
    flat, usable, _, _ = pixel_ray_cells(depth, intrinsics, extrinsics, grid.grid_spec)
    cells, means = _cell_means(z_p, flat, usable)
    if cells.size == 0:
        return
    w = grid.weights
    h = grid.p.reshape(-1, grid.hidden_dim)[cells]
    x = means
    z = _sigmoid(x @ w.w_z.T + h @ w.u_z.T + w.b_z)
    r = _sigmoid(x @ w.w_r.T + h @ w.u_r.T + w.b_r)
    n = np.tanh(x @ w.w_n.T + r * (h @ w.u_n.T) + w.b_n)
    grid.p.reshape(-1, grid.hidden_dim)[cells] = (1.0 - z) * h + z * n
    grid.seen.reshape(-1)[cells] = True


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def pixel_read(
    z_p: np.ndarray,
    grid: PixelMemoryGrid,
    depth: np.ndarray,
    intrinsics: CameraIntrinsics,
    extrinsics: Extrinsics,
    params: EnhancementParams,
) -> np.ndarray:
    """Enhance pixel features with projected hidden states.

    Mirrors the feature-grid read: pixels whose rays land in an
    observed cell gain lam * (P[cell] @ w_m); lam = 0 or an untouched
    memory returns a bitwise copy.
    """
    z_p = np.asarray(z_p)
    if z_p.ndim != 3 or z_p.shape[:2] != depth.shape:
        raise DimensionMismatchError("pixel features must be (h, w, d1) matching depth")
    if params.w_m.shape != (grid.hidden_dim, z_p.shape[2]):
        raise DimensionMismatchError(
            f"w_m must be {(grid.hidden_dim, z_p.shape[2])}, got {params.w_m.shape}"
        )
    if params.lam == 0.0 or grid.is_empty():
        return z_p.copy()
    flat, usable, _, _ = pixel_ray_cells(depth, intrinsics, extrinsics, grid.grid_spec)
    hit = usable & grid.seen.reshape(-1)[np.where(usable, flat, 0)]
    out = z_p.astype(np.float64, copy=True)
    if hit.any():
        states = grid.p.reshape(-1, grid.hidden_dim)[flat[hit]]
        out[hit] += params.lam * (states @ params.w_m)
    return out


# ---------------------------------------------------------------------------
# snapshots

_PIXEL_MAGIC = b"GMPX"
_PIXEL_VERSION = 1
_PIXEL_HEADER = struct.Struct("<4sIIIIdddI")


def pixel_snapshot_save(grid: PixelMemoryGrid) -> bytes:
    """Serialize hidden states and the seen mask (weights travel
    separately; they are reproducible from their seed)."""
    grid.validate()
    has_payload = 0 if grid.is_empty() else 1
    header = _PIXEL_HEADER.pack(
        _PIXEL_MAGIC,
        _PIXEL_VERSION,
        grid.breadth,
        grid.length,
        grid.hidden_dim,
        grid.grid_spec.cell_size,
        grid.grid_spec.origin_x,
        grid.grid_spec.origin_y,
        has_payload,
    )
    if not has_payload:
        return header
    return b"".join(
        (header, grid.p.astype("<f8", copy=False).tobytes(), np.packbits(grid.seen).tobytes())
    )


def pixel_snapshot_load(data: bytes, weights: GRUWeights) -> PixelMemoryGrid:
    """Parse bytes from pixel_snapshot_save; raises MalformedSnapshotError."""
    size = _PIXEL_HEADER.size
    if len(data) < size:
        raise MalformedSnapshotError(
            f"snapshot truncated in header: {len(data)} < {size} bytes at offset 0"
        )
    magic, version, breadth, length, d3, cell, ox, oy, has_payload = _PIXEL_HEADER.unpack_from(data)
    if magic != _PIXEL_MAGIC:
        raise MalformedSnapshotError(f"bad magic {magic!r} at offset 0")
    if version != _PIXEL_VERSION:
        raise MalformedSnapshotError(f"unsupported version {version} at offset 4")
    if breadth < 1 or length < 1 or d3 < 1:
        raise MalformedSnapshotError("non-positive dimensions at offset 8")
    if not (np.isfinite(cell) and cell > 0 and np.isfinite(ox) and np.isfinite(oy)):
        raise MalformedSnapshotError("invalid cell size or origin at offset 20")
    if d3 != weights.hidden_dim:
        raise MalformedSnapshotError(
            f"snapshot hidden dim {d3} != cell weights dim {weights.hidden_dim}"
        )
    spec = GridSpec(origin_x=ox, origin_y=oy, cell_size=cell, breadth=breadth, length=length)
    if has_payload == 0:
        if len(data) != size:
            raise MalformedSnapshotError(f"trailing bytes after empty snapshot at offset {size}")
        return PixelMemoryGrid(spec, weights)
    if has_payload != 1:
        raise MalformedSnapshotError(f"bad payload flag {has_payload} at offset 44")
    n = breadth * length
    p_bytes = n * d3 * 8
    seen_bytes = (n + 7) // 8
    if len(data) != size + p_bytes + seen_bytes:
        raise MalformedSnapshotError(
            f"payload length {len(data) - size} != expected {p_bytes + seen_bytes} at offset {size}"
        )
    p = np.frombuffer(data, dtype="<f8", count=n * d3, offset=size).reshape(breadth, length, d3)
    packed = np.frombuffer(data, dtype=np.uint8, count=seen_bytes, offset=size + p_bytes)
    seen = np.unpackbits(packed, count=n).astype(bool).reshape(breadth, length)
    grid = PixelMemoryGrid(spec, weights, p.copy(), seen.copy())
    try:
        grid.validate()
    except ValueError as exc:
        raise MalformedSnapshotError(f"payload invalid at offset {size}: {exc}") from exc
    return grid


# ---------------------------------------------------------------------------
# image export


def occupancy_to_pgm(occ: OccupancyMap) -> bytes:
    """Binary portable graymap: occupied cells white, free cells black.

    Image rows follow the first grid axis, columns the second.
    """
    header = f"P5\n{occ.o.shape[1]} {occ.o.shape[0]}\n255\n".encode("ascii")
    return header + np.where(occ.o, 255, 0).astype(np.uint8).tobytes()


def class_palette(n_classes: int) -> np.ndarray:
    """Deterministic distinct colors, one per class, via stepped hues."""
    colors = np.zeros((n_classes, 3), dtype=np.uint8)
    for c in range(n_classes):
        hue = (c * 0.6180339887498949) % 1.0
        colors[c] = _hsv_to_rgb(hue, 0.75, 0.95)
    return colors


def _hsv_to_rgb(h, s, v):
    i = int(h * 6.0) % 6
    f = h * 6.0 - int(h * 6.0)
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    r, g, b = [
        (v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q),
    ][i]
    return np.array([round(r * 255), round(g * 255), round(b * 255)], dtype=np.uint8)


def semantic_to_ppm(semantic: SemanticMap) -> bytes:
    """Binary portable pixmap: unoccupied cells black, classes colored."""
    palette = np.vstack([np.zeros((1, 3), dtype=np.uint8), class_palette(semantic.n_classes)])
    image = palette[semantic.s]
    header = f"P6\n{semantic.s.shape[1]} {semantic.s.shape[0]}\n255\n".encode("ascii")
    return header + image.tobytes()
