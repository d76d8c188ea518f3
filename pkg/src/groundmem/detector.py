"""Base-detector contract, class embeddings, and a corruptible oracle detector.

The oracle detector stands in for a trained open-vocabulary detector:
it knows the scene's ground truth and emits one proposal per visible
object, then degrades its output according to a CorruptionConfig
(feature noise, dropout, misclassification, noisy objectness). Because
corruption is the only error source, memory effects can be measured in
isolation.

Pixel features live in a d1-dimensional space tied to the
d2-dimensional object-feature space by a fixed seeded linear map
(PixelFeatureSpace), so enhancement effects stay analyzable.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

import numpy as np

from .errors import DimensionMismatchError, MalformedTableError, UnknownClassError
from .geometry import CameraIntrinsics, Pose
from .memory import random_orthonormal_columns
from .seeding import STREAM_DETECTOR, STREAM_TABLE, STREAM_WEIGHTS, rng_for

if TYPE_CHECKING:
    from .simulator import Scene

__all__ = [
    "ClassEmbeddingTable",
    "DetectorOutput",
    "CorruptionConfig",
    "PixelFeatureSpace",
    "make_embedding_table",
    "save_embedding_table",
    "load_embedding_table",
    "oracle_detect",
    "detect_enhanced",
]


class ClassEmbeddingTable:
    """Unit-norm class embeddings z_l, one row per class name."""

    __slots__ = ("names", "embeddings", "_index")

    def __init__(self, names, embeddings):
        names = tuple(str(n) for n in names)
        embeddings = np.ascontiguousarray(embeddings, dtype=np.float64)
        if embeddings.ndim != 2 or embeddings.shape[0] != len(names):
            raise DimensionMismatchError("need one embedding row per class name")
        if len(set(names)) != len(names):
            raise ValueError("class names must be unique")
        if not names:
            raise ValueError("table must contain at least one class")
        if any(not n for n in names):
            raise ValueError("class names must be nonempty")
        if not np.all(np.isfinite(embeddings)):
            raise ValueError("embeddings must be finite")
        norms = np.linalg.norm(embeddings, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-6:
            raise ValueError("embedding rows must be unit-norm within 1e-6")
        self.names = names
        self.embeddings = embeddings
        self._index = {n: i for i, n in enumerate(names)}

    @property
    def n_classes(self) -> int:
        return len(self.names)

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownClassError(f"class {name!r} not in table") from None

    def max_pairwise_cosine(self) -> float:
        """Largest |cosine| between any two distinct class embeddings."""
        if self.n_classes < 2:
            return 0.0
        gram = np.abs(self.embeddings @ self.embeddings.T)
        np.fill_diagonal(gram, 0.0)
        return float(gram.max())

    def __repr__(self):
        return f"ClassEmbeddingTable({self.n_classes} classes, dim={self.dim})"


def make_embedding_table(
    n_classes: int, feature_dim: int = 512, seed: int = 0, names=None
) -> ClassEmbeddingTable:
    """Seeded random unit vectors standing in for projected text embeddings.

    At feature_dim well above n_classes the rows are nearly orthogonal;
    max_pairwise_cosine() reports how nearly.
    """
    if n_classes < 1:
        raise ValueError("need at least one class")
    if names is None:
        width = max(2, len(str(n_classes - 1)))
        names = [f"class{i:0{width}d}" for i in range(n_classes)]
    rng = rng_for(seed, STREAM_TABLE)
    rows = rng.standard_normal((n_classes, feature_dim))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return ClassEmbeddingTable(names, rows)


_TABLE_MAGIC = b"GMET"
_TABLE_VERSION = 1
_TABLE_HEADER = struct.Struct("<4sIII")  # magic, version, C, d2


def save_embedding_table(table: ClassEmbeddingTable) -> bytes:
    """Serialize: header, length-prefixed UTF-8 names, float32 rows."""
    parts = [_TABLE_HEADER.pack(_TABLE_MAGIC, _TABLE_VERSION, table.n_classes, table.dim)]
    for name in table.names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    parts.append(table.embeddings.astype("<f4").tobytes())
    return b"".join(parts)


def load_embedding_table(source) -> ClassEmbeddingTable:
    """Parse a table from bytes or a file path.

    Rows are re-normalized to unit norm; a drift above 1e-3 from unit
    length triggers a warning. Raises MalformedTableError on damage.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        if not isinstance(source, bytes):
            with open(source, "rb") as fh:
                source = fh.read()
    data = source
    if len(data) < _TABLE_HEADER.size:
        raise MalformedTableError(
            f"truncated header: need {_TABLE_HEADER.size} bytes, have {len(data)}"
        )
    magic, version, n_classes, dim = _TABLE_HEADER.unpack_from(data, 0)
    if magic != _TABLE_MAGIC:
        raise MalformedTableError(f"bad magic {magic!r} at offset 0")
    if version != _TABLE_VERSION:
        raise MalformedTableError(f"unsupported version {version} at offset 4")
    if n_classes < 1 or dim < 1:
        raise MalformedTableError(f"degenerate table shape ({n_classes}, {dim}) at offset 8")
    offset = _TABLE_HEADER.size
    names = []
    for _ in range(n_classes):
        if offset + 4 > len(data):
            raise MalformedTableError(f"truncated name length at offset {offset}")
        (n_bytes,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if offset + n_bytes > len(data):
            raise MalformedTableError(f"truncated name at offset {offset}")
        try:
            names.append(data[offset : offset + n_bytes].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise MalformedTableError(f"undecodable name at offset {offset}: {exc}") from exc
        offset += n_bytes
    row_bytes = n_classes * dim * 4
    if len(data) != offset + row_bytes:
        raise MalformedTableError(
            f"row payload size mismatch at offset {offset}: "
            f"expected {row_bytes} bytes, have {len(data) - offset}"
        )
    rows = np.frombuffer(data, dtype="<f4", count=n_classes * dim, offset=offset)
    rows = rows.reshape(n_classes, dim).astype(np.float64)
    if not np.all(np.isfinite(rows)):
        raise MalformedTableError(f"non-finite embedding payload at offset {offset}")
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms == 0):
        raise MalformedTableError("zero-norm embedding row cannot be normalized")
    if np.max(np.abs(norms - 1.0)) > 1e-3:
        warnings.warn(
            f"embedding rows drifted from unit norm by up to {np.max(np.abs(norms - 1.0)):.2e}; "
            "re-normalizing",
            stacklevel=2,
        )
    try:
        return ClassEmbeddingTable(names, rows / norms[:, None])
    except ValueError as exc:
        raise MalformedTableError(str(exc)) from exc


@dataclass
class DetectorOutput:
    """Per-frame detector contract.

    boxes: (k, 4) image-resolution (x1, y1, x2, y2), x along columns,
    half-open; masks: (k, h, w) booleans at feature-map resolution;
    objectness: (k,) in [0, 1]; object_features: (k, d2);
    pixel_features: (h, w, d1).
    """

    boxes: np.ndarray
    masks: np.ndarray
    objectness: np.ndarray
    object_features: np.ndarray
    pixel_features: np.ndarray

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        self.masks = np.asarray(self.masks, dtype=bool)
        self.objectness = np.asarray(self.objectness, dtype=np.float64).reshape(-1)
        self.object_features = np.asarray(self.object_features, dtype=np.float64)
        self.pixel_features = np.asarray(self.pixel_features, dtype=np.float64)
        k = self.boxes.shape[0]
        if self.masks.ndim != 3 or self.masks.shape[0] != k:
            raise DimensionMismatchError("masks must be (k, h, w)")
        if self.objectness.shape[0] != k or self.object_features.shape[0] != k:
            raise DimensionMismatchError("per-proposal arrays disagree on k")
        if self.pixel_features.ndim != 3 or self.pixel_features.shape[:2] != self.masks.shape[1:]:
            raise DimensionMismatchError("pixel_features must be (h, w, d1) at mask resolution")
        if k:
            if np.any(self.boxes[:, 0] >= self.boxes[:, 2]) or np.any(
                self.boxes[:, 1] >= self.boxes[:, 3]
            ):
                raise ValueError("boxes must satisfy x1 < x2 and y1 < y2")
            if np.any(~self.masks.any(axis=(1, 2))):
                raise ValueError("every proposal mask must be nonempty")
            if self.objectness.min() < 0 or self.objectness.max() > 1:
                raise ValueError("objectness must lie in [0, 1]")
        if not np.all(np.isfinite(self.object_features)) or not np.all(
            np.isfinite(self.pixel_features)
        ):
            raise ValueError("features must be finite")

    @property
    def n_proposals(self) -> int:
        return self.boxes.shape[0]


@dataclass(frozen=True)
class CorruptionConfig:
    """How the oracle detector degrades its perfect knowledge."""

    feature_noise_sigma: float = 0.0
    dropout_prob: float = 0.0
    misclass_prob: float = 0.0
    objectness_range: tuple[float, float] = (0.5, 1.0)
    seed: int = 0

    def __post_init__(self):
        if self.feature_noise_sigma < 0:
            raise ValueError("feature_noise_sigma must be nonnegative")
        for name in ("dropout_prob", "misclass_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        lo, hi = self.objectness_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError("objectness_range must satisfy 0 <= lo <= hi <= 1")


class PixelFeatureSpace:
    """Fixed seeded map between object features (d2) and pixel features (d1).

    down: (..., d2) @ D -> (..., d1); up: (..., d1) @ D^T -> (..., d2).
    D has orthonormal columns, so up(down(x)) projects x onto a
    d1-dimensional subspace rather than recovering it exactly.
    """

    __slots__ = ("matrix",)

    def __init__(self, feature_dim: int = 512, pixel_dim: int = 256, seed: int = 0):
        self.matrix = random_orthonormal_columns(
            feature_dim, pixel_dim, rng_for(seed, STREAM_WEIGHTS, 1)
        )

    @property
    def feature_dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def pixel_dim(self) -> int:
        return self.matrix.shape[1]

    def to_pixel(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != self.feature_dim:
            raise DimensionMismatchError(
                f"expected trailing dim {self.feature_dim}, got {features.shape[-1]}"
            )
        return features @ self.matrix

    def to_object(self, pixel_features: np.ndarray) -> np.ndarray:
        pixel_features = np.asarray(pixel_features, dtype=np.float64)
        if pixel_features.shape[-1] != self.pixel_dim:
            raise DimensionMismatchError(
                f"expected trailing dim {self.pixel_dim}, got {pixel_features.shape[-1]}"
            )
        return pixel_features @ self.matrix.T


def oracle_detect(
    scene: "Scene",
    pose: Pose,
    depth: np.ndarray,
    intrinsics: CameraIntrinsics,
    table: ClassEmbeddingTable,
    corruption: CorruptionConfig,
    space: PixelFeatureSpace,
    *,
    frame_index: int = 0,
    stride: int = 4,
    min_pixels: int = 16,
    camera_height: float = 1.25,
    camera_pitch: float = 0.0,
    ground_truth_objects=None,
) -> DetectorOutput:
    """One corrupted proposal per visible ground-truth object.

    Per visible object, in ground-truth order, the detector draws: a
    dropout coin, a misclassification coin and target, feature noise,
    and an objectness value. Objects failing the dropout coin are
    omitted from the proposal list but still imprint the pixel-feature
    map (the backbone saw them; the head missed them). Randomness is
    derived from (corruption.seed, frame_index), so streams are
    reproducible and frames independent.
    """
    from .simulator import ground_truth as extract_ground_truth

    if ground_truth_objects is None:
        ground_truth_objects = extract_ground_truth(
            scene,
            pose,
            depth,
            intrinsics,
            stride=stride,
            min_pixels=min_pixels,
            camera_height=camera_height,
            camera_pitch=camera_pitch,
        )
    gt = list(ground_truth_objects)
    rng = rng_for(corruption.seed, STREAM_DETECTOR, frame_index)
    n_classes = table.n_classes
    d2 = table.dim
    sigma = corruption.feature_noise_sigma
    h = intrinsics.height // stride
    w = intrinsics.width // stride

    dropped = []
    features = []
    objectness = []
    for obj in gt:
        u_drop = rng.uniform()
        u_mis = rng.uniform()
        target_offset = int(rng.integers(max(n_classes - 1, 1)))
        noise = rng.standard_normal(d2)
        o = rng.uniform(corruption.objectness_range[0], corruption.objectness_range[1])
        class_id = obj.class_id
        if n_classes > 1 and u_mis < corruption.misclass_prob:
            class_id = (class_id + 1 + target_offset) % n_classes
        feat = table.embeddings[class_id].copy()
        if sigma > 0:
            feat = feat + sigma * noise
        dropped.append(u_drop < corruption.dropout_prob)
        features.append(feat)
        objectness.append(o)

    # backbone view: every visible object imprints the pixel map, even
    # the ones the head will drop
    if sigma > 0:
        pixel_features = sigma * rng.standard_normal((h, w, space.pixel_dim))
    else:
        pixel_features = np.zeros((h, w, space.pixel_dim))
    for obj, feat in zip(gt, features):
        down = space.to_pixel(feat)
        if sigma > 0:
            n_pix = int(obj.mask.sum())
            pixel_features[obj.mask] = down + sigma * rng.standard_normal(
                (n_pix, space.pixel_dim)
            )
        else:
            pixel_features[obj.mask] = down

    keep = [i for i, drop in enumerate(dropped) if not drop]
    k = len(keep)
    boxes = np.zeros((k, 4))
    masks = np.zeros((k, h, w), dtype=bool)
    objn = np.zeros(k)
    z_o = np.zeros((k, d2))
    for row, i in enumerate(keep):
        boxes[row] = gt[i].box
        masks[row] = gt[i].mask
        objn[row] = objectness[i]
        z_o[row] = features[i]
    return DetectorOutput(
        boxes=boxes,
        masks=masks,
        objectness=objn,
        object_features=z_o,
        pixel_features=pixel_features,
    )


def detect_enhanced(
    output: DetectorOutput,
    reader: Callable[[np.ndarray], np.ndarray],
    space: PixelFeatureSpace,
) -> DetectorOutput:
    """Deterministic detection-head stub over enhanced pixel features.

    reader maps the pixel-feature map to its enhanced version (a memory
    read, or identity for the no-memory baseline). Each proposal's
    object feature is recomputed as the mask-average of the enhanced
    map lifted back to object-feature space; boxes, masks, and
    objectness stay fixed, so scoring the result re-ranks the same
    proposals.
    """
    z_e = reader(output.pixel_features)
    if z_e.shape != output.pixel_features.shape:
        raise DimensionMismatchError(
            f"reader changed pixel-feature shape {output.pixel_features.shape} -> {z_e.shape}"
        )
    k = output.n_proposals
    z_o = np.zeros((k, space.feature_dim))
    for i in range(k):
        z_o[i] = space.to_object(z_e[output.masks[i]].mean(axis=0))
    return DetectorOutput(
        boxes=output.boxes.copy(),
        masks=output.masks.copy(),
        objectness=output.objectness.copy(),
        object_features=z_o,
        pixel_features=z_e,
    )
