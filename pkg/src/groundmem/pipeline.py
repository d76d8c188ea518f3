"""Online experiment loop joining the detector, a memory, and evaluation.

Each frame is processed causally: the detector runs, its pixel features
are enhanced using memory written from earlier frames only, and the
un-enhanced output is then absorbed into memory. Sensor noise perturbs
the projection path (the pose and depth used to cast rays), never the
detector's own inputs or the ground truth, so degradation measures how
well each memory tolerates being aimed wrong.
"""

from dataclasses import dataclass

import numpy as np

from .baselines import (
    DEFAULT_HIDDEN_DIM,
    DEFAULT_LAMBDA_EXPLICIT,
    DEFAULT_LAMBDA_PIXEL,
    DEFAULT_TAU_O,
    GRUWeights,
    PixelMemoryGrid,
    decode_semantic_map,
    explicit_read,
    make_gru_weights,
    occupancy,
    pixel_read,
    pixel_snapshot_save,
    pixel_write,
)
from .detector import (
    ClassEmbeddingTable,
    CorruptionConfig,
    PixelFeatureSpace,
    detect_enhanced,
    oracle_detect,
)
from .errors import ConfigError, DataError
from .evaluation import (
    EvalReport,
    RecallTaskConfig,
    ap50,
    detections_from_output,
    gt_boxes_from_frame,
    recall_task,
)
from .geometry import (
    CameraIntrinsics,
    GridSpec,
    downsample_to_feature_grid,
    extrinsics_from_pose,
    intrinsics_for_stride,
)
from .memory import (
    EnhancementParams,
    MemoryGrid,
    fit_projection,
    pixel_ray_cells,
    project_object_features,
    random_orthonormal_columns,
    read,
    select_confident,
    snapshot_save,
    write,
)
from .seeding import STREAM_WEIGHTS, rng_for
from .simulator import Episode, NoiseConfig, Scene, apply_sensor_noise

VARIANTS = ("none", "implicit-object", "explicit-object", "implicit-pixel")

DEFAULT_TAU_S = 0.3


class NoMemory:
    """Pass-through backend; the detection head sees raw pixel features."""

    variant = "none"

    def reset(self):
        pass

    def enhance(self, z_p, depth, intrinsics, extrinsics):
        return z_p

    def observe(self, output, depth, intrinsics, extrinsics):
        pass

    def snapshot(self):
        return None


class ImplicitObjectMemory:
    """Ground-plane feature store written from confident detections.

    Reads add the per-cell mean object feature, projected into pixel
    space, along every pixel ray that lands in a viewed cell.
    """

    variant = "implicit-object"

    def __init__(
        self,
        grid_spec: GridSpec,
        table: ClassEmbeddingTable,
        reader_weights: np.ndarray,
        lam: float = 5.0,
        tau_s: float = DEFAULT_TAU_S,
    ):
        self.table = table
        self.tau_s = tau_s
        self.params = EnhancementParams(w_m=reader_weights, lam=lam)
        self.grid = MemoryGrid(grid_spec, feature_dim=table.dim)

    def reset(self):
        self.grid.reset()

    def enhance(self, z_p, depth, intrinsics, extrinsics):
        return read(z_p, self.grid, depth, intrinsics, extrinsics, self.params)

    def observe(self, output, depth, intrinsics, extrinsics):
        confident = select_confident(output, self.table, self.tau_s)
        frame = project_object_features(
            confident, depth, intrinsics, extrinsics, self.grid.grid_spec
        )
        write(self.grid, frame)

    def snapshot(self):
        return snapshot_save(self.grid)


class ExplicitObjectMemory(ImplicitObjectMemory):
    """Same write path, but reads go through a hard semantic map.

    The grid is collapsed to occupancy plus per-cell class labels before
    every read, so enhancement injects the decoded class embedding
    instead of the stored feature mean.
    """

    variant = "explicit-object"

    def __init__(
        self,
        grid_spec: GridSpec,
        table: ClassEmbeddingTable,
        reader_weights: np.ndarray,
        lam: float = DEFAULT_LAMBDA_EXPLICIT,
        tau_s: float = DEFAULT_TAU_S,
        tau_o: float = DEFAULT_TAU_O,
        norm_of_mean: bool = False,
    ):
        super().__init__(grid_spec, table, reader_weights, lam=lam, tau_s=tau_s)
        self.tau_o = tau_o
        self.norm_of_mean = norm_of_mean

    def enhance(self, z_p, depth, intrinsics, extrinsics):
        occ = occupancy(self.grid, self.tau_o, norm_of_mean=self.norm_of_mean)
        semantic = decode_semantic_map(self.grid, occ, self.table)
        return explicit_read(
            z_p, semantic, self.table, depth, intrinsics, extrinsics, self.params
        )


class ImplicitPixelMemory:
    """Recurrent per-cell state fed by every valid pixel, no confidence gate."""

    variant = "implicit-pixel"

    def __init__(
        self,
        grid_spec: GridSpec,
        weights: GRUWeights,
        reader_weights: np.ndarray,
        lam: float = DEFAULT_LAMBDA_PIXEL,
    ):
        self.weights = weights
        self.params = EnhancementParams(w_m=reader_weights, lam=lam)
        self.data = PixelMemoryGrid(grid_spec, weights)

    def reset(self):
        self.data = PixelMemoryGrid(self.data.grid_spec, self.weights)

    def enhance(self, z_p, depth, intrinsics, extrinsics):
        return pixel_read(z_p, self.data, depth, intrinsics, extrinsics, self.params)

    def observe(self, output, depth, intrinsics, extrinsics):
        pixel_write(self.data, output.pixel_features, depth, intrinsics, extrinsics)

    def snapshot(self):
        return pixel_snapshot_save(self.data)


def default_reader_weights(d_in: int, d_out: int, seed: int = 0) -> np.ndarray:
    """Seeded orthonormal read projection (orthonormal rows if d_in < d_out)."""
    rng = rng_for(seed, STREAM_WEIGHTS, 3)
    if d_in >= d_out:
        return random_orthonormal_columns(d_in, d_out, rng)
    return random_orthonormal_columns(d_out, d_in, rng).T


def make_backend(
    variant: str,
    grid_spec: GridSpec,
    table: ClassEmbeddingTable,
    space: PixelFeatureSpace,
    *,
    lam: float | None = None,
    tau_s: float = DEFAULT_TAU_S,
    tau_o: float = DEFAULT_TAU_O,
    norm_of_mean: bool = False,
    hidden_dim: int = DEFAULT_HIDDEN_DIM,
    weight_seed: int = 0,
    reader_weights: np.ndarray | None = None,
):
    """Build the memory backend for a variant with defaulted parameters."""
    if table.dim != space.feature_dim:
        raise ConfigError(
            f"table dim {table.dim} does not match feature space {space.feature_dim}"
        )
    if variant == "none":
        return NoMemory()
    if variant == "implicit-object":
        w = reader_weights
        if w is None:
            w = default_reader_weights(table.dim, space.pixel_dim, weight_seed)
        return ImplicitObjectMemory(
            grid_spec, table, w, lam=5.0 if lam is None else lam, tau_s=tau_s
        )
    if variant == "explicit-object":
        w = reader_weights
        if w is None:
            w = default_reader_weights(table.dim, space.pixel_dim, weight_seed)
        return ExplicitObjectMemory(
            grid_spec,
            table,
            w,
            lam=DEFAULT_LAMBDA_EXPLICIT if lam is None else lam,
            tau_s=tau_s,
            tau_o=tau_o,
            norm_of_mean=norm_of_mean,
        )
    if variant == "implicit-pixel":
        weights = make_gru_weights(space.pixel_dim, hidden_dim, seed=weight_seed)
        w = reader_weights
        if w is None:
            w = default_reader_weights(hidden_dim, space.pixel_dim, weight_seed)
        return ImplicitPixelMemory(
            grid_spec, weights, w, lam=DEFAULT_LAMBDA_PIXEL if lam is None else lam
        )
    raise ConfigError(f"unknown memory variant {variant!r}")


_CLEAN = CorruptionConfig(objectness_range=(1.0, 1.0))


def calibration_pairs(
    scene: Scene,
    episodes,
    table: ClassEmbeddingTable,
    space: PixelFeatureSpace,
    *,
    intrinsics: CameraIntrinsics,
    stride: int = 4,
    min_pixels: int = 16,
    camera_height: float = 1.25,
    camera_pitch: float = 0.0,
    tau_s: float = DEFAULT_TAU_S,
):
    """(object feature, mask-pooled pixel feature) pairs from clean detections."""
    obj, pooled = [], []
    frame_index = 0
    for ep in episodes:
        for frame in ep.frames:
            out = oracle_detect(
                scene,
                frame.pose,
                frame.depth,
                intrinsics,
                table,
                _CLEAN,
                space,
                frame_index=frame_index,
                stride=stride,
                min_pixels=min_pixels,
                camera_height=camera_height,
                camera_pitch=camera_pitch,
                ground_truth_objects=frame.gt,
            )
            frame_index += 1
            confident = select_confident(out, table, tau_s)
            for k in range(len(confident)):
                obj.append(confident.features[k])
                pooled.append(out.pixel_features[confident.masks[k]].mean(axis=0))
    return np.asarray(obj, dtype=np.float64), np.asarray(pooled, dtype=np.float64)


def calibrate_object_projection(
    scene: Scene,
    episodes,
    table: ClassEmbeddingTable,
    space: PixelFeatureSpace,
    *,
    ridge: float = 1e-3,
    **render_kwargs,
) -> np.ndarray:
    """Fit the read projection by regressing object features onto the
    co-located pooled pixel features of clean calibration detections."""
    z_o, z_pooled = calibration_pairs(scene, episodes, table, space, **render_kwargs)
    if z_o.size == 0:
        raise DataError("no confident detections in the calibration episodes")
    return fit_projection(z_o, z_pooled, ridge=ridge)


def calibrate_pixel_projection(
    scene: Scene,
    episodes,
    table: ClassEmbeddingTable,
    space: PixelFeatureSpace,
    weights: GRUWeights,
    grid_spec: GridSpec,
    *,
    ridge: float = 1e-3,
    intrinsics: CameraIntrinsics,
    stride: int = 4,
    min_pixels: int = 16,
    camera_height: float = 1.25,
    camera_pitch: float = 0.0,
) -> np.ndarray:
    """Fit a linear readout of the recurrent state against input means.

    Replays the calibration episodes through the recurrent write path,
    accumulating for every cell the mean pixel feature it received,
    then regresses final hidden states onto those means. The recurrence
    is nonlinear, so this is the best linear readout, not an inverse.
    """
    data = PixelMemoryGrid(grid_spec, weights)
    k_feat = intrinsics_for_stride(intrinsics, stride)
    n_cells = grid_spec.n_cells
    sums = np.zeros((n_cells, space.pixel_dim))
    counts = np.zeros(n_cells, dtype=np.int64)
    frame_index = 0
    for ep in episodes:
        for frame in ep.frames:
            out = oracle_detect(
                scene,
                frame.pose,
                frame.depth,
                intrinsics,
                table,
                _CLEAN,
                space,
                frame_index=frame_index,
                stride=stride,
                min_pixels=min_pixels,
                camera_height=camera_height,
                camera_pitch=camera_pitch,
                ground_truth_objects=frame.gt,
            )
            frame_index += 1
            ext = extrinsics_from_pose(frame.pose, camera_height, camera_pitch)
            depth_feat = downsample_to_feature_grid(frame.depth, stride)
            flat, usable, _, _ = pixel_ray_cells(depth_feat, k_feat, ext, grid_spec)
            landed = flat[usable]
            np.add.at(sums, landed, out.pixel_features[usable])
            np.add.at(counts, landed, 1)
            pixel_write(data, out.pixel_features, depth_feat, k_feat, ext)
    cells = np.flatnonzero(data.seen.reshape(-1) & (counts > 0))
    if cells.size == 0:
        raise DataError("calibration episodes never observed a memory cell")
    means = sums[cells] / counts[cells, None]
    states = data.p.reshape(n_cells, -1)[cells]
    return fit_projection(states, means, ridge=ridge)


@dataclass(frozen=True)
class ExperimentResult:
    report: EvalReport
    det_frames: list
    gt_frames: list
    snapshot: bytes | None


def run_experiment(
    scene: Scene,
    episodes,
    table: ClassEmbeddingTable,
    space: PixelFeatureSpace,
    backend,
    *,
    intrinsics: CameraIntrinsics,
    corruption: CorruptionConfig | None = None,
    noise: NoiseConfig | None = None,
    stride: int = 4,
    min_pixels: int = 16,
    camera_height: float = 1.25,
    camera_pitch: float = 0.0,
    persist_memory: bool = True,
    recall_config: RecallTaskConfig | None = None,
) -> ExperimentResult:
    """Run the online loop over episodes and score the detection stream.

    With persist_memory the backend carries state across episode
    boundaries; otherwise it is reset at the start of every episode.
    Frame indices run globally so detector corruption and sensor noise
    stay tied to absolute positions in the stream regardless of memory
    policy.
    """
    if corruption is None:
        corruption = CorruptionConfig()
    if noise is None:
        noise = NoiseConfig(scale=0.0)
    k_feat = intrinsics_for_stride(intrinsics, stride)
    det_frames = []
    gt_frames = []
    n_detections = 0
    frame_index = 0
    for ep in episodes:
        if not persist_memory:
            backend.reset()
        for frame in ep.frames:
            noisy_pose, noisy_depth = apply_sensor_noise(
                frame.pose, frame.depth, noise, frame_index=frame_index
            )
            ext = extrinsics_from_pose(noisy_pose, camera_height, camera_pitch)
            depth_feat = downsample_to_feature_grid(noisy_depth, stride)
            base = oracle_detect(
                scene,
                frame.pose,
                frame.depth,
                intrinsics,
                table,
                corruption,
                space,
                frame_index=frame_index,
                stride=stride,
                min_pixels=min_pixels,
                camera_height=camera_height,
                camera_pitch=camera_pitch,
                ground_truth_objects=frame.gt,
            )
            enhanced = detect_enhanced(
                base,
                lambda z_p: backend.enhance(z_p, depth_feat, k_feat, ext),
                space,
            )
            backend.observe(base, depth_feat, k_feat, ext)
            dets = detections_from_output(enhanced, table)
            det_frames.append(dets)
            gt_frames.append(gt_boxes_from_frame(frame))
            n_detections += len(dets)
            frame_index += 1
    mean_ap, per_class = ap50(det_frames, gt_frames)
    recall = None
    if recall_config is not None:
        recall = recall_task(det_frames, gt_frames, recall_config, len(table.names))
    report = EvalReport(
        mean_ap=mean_ap,
        per_class_ap=per_class,
        recall=recall,
        n_frames=len(det_frames),
        n_detections=n_detections,
    )
    return ExperimentResult(
        report=report,
        det_frames=det_frames,
        gt_frames=gt_frames,
        snapshot=backend.snapshot(),
    )
