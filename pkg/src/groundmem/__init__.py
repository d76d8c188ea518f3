"""groundmem: ground-plane feature memory for embodied object detection.

A desk-scale testbed: a synthetic depth/pose simulator, an oracle
detector with configurable corruption, three spatial memory variants
(implicit object, explicit object, implicit pixel), and the evaluation
protocols (AP50, object recall task, robustness sweeps) used to compare
them.

The usual workflow is generate_scene / generate_episodes, then
make_backend + run_experiment, then the report. Lower-level pieces
(projection geometry, the memory grid, the detector stub) are exported
for direct use; submodules hold the rest.
"""

from .baselines import (
    GRUWeights,
    OccupancyMap,
    PixelMemoryGrid,
    SemanticMap,
    decode_semantic_map,
    explicit_read,
    make_gru_weights,
    occupancy,
    occupancy_to_pgm,
    pixel_read,
    pixel_snapshot_load,
    pixel_snapshot_save,
    pixel_write,
    semantic_to_ppm,
)
from .detector import (
    ClassEmbeddingTable,
    CorruptionConfig,
    DetectorOutput,
    PixelFeatureSpace,
    detect_enhanced,
    load_embedding_table,
    make_embedding_table,
    oracle_detect,
    save_embedding_table,
)
from .errors import GroundmemError
from .evaluation import (
    Detection,
    EvalReport,
    GroundTruthBox,
    RecallTaskConfig,
    ap50,
    detections_from_output,
    gt_boxes_from_frame,
    iou,
    recall_task,
    remap_classes,
)
from .geometry import (
    CameraIntrinsics,
    Extrinsics,
    GridSpec,
    Pose,
    extrinsics_from_pose,
    intrinsics_for_stride,
    pixel_to_world,
    pixels_to_world,
    world_to_cell,
    world_to_pixel,
    world_to_pixels,
)
from .memory import (
    ConfidentObjects,
    EnhancementParams,
    MemoryGrid,
    ProjectedFeatureFrame,
    fit_projection,
    normalize,
    project_object_features,
    read,
    score,
    select_confident,
    snapshot_load,
    snapshot_save,
    write,
)
from .pipeline import (
    VARIANTS,
    ExperimentResult,
    calibrate_object_projection,
    calibrate_pixel_projection,
    make_backend,
    run_experiment,
)
from .simulator import (
    DEFAULT_INTRINSICS,
    Episode,
    Frame,
    NoiseConfig,
    Scene,
    apply_sensor_noise,
    generate_episodes,
    generate_scene,
    load_episode_pack,
    render_depth_and_owners,
    save_episode_pack,
    scene_from_json,
    scene_to_json,
    survey_episode,
)

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "ClassEmbeddingTable",
    "ConfidentObjects",
    "CorruptionConfig",
    "DEFAULT_INTRINSICS",
    "Detection",
    "DetectorOutput",
    "EnhancementParams",
    "Episode",
    "EvalReport",
    "ExperimentResult",
    "Extrinsics",
    "Frame",
    "GRUWeights",
    "GridSpec",
    "GroundTruthBox",
    "GroundmemError",
    "MemoryGrid",
    "NoiseConfig",
    "OccupancyMap",
    "PixelFeatureSpace",
    "PixelMemoryGrid",
    "Pose",
    "ProjectedFeatureFrame",
    "RecallTaskConfig",
    "Scene",
    "SemanticMap",
    "VARIANTS",
    "ap50",
    "apply_sensor_noise",
    "calibrate_object_projection",
    "calibrate_pixel_projection",
    "decode_semantic_map",
    "detect_enhanced",
    "detections_from_output",
    "explicit_read",
    "extrinsics_from_pose",
    "fit_projection",
    "generate_episodes",
    "generate_scene",
    "gt_boxes_from_frame",
    "intrinsics_for_stride",
    "iou",
    "load_embedding_table",
    "load_episode_pack",
    "make_backend",
    "make_embedding_table",
    "make_gru_weights",
    "normalize",
    "occupancy",
    "occupancy_to_pgm",
    "oracle_detect",
    "pixel_read",
    "pixel_snapshot_load",
    "pixel_snapshot_save",
    "pixel_to_world",
    "pixel_write",
    "pixels_to_world",
    "project_object_features",
    "read",
    "recall_task",
    "remap_classes",
    "render_depth_and_owners",
    "run_experiment",
    "save_embedding_table",
    "save_episode_pack",
    "scene_from_json",
    "scene_to_json",
    "score",
    "select_confident",
    "semantic_to_ppm",
    "snapshot_load",
    "snapshot_save",
    "survey_episode",
    "world_to_cell",
    "world_to_pixel",
    "world_to_pixels",
    "write",
]
