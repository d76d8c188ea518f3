"""Metrics and protocols: AP50, the per-episode object recall task,
class remapping and embedding perturbation, and parameter sweeps.

Box convention everywhere: (x1, y1, x2, y2) with x along image columns,
areas computed in continuous coordinates.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .detector import ClassEmbeddingTable
from .errors import MalformedStreamError
from .memory import score as score_proposals
from .seeding import STREAM_PERTURB, rng_for


@dataclass(frozen=True)
class Detection:
    """One scored, classified box in one frame."""

    class_id: int
    score: float
    box: tuple[float, float, float, float]

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")
        x1, y1, x2, y2 = self.box
        if not (x1 < x2 and y1 < y2):
            raise ValueError(f"degenerate box {self.box}")


@dataclass(frozen=True)
class GroundTruthBox:
    class_id: int
    box: tuple[float, float, float, float]


def detections_from_output(output, table: ClassEmbeddingTable) -> list[Detection]:
    """Classify detector proposals: argmax class by score, one Detection each."""
    if output.n_proposals == 0:
        return []
    s = score_proposals(output.object_features, table, output.objectness)
    classes = np.argmax(s, axis=1)
    return [
        Detection(
            class_id=int(classes[i]),
            score=float(s[i, classes[i]]),
            box=tuple(float(v) for v in output.boxes[i]),
        )
        for i in range(output.n_proposals)
    ]


def gt_boxes_from_frame(frame) -> list[GroundTruthBox]:
    return [
        GroundTruthBox(class_id=g.class_id, box=tuple(float(v) for v in g.box))
        for g in frame.gt
    ]


def iou(box_a, box_b) -> float:
    """Intersection over union of two (x1, y1, x2, y2) boxes."""
    ax1, ay1, ax2, ay2 = box_a
    bx1, by1, bx2, by2 = box_b
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union


def ap50(
    det_frames: Sequence[Sequence[Detection]],
    gt_frames: Sequence[Sequence[GroundTruthBox]],
    iou_threshold: float = 0.5,
) -> tuple[float | None, dict[int, float]]:
    """Average precision per class and its mean over classes with GT.

    Detections are ranked by score (ties: earlier frame, then earlier
    in-frame position) and greedily matched to the unmatched same-frame
    GT of their class with the highest IoU at or above the threshold
    (IoU ties: lowest GT position). AP is the area under the
    interpolated precision envelope of the resulting curve. Classes
    that appear only in detections are ignored; (None, {}) when no GT.
    """
    if len(det_frames) != len(gt_frames):
        raise MalformedStreamError(
            f"{len(det_frames)} detection frames vs {len(gt_frames)} GT frames"
        )
    classes = sorted({g.class_id for frame in gt_frames for g in frame})
    per_class = {}
    for cls in classes:
        n_gt = sum(1 for frame in gt_frames for g in frame if g.class_id == cls)
        ranked = sorted(
            (
                (-det.score, f_idx, d_idx, det.box)
                for f_idx, frame in enumerate(det_frames)
                for d_idx, det in enumerate(frame)
                if det.class_id == cls
            ),
        )
        matched = set()
        flags = []
        for _, f_idx, _, box in ranked:
            best_iou, best_gt = 0.0, None
            for g_idx, g in enumerate(gt_frames[f_idx]):
                if g.class_id != cls or (f_idx, g_idx) in matched:
                    continue
                cur = iou(box, g.box)
                if cur >= iou_threshold and cur > best_iou:
                    best_iou, best_gt = cur, g_idx
            if best_gt is not None:
                matched.add((f_idx, best_gt))
                flags.append(True)
            else:
                flags.append(False)
        per_class[cls] = _envelope_area(flags, n_gt)
    if not per_class:
        return None, per_class
    return sum(per_class.values()) / len(per_class), per_class


def _envelope_area(flags, n_gt):
    if n_gt == 0:
        return 0.0
    points = []
    tp = 0
    for rank, is_tp in enumerate(flags, start=1):
        if is_tp:
            tp += 1
            points.append((tp / n_gt, tp / rank))
    ap = 0.0
    prev_recall = 0.0
    for k, (recall, _) in enumerate(points):
        if recall == prev_recall:
            continue
        ap += (recall - prev_recall) * max(p for _, p in points[k:])
        prev_recall = recall
    return ap


# ---------------------------------------------------------------------------
# object recall task


@dataclass(frozen=True)
class RecallTaskConfig:
    """A class counts as encountered after a run of confident,
    spatially stable detections within one episode."""

    episode_len: int = 100
    score_threshold: float = 0.3
    consecutive_frames: int = 5
    association_iou: float = 0.6
    verify_iou: float = 0.5

    def __post_init__(self):
        if self.episode_len < 1 or self.consecutive_frames < 1:
            raise ValueError("episode_len and consecutive_frames must be >= 1")
        for name in ("score_threshold", "association_iou", "verify_iou"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {v}")


@dataclass(frozen=True)
class EpisodeRecall:
    """Per-episode decisions for every class the stream was asked about."""

    episode_index: int
    present: frozenset
    encountered: frozenset
    correct_box: frozenset  # encountered, present, and box-verified

    def __post_init__(self):
        if not self.correct_box <= (self.encountered & self.present):
            raise ValueError("correct_box must be a subset of encountered & present")


@dataclass(frozen=True)
class RecallResult:
    episodes: tuple
    n_classes: int

    @property
    def n_decisions(self) -> int:
        return len(self.episodes) * self.n_classes

    @property
    def true_positives(self) -> int:
        return sum(len(e.correct_box) for e in self.episodes)

    @property
    def predicted_positives(self) -> int:
        return sum(len(e.encountered) for e in self.episodes)

    @property
    def actual_positives(self) -> int:
        return sum(len(e.present) for e in self.episodes)

    @property
    def true_negatives(self) -> int:
        return sum(
            self.n_classes - len(e.encountered | e.present) for e in self.episodes
        )

    @property
    def precision(self) -> float | None:
        n = self.predicted_positives
        return self.true_positives / n if n else None

    @property
    def recall(self) -> float | None:
        n = self.actual_positives
        return self.true_positives / n if n else None

    @property
    def accuracy(self) -> float | None:
        n = self.n_decisions
        return (self.true_positives + self.true_negatives) / n if n else None

    def to_json(self) -> dict:
        return {
            "episodes": len(self.episodes),
            "classes": self.n_classes,
            "true_positives": self.true_positives,
            "predicted_positives": self.predicted_positives,
            "actual_positives": self.actual_positives,
            "precision": self.precision,
            "recall": self.recall,
            "accuracy": self.accuracy,
        }


def recall_task(
    det_frames: Sequence[Sequence[Detection]],
    gt_frames: Sequence[Sequence[GroundTruthBox]],
    config: RecallTaskConfig,
    n_classes: int,
) -> RecallResult:
    """Decide, per episode and class, whether the agent encountered it.

    A class is encountered when some run of detections in consecutive
    frames reaches config.consecutive_frames, every detection scores
    above score_threshold, and each consecutive pair of boxes overlaps
    at IoU >= association_iou. Each encountered class returns its
    highest-score detection (ties: earliest frame, then in-frame
    position); the decision is box-verified when that box matches a
    same-frame GT instance of the class at IoU >= verify_iou.

    The stream must split exactly into episodes of config.episode_len
    frames aligned with the GT stream; anything else raises
    MalformedStreamError.
    """
    if len(det_frames) != len(gt_frames):
        raise MalformedStreamError(
            f"{len(det_frames)} detection frames vs {len(gt_frames)} GT frames"
        )
    if not det_frames:
        raise MalformedStreamError("empty detection stream")
    if len(det_frames) % config.episode_len != 0:
        raise MalformedStreamError(
            f"{len(det_frames)} frames do not split into episodes of {config.episode_len}"
        )
    if n_classes < 1:
        raise MalformedStreamError("need n_classes >= 1")
    episodes = []
    for ep_idx in range(len(det_frames) // config.episode_len):
        lo = ep_idx * config.episode_len
        hi = lo + config.episode_len
        episodes.append(
            _episode_recall(ep_idx, det_frames[lo:hi], gt_frames[lo:hi], config, n_classes)
        )
    return RecallResult(episodes=tuple(episodes), n_classes=n_classes)


def _episode_recall(ep_idx, det_frames, gt_frames, config, n_classes):
    present = frozenset(g.class_id for frame in gt_frames for g in frame)
    encountered = set()
    chains = {}  # class_id -> [(box, run_length)] in the previous frame
    for frame in det_frames:
        next_chains = {}
        for det in frame:
            if det.score <= config.score_threshold:
                continue
            run = 1
            for prev_box, prev_run in chains.get(det.class_id, ()):
                if prev_run + 1 > run and iou(det.box, prev_box) >= config.association_iou:
                    run = prev_run + 1
            if run >= config.consecutive_frames:
                encountered.add(det.class_id)
            next_chains.setdefault(det.class_id, []).append((det.box, run))
        chains = next_chains
    correct = set()
    for cls in encountered:
        f_idx, det = max(
            (
                (f, d)
                for f, frame in enumerate(det_frames)
                for d in frame
                if d.class_id == cls
            ),
            key=lambda fd: (fd[1].score, -fd[0]),
        )
        if cls in present and any(
            g.class_id == cls and iou(det.box, g.box) >= config.verify_iou
            for g in gt_frames[f_idx]
        ):
            correct.add(cls)
    if any(c >= n_classes or c < 0 for c in present | encountered):
        raise MalformedStreamError("class id outside [0, n_classes)")
    return EpisodeRecall(
        episode_index=ep_idx,
        present=present,
        encountered=frozenset(encountered),
        correct_box=frozenset(correct),
    )


# ---------------------------------------------------------------------------
# class remapping


def remap_classes(
    table: ClassEmbeddingTable,
    mapping: dict | None = None,
    *,
    perturb_cosine: float | None = None,
    seed: int = 0,
) -> ClassEmbeddingTable:
    """Rebind evaluation classes to other or perturbed embeddings.

    mapping sends class names to other class names in the same table;
    mapped classes take their target's embedding, so many-to-one
    mappings merge classes for scoring purposes. perturb_cosine instead
    rotates every embedding toward a seeded random direction until its
    cosine with the original equals the given value, modeling synonym
    drift. The two modes are exclusive.
    """
    if mapping is not None and perturb_cosine is not None:
        raise ValueError("choose either mapping or perturbation, not both")
    if perturb_cosine is not None:
        if not -1.0 <= perturb_cosine <= 1.0:
            raise ValueError("perturb_cosine must be in [-1, 1]")
        rng = rng_for(seed, STREAM_PERTURB)
        sin = np.sqrt(max(0.0, 1.0 - perturb_cosine * perturb_cosine))
        rows = np.empty_like(table.embeddings)
        for c in range(table.n_classes):
            z = table.embeddings[c]
            g = rng.standard_normal(table.dim)
            g -= (g @ z) * z
            norm = np.linalg.norm(g)
            if norm < 1e-12:  # astronomically unlikely; redraw once
                g = rng.standard_normal(table.dim)
                g -= (g @ z) * z
                norm = np.linalg.norm(g)
            rows[c] = perturb_cosine * z + sin * (g / norm)
        return ClassEmbeddingTable(table.names, rows)
    rows = table.embeddings.copy()
    for source, target in (mapping or {}).items():
        rows[table.index(source)] = table.embeddings[table.index(target)]
    return ClassEmbeddingTable(table.names, rows)


# ---------------------------------------------------------------------------
# reports and sweeps


@dataclass(frozen=True)
class EvalReport:
    """Metrics from one experiment arm."""

    mean_ap: float | None
    per_class_ap: dict = field(default_factory=dict)
    recall: RecallResult | None = None
    n_frames: int = 0
    n_detections: int = 0

    def __post_init__(self):
        values = list(self.per_class_ap.values())
        if self.mean_ap is not None:
            values.append(self.mean_ap)
        for v in values:
            if not 0.0 <= v <= 1.0 + 1e-12:
                raise ValueError(f"AP value {v} outside [0, 1]")

    def to_json(self) -> dict:
        return {
            "mean_ap": self.mean_ap,
            "per_class_ap": {str(k): v for k, v in sorted(self.per_class_ap.items())},
            "recall": self.recall.to_json() if self.recall is not None else None,
            "n_frames": self.n_frames,
            "n_detections": self.n_detections,
        }


def sweep(runner: Callable, values: Sequence) -> list[tuple]:
    """Evaluate one configuration per grid value, in order.

    runner maps a grid value to an EvalReport; a single-value grid is
    exactly one run. Results keep the grid order.
    """
    values = list(values)
    if not values:
        raise ValueError("sweep grid must be nonempty")
    return [(v, runner(v)) for v in values]


def sweep_rows(param_name: str, points: Sequence[tuple]) -> list[dict]:
    """Flatten sweep results into JSON-compatible rows."""
    rows = []
    for value, report in points:
        row = {param_name: value, "mean_ap": report.mean_ap}
        if report.recall is not None:
            row["recall"] = report.recall.recall
            row["precision"] = report.recall.precision
            row["accuracy"] = report.recall.accuracy
        rows.append(row)
    return rows
