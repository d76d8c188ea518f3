"""Independent reference implementations used only by the test suite.

Each oracle recomputes a quantity the library also computes, but by a
deliberately different route (homogeneous matrices instead of direct
trig, per-face plane intersection instead of slab intervals, exact
rational arithmetic instead of floats, scalar loops instead of
vectorized numpy). Tests compare the two.
"""

import math
from fractions import Fraction

import numpy as np

WORLD_UP = np.array([0.0, 0.0, 1.0])


# ---------------------------------------------------------------------------
# camera geometry via 4x4 homogeneous matrices


def lookat_world_to_camera(pose_xyzt, camera_height, camera_pitch):
    """World-to-camera 4x4 built look-at style from explicit cross products.

    The camera-to-world matrix is assembled column-wise from the camera
    axes (row axis, column axis, forward axis) and then inverted
    numerically, so none of the library's transpose shortcuts are
    shared.
    """
    x, y, z, theta = pose_xyzt
    forward = np.array(
        [
            math.cos(theta) * math.cos(camera_pitch),
            math.sin(theta) * math.cos(camera_pitch),
            -math.sin(camera_pitch),
        ]
    )
    col_axis = np.cross(forward, WORLD_UP)
    col_axis = col_axis / np.linalg.norm(col_axis)
    row_axis = np.cross(col_axis, forward)
    center = np.array([x, y, z + camera_height])
    cam_to_world = np.eye(4)
    cam_to_world[:3, 0] = row_axis
    cam_to_world[:3, 1] = col_axis
    cam_to_world[:3, 2] = forward
    cam_to_world[:3, 3] = center
    return np.linalg.inv(cam_to_world)


def intrinsic_matrix(intr):
    """3x3 K acting on homogeneous (row, col, 1) pixel vectors."""
    return np.array(
        [
            [intr.fy, 0.0, intr.cy],
            [0.0, intr.fx, intr.cx],
            [0.0, 0.0, 1.0],
        ]
    )


def backproject_pixel(i, j, depth, intr, world_to_cam_4x4):
    """d * K^-1 * (i, j, 1), pushed through the inverted extrinsic matrix."""
    k_inv = np.linalg.inv(intrinsic_matrix(intr))
    p_cam = depth * (k_inv @ np.array([i, j, 1.0]))
    cam_to_world = np.linalg.inv(world_to_cam_4x4)
    p_h = cam_to_world @ np.array([p_cam[0], p_cam[1], p_cam[2], 1.0])
    return p_h[:3]


def project_point(point, intr, world_to_cam_4x4):
    """Returns (i, j, depth) or None when the point is not in front."""
    p_h = world_to_cam_4x4 @ np.array([point[0], point[1], point[2], 1.0])
    if p_h[2] <= 0:
        return None
    pix = intrinsic_matrix(intr) @ p_h[:3]
    return pix[0] / pix[2], pix[1] / pix[2], p_h[2]


# ---------------------------------------------------------------------------
# memory write replay


def replay_memory(n_cells_u, n_cells_v, feature_dim, frames):
    """Brute-force replay of a write sequence.

    frames: iterable of (proposals, visible_cells). proposals is an
    ordered list of (feature_vector, pixel_cells) pairs where
    pixel_cells lists the (u, v) cell of every contributing pixel
    (repeats allowed); visible_cells is an iterable of (u, v).

    The per-frame cell feature is the pixel-count-weighted combination
    of proposal features in proposal order, divided by the total pixel
    count, cast to float32 and accumulated into M; V counts visible
    frames. This mirrors the documented arithmetic contract so results
    must match bit for bit.
    """
    from collections import Counter

    m = np.zeros((n_cells_u, n_cells_v, feature_dim), dtype=np.float32)
    v = np.zeros((n_cells_u, n_cells_v), dtype=np.uint32)
    for proposals, visible_cells in frames:
        sums = {}
        counts = {}
        for feat, pixel_cells in proposals:
            feat = np.asarray(feat, dtype=np.float64)
            for cell, k in Counter(pixel_cells).items():
                if cell not in sums:
                    sums[cell] = np.zeros(feature_dim, dtype=np.float64)
                    counts[cell] = 0
                sums[cell] = sums[cell] + float(k) * feat
                counts[cell] += k
        for cell, total in sums.items():
            m[cell[0], cell[1]] += (total / counts[cell]).astype(np.float32)
        for cell in visible_cells:
            v[cell[0], cell[1]] += 1
    return m, v


# ---------------------------------------------------------------------------
# gated recurrent cell, scalar by scalar


def _sigmoid_scalar(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def gru_reference(x, h, weights):
    """One recurrence step computed with python loops over scalars.

    weights: object with w_z, u_z, b_z, w_r, u_r, b_r, w_n, u_n, b_n.
    Convention: z = sig(Wz x + Uz h + bz), r = sig(Wr x + Ur h + br),
    n = tanh(Wn x + r * (Un h) + bn), h' = (1 - z) * h + z * n.
    """
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    hidden = h.shape[0]

    def mat_vec(mat, vec):
        return [
            math.fsum(float(mat[r, c]) * float(vec[c]) for c in range(len(vec)))
            for r in range(hidden)
        ]

    wzx, uzh = mat_vec(weights.w_z, x), mat_vec(weights.u_z, h)
    wrx, urh = mat_vec(weights.w_r, x), mat_vec(weights.u_r, h)
    wnx, unh = mat_vec(weights.w_n, x), mat_vec(weights.u_n, h)
    out = np.empty(hidden)
    for k in range(hidden):
        z = _sigmoid_scalar(wzx[k] + uzh[k] + float(weights.b_z[k]))
        r = _sigmoid_scalar(wrx[k] + urh[k] + float(weights.b_r[k]))
        n = math.tanh(wnx[k] + r * unh[k] + float(weights.b_n[k]))
        out[k] = (1.0 - z) * h[k] + z * n
    return out


# ---------------------------------------------------------------------------
# ray casting by per-face plane intersection


def raycast_reference(origin, direction, boxes, floor_z=None, eps=1e-12):
    """Nearest positive-t hit of a ray against boxes and an optional floor.

    Each box is ((xmin, ymin, zmin), (xmax, ymax, zmax)). Checks all six
    face planes of every box one by one. Returns (t, kind, index) with
    kind in {"box", "floor"}, or None.
    """
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    best = None

    def consider(t, kind, index):
        nonlocal best
        if t > eps and (best is None or t < best[0]):
            best = (t, kind, index)

    for bi, (lo, hi) in enumerate(boxes):
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        for axis in range(3):
            for plane in (lo[axis], hi[axis]):
                if direction[axis] == 0.0:
                    continue
                t = (plane - origin[axis]) / direction[axis]
                if t <= eps:
                    continue
                p = origin + t * direction
                ok = True
                for other in range(3):
                    if other == axis:
                        continue
                    if p[other] < lo[other] - 1e-9 or p[other] > hi[other] + 1e-9:
                        ok = False
                        break
                if ok:
                    consider(t, "box", bi)
    if floor_z is not None and direction[2] != 0.0:
        t = (floor_z - origin[2]) / direction[2]
        consider(t, "floor", -1)
    return best


# ---------------------------------------------------------------------------
# exact AP50 with rational arithmetic


def iou_fraction(a, b):
    """Exact IoU of two (x1, y1, x2, y2) boxes as a Fraction."""
    ax1, ay1, ax2, ay2 = (Fraction(v) for v in a)
    bx1, by1, bx2, by2 = (Fraction(v) for v in b)
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return Fraction(0)
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union


def ap50_reference(gt_frames, det_frames, iou_threshold=Fraction(1, 2)):
    """Exact-rational average precision, averaged over classes with GT.

    gt_frames: per frame, list of (class_id, box).
    det_frames: per frame, list of (class_id, score, box).
    Matching: detections sorted by score descending (ties: earlier
    frame, then earlier in-frame position); each detection greedily
    takes the unmatched same-frame GT of its class with the highest
    IoU >= threshold (IoU ties: lowest GT position). AP is the area
    under the interpolated precision envelope.
    Returns (mean_ap: Fraction | None, per_class: dict[class_id, Fraction]).
    """
    classes = sorted({c for frame in gt_frames for c, _ in frame})
    per_class = {}
    for cls in classes:
        n_gt = sum(1 for frame in gt_frames for c, _ in frame if c == cls)
        dets = []
        for f_idx, frame in enumerate(det_frames):
            for d_idx, (c, score, box) in enumerate(frame):
                if c == cls:
                    dets.append((score, f_idx, d_idx, box))
        dets.sort(key=lambda d: (-d[0], d[1], d[2]))
        matched = set()
        flags = []
        for score, f_idx, d_idx, box in dets:
            best_iou = Fraction(0)
            best_gt = None
            for g_idx, (c, gbox) in enumerate(gt_frames[f_idx]):
                if c != cls or (f_idx, g_idx) in matched:
                    continue
                cur = iou_fraction(box, gbox)
                if cur >= iou_threshold and cur > best_iou:
                    best_iou = cur
                    best_gt = g_idx
            if best_gt is not None:
                matched.add((f_idx, best_gt))
                flags.append(True)
            else:
                flags.append(False)
        per_class[cls] = _ap_from_flags(flags, n_gt)
    if not per_class:
        return None, per_class
    mean = sum(per_class.values(), Fraction(0)) / len(per_class)
    return mean, per_class


def _ap_from_flags(flags, n_gt):
    if n_gt == 0:
        return Fraction(0)
    points = []
    tp = 0
    for rank, is_tp in enumerate(flags, start=1):
        if is_tp:
            tp += 1
            points.append((Fraction(tp, n_gt), Fraction(tp, rank)))
    ap = Fraction(0)
    prev_recall = Fraction(0)
    for k, (recall, _) in enumerate(points):
        if recall == prev_recall:
            continue
        envelope = max(p for r, p in points[k:])
        ap += (recall - prev_recall) * envelope
        prev_recall = recall
    return ap
