"""Evaluation tests: IoU and AP50 against an exact-rational oracle, the
recall task against a brute-force chain search, remapping, and sweeps."""

from fractions import Fraction

import numpy as np
import pytest

from groundmem.detector import make_embedding_table
from groundmem.errors import MalformedStreamError, UnknownClassError
from groundmem.evaluation import (
    Detection,
    EvalReport,
    GroundTruthBox,
    RecallTaskConfig,
    ap50,
    iou,
    recall_task,
    remap_classes,
    sweep,
    sweep_rows,
)

import oracles


def det(cls, score, box):
    return Detection(class_id=cls, score=score, box=tuple(float(v) for v in box))


def gt(cls, box):
    return GroundTruthBox(class_id=cls, box=tuple(float(v) for v in box))


class TestIou:
    def test_identical_boxes(self):
        assert iou((0, 0, 2, 2), (0, 0, 2, 2)) == 1.0

    def test_disjoint_boxes(self):
        assert iou((0, 0, 1, 1), (5, 5, 6, 6)) == 0.0

    def test_quarter_overlap(self):
        assert iou((0, 0, 2, 2), (1, 1, 3, 3)) == 1.0 / 7.0

    def test_touching_edges_do_not_overlap(self):
        assert iou((0, 0, 1, 1), (1, 0, 2, 1)) == 0.0

    def test_contained_box(self):
        assert iou((0, 0, 4, 4), (1, 1, 2, 2)) == 1.0 / 16.0

    def test_matches_fraction_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            a = self._random_box(rng)
            b = self._random_box(rng)
            assert abs(iou(a, b) - float(oracles.iou_fraction(a, b))) < 1e-12

    @staticmethod
    def _random_box(rng):
        x1, y1 = rng.integers(0, 8, size=2)
        w, h = rng.integers(1, 8, size=2)
        return (int(x1), int(y1), int(x1 + w), int(y1 + h))


class TestAp50Fixtures:
    def test_single_correct_detection(self):
        mean, per_class = ap50(
            [[det(0, 0.9, (0, 0, 10, 10))]],
            [[gt(0, (0, 0, 10, 10))]],
        )
        assert mean == 1.0
        assert per_class == {0: 1.0}

    def test_false_positive_below_the_match_keeps_ap_one(self):
        mean, _ = ap50(
            [[det(0, 0.9, (0, 0, 10, 10)), det(0, 0.5, (50, 50, 60, 60))]],
            [[gt(0, (0, 0, 10, 10))]],
        )
        assert mean == 1.0

    def test_false_positive_above_the_match_halves_ap(self):
        mean, _ = ap50(
            [[det(0, 0.9, (50, 50, 60, 60)), det(0, 0.5, (0, 0, 10, 10))]],
            [[gt(0, (0, 0, 10, 10))]],
        )
        assert mean == 0.5

    def test_one_of_two_gt_matched(self):
        mean, _ = ap50(
            [[det(0, 0.9, (0, 0, 10, 10))]],
            [[gt(0, (0, 0, 10, 10)), gt(0, (30, 30, 40, 40))]],
        )
        assert mean == 0.5

    def test_mean_over_classes_with_gt_only(self):
        mean, per_class = ap50(
            [[det(0, 0.9, (0, 0, 10, 10)), det(5, 0.8, (70, 70, 90, 90))]],
            [[gt(0, (0, 0, 10, 10)), gt(1, (30, 30, 40, 40))]],
        )
        assert per_class == {0: 1.0, 1: 0.0}
        assert mean == 0.5  # class 5 has no GT and is ignored

    def test_iou_exactly_half_matches(self):
        # overlap 5x10 = 50, union 100: IoU exactly 0.5
        mean, _ = ap50(
            [[det(0, 0.9, (0, 0, 10, 10))]],
            [[gt(0, (0, 0, 10, 5))]],
        )
        assert mean == 1.0

    def test_each_gt_matched_once(self):
        mean, _ = ap50(
            [[det(0, 0.9, (0, 0, 10, 10)), det(0, 0.8, (0, 0, 10, 10))]],
            [[gt(0, (0, 0, 10, 10))]],
        )
        # second detection finds its GT taken: precision falls, AP stays 1
        assert mean == 1.0

    def test_no_gt_returns_none(self):
        mean, per_class = ap50([[det(0, 0.9, (0, 0, 10, 10))]], [[]])
        assert mean is None and per_class == {}

    def test_frame_count_mismatch(self):
        with pytest.raises(MalformedStreamError):
            ap50([[], []], [[]])


class TestAp50Oracle:
    def test_random_instances_match_exact_rational_oracle(self):
        rng = np.random.default_rng(1234)
        scores = [i / 16 for i in range(1, 16)]  # deliberate score ties
        for _ in range(200):
            n_frames = int(rng.integers(1, 5))
            det_frames, gt_frames, o_det, o_gt = [], [], [], []
            for _ in range(n_frames):
                dets, ods = [], []
                for _ in range(int(rng.integers(0, 6))):
                    cls = int(rng.integers(0, 3))
                    s = float(scores[rng.integers(len(scores))])
                    box = TestIou._random_box(rng)
                    dets.append(det(cls, s, box))
                    ods.append((cls, s, box))
                gts, ogs = [], []
                for _ in range(int(rng.integers(0, 4))):
                    cls = int(rng.integers(0, 3))
                    box = TestIou._random_box(rng)
                    gts.append(gt(cls, box))
                    ogs.append((cls, box))
                det_frames.append(dets)
                gt_frames.append(gts)
                o_det.append(ods)
                o_gt.append(ogs)
            mean, per_class = ap50(det_frames, gt_frames)
            ref_mean, ref_per_class = oracles.ap50_reference(o_gt, o_det)
            if ref_mean is None:
                assert mean is None
                continue
            assert abs(mean - float(ref_mean)) < 1e-12
            assert set(per_class) == set(ref_per_class)
            for cls, ap in per_class.items():
                assert abs(ap - float(ref_per_class[cls])) < 1e-12


BOX = (10.0, 10.0, 30.0, 30.0)
FAR = (60.0, 60.0, 80.0, 80.0)
CFG = RecallTaskConfig(episode_len=10, score_threshold=0.3,
                       consecutive_frames=5, association_iou=0.6)


def frames_with(det_spec, gt_spec, length=10):
    """det_spec/gt_spec: {frame_index: [entries]}."""
    dets = [list(det_spec.get(i, [])) for i in range(length)]
    gts = [list(gt_spec.get(i, [])) for i in range(length)]
    return dets, gts


class TestRecallTask:
    def test_five_consecutive_stable_detections_encountered(self):
        dets, gts = frames_with(
            {i: [det(0, 0.5, BOX)] for i in range(5)},
            {i: [gt(0, BOX)] for i in range(10)},
        )
        result = recall_task(dets, gts, CFG, n_classes=1)
        ep = result.episodes[0]
        assert ep.encountered == {0} and ep.correct_box == {0}
        assert result.precision == 1.0 and result.recall == 1.0 and result.accuracy == 1.0

    def test_broken_chain_is_missing(self):
        spec = {i: [det(0, 0.5, BOX)] for i in range(4)}
        spec.update({i: [det(0, 0.5, BOX)] for i in range(5, 9)})  # gap at 4
        dets, gts = frames_with(spec, {0: [gt(0, BOX)]})
        result = recall_task(dets, gts, CFG, n_classes=1)
        assert result.episodes[0].encountered == frozenset()
        assert result.recall == 0.0

    def test_spatial_jump_breaks_association(self):
        spec = {i: [det(0, 0.5, BOX)] for i in range(5)}
        spec[2] = [det(0, 0.5, FAR)]  # same class, elsewhere
        dets, gts = frames_with(spec, {0: [gt(0, BOX)]})
        assert recall_task(dets, gts, CFG, n_classes=1).episodes[0].encountered == frozenset()

    def test_score_threshold_is_strict(self):
        dets, gts = frames_with(
            {i: [det(0, 0.3, BOX)] for i in range(5)}, {0: [gt(0, BOX)]}
        )
        assert recall_task(dets, gts, CFG, n_classes=1).episodes[0].encountered == frozenset()
        dets, gts = frames_with(
            {i: [det(0, 0.301, BOX)] for i in range(5)}, {0: [gt(0, BOX)]}
        )
        assert recall_task(dets, gts, CFG, n_classes=1).episodes[0].encountered == {0}

    def test_wrong_returned_box_fails_verification(self):
        spec = {i: [det(0, 0.5, BOX)] for i in range(5)}
        spec[7] = [det(0, 0.9, FAR)]  # highest score, wrong place
        dets, gts = frames_with(spec, {i: [gt(0, BOX)] for i in range(10)})
        result = recall_task(dets, gts, CFG, n_classes=2)
        ep = result.episodes[0]
        assert ep.encountered == {0} and ep.correct_box == frozenset()
        assert result.precision == 0.0 and result.recall == 0.0
        assert result.accuracy == 0.5  # the absent class is a true negative

    def test_false_alarm_on_absent_class(self):
        dets, gts = frames_with({i: [det(1, 0.5, BOX)] for i in range(5)}, {})
        result = recall_task(dets, gts, CFG, n_classes=2)
        ep = result.episodes[0]
        assert ep.encountered == {1} and ep.present == frozenset()
        assert result.precision == 0.0 and result.recall is None
        assert result.accuracy == 0.5

    def test_two_episode_manual_tally(self):
        # episode 0: class 0 encountered and verified; class 1 present, missed
        # episode 1: class 1 encountered, wrong box; class 0 absent, quiet
        spec = {i: [det(0, 0.6, BOX)] for i in range(5)}
        spec.update({10 + i: [det(1, 0.6, FAR)] for i in range(5)})
        gt_spec = {i: [gt(0, BOX), gt(1, FAR)] for i in range(10)}
        gt_spec.update({10 + i: [gt(1, BOX)] for i in range(10)})
        dets, gts = frames_with(spec, gt_spec, length=20)
        result = recall_task(dets, gts, CFG, n_classes=2)
        assert len(result.episodes) == 2
        assert result.true_positives == 1
        assert result.predicted_positives == 2
        assert result.actual_positives == 3
        assert result.true_negatives == 1
        assert result.precision == 0.5
        assert abs(result.recall - 1 / 3) < 1e-12
        assert result.accuracy == 0.5

    def test_matches_brute_force_chain_search(self):
        rng = np.random.default_rng(7)
        cfg = RecallTaskConfig(episode_len=6, score_threshold=0.3,
                               consecutive_frames=3, association_iou=0.5)
        for _ in range(120):
            dets = []
            gts = []
            for _ in range(6):
                frame = []
                for _ in range(int(rng.integers(0, 3))):
                    frame.append(det(
                        int(rng.integers(0, 2)),
                        float(rng.choice([0.2, 0.4, 0.8])),
                        TestIou._random_box(rng),
                    ))
                dets.append(frame)
                gts.append([])
            result = recall_task(dets, gts, cfg, n_classes=2)
            expected = self._brute_force_encountered(dets, cfg)
            assert result.episodes[0].encountered == expected

    @staticmethod
    def _brute_force_encountered(det_frames, cfg):
        encountered = set()
        k = cfg.consecutive_frames

        def chains_from(f_idx, d):
            if d.score <= cfg.score_threshold:
                return 0
            best = 1
            if f_idx + 1 < len(det_frames):
                for nxt in det_frames[f_idx + 1]:
                    if nxt.class_id != d.class_id:
                        continue
                    if iou(d.box, nxt.box) < cfg.association_iou:
                        continue
                    tail = chains_from(f_idx + 1, nxt)
                    if tail:
                        best = max(best, 1 + tail)
            return best

        for f_idx, frame in enumerate(det_frames):
            for d in frame:
                if chains_from(f_idx, d) >= k:
                    encountered.add(d.class_id)
        return encountered

    def test_lowering_score_threshold_is_monotone(self):
        rng = np.random.default_rng(11)
        for _ in range(40):
            dets = [
                [
                    det(int(rng.integers(0, 2)), float(rng.uniform(0.1, 1.0)),
                        TestIou._random_box(rng))
                    for _ in range(int(rng.integers(0, 3)))
                ]
                for _ in range(8)
            ]
            gts = [[] for _ in range(8)]
            enc = {}
            for thr in (0.2, 0.5):
                cfg = RecallTaskConfig(episode_len=8, score_threshold=thr,
                                       consecutive_frames=2, association_iou=0.3)
                enc[thr] = recall_task(dets, gts, cfg, n_classes=2).episodes[0].encountered
            assert enc[0.5] <= enc[0.2]

    def test_malformed_streams(self):
        dets, gts = frames_with({}, {})
        with pytest.raises(MalformedStreamError):
            recall_task(dets[:7], gts[:7], CFG, n_classes=1)  # not a multiple
        with pytest.raises(MalformedStreamError):
            recall_task(dets, gts[:5], CFG, n_classes=1)  # length mismatch
        with pytest.raises(MalformedStreamError):
            recall_task([], [], CFG, n_classes=1)
        bad, bad_gt = frames_with({0: [det(5, 0.9, BOX)] }, {})
        with pytest.raises(MalformedStreamError):
            recall_task(bad, bad_gt, RecallTaskConfig(episode_len=10,
                        consecutive_frames=1), n_classes=2)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RecallTaskConfig(score_threshold=0.0)
        with pytest.raises(ValueError):
            RecallTaskConfig(association_iou=1.5)
        with pytest.raises(ValueError):
            RecallTaskConfig(consecutive_frames=0)


class TestRemapClasses:
    def test_identity_is_bitwise_equal(self):
        table = make_embedding_table(5, 16, seed=2)
        for remapped in (remap_classes(table), remap_classes(table, {})):
            assert remapped.names == table.names
            assert np.array_equal(remapped.embeddings, table.embeddings)

    def test_many_to_one_merges_embeddings(self):
        table = make_embedding_table(3, 16, seed=2, names=["pillow", "cushion", "lamp"])
        merged = remap_classes(table, {"pillow": "cushion"})
        assert np.array_equal(merged.embeddings[0], table.embeddings[1])
        assert np.array_equal(merged.embeddings[2], table.embeddings[2])
        assert merged.names == table.names

    def test_unknown_names_rejected(self):
        table = make_embedding_table(2, 8, seed=0, names=["a", "b"])
        with pytest.raises(UnknownClassError):
            remap_classes(table, {"zzz": "a"})
        with pytest.raises(UnknownClassError):
            remap_classes(table, {"a": "zzz"})

    def test_perturbation_hits_target_cosine(self):
        table = make_embedding_table(6, 64, seed=3)
        perturbed = remap_classes(table, perturb_cosine=0.9, seed=5)
        for c in range(6):
            cos = float(np.dot(table.embeddings[c], perturbed.embeddings[c]))
            assert abs(cos - 0.9) < 1e-6
            assert abs(np.linalg.norm(perturbed.embeddings[c]) - 1.0) < 1e-9

    def test_perturbation_deterministic_per_seed(self):
        table = make_embedding_table(4, 32, seed=1)
        a = remap_classes(table, perturb_cosine=0.9, seed=8)
        b = remap_classes(table, perturb_cosine=0.9, seed=8)
        c = remap_classes(table, perturb_cosine=0.9, seed=9)
        assert np.array_equal(a.embeddings, b.embeddings)
        assert not np.array_equal(a.embeddings, c.embeddings)

    def test_perturbation_cosine_one_is_identity(self):
        table = make_embedding_table(3, 16, seed=4)
        same = remap_classes(table, perturb_cosine=1.0, seed=0)
        assert np.array_equal(same.embeddings, table.embeddings)

    def test_modes_are_exclusive(self):
        table = make_embedding_table(2, 8, seed=0)
        with pytest.raises(ValueError):
            remap_classes(table, {"class00": "class01"}, perturb_cosine=0.9)
        with pytest.raises(ValueError):
            remap_classes(table, perturb_cosine=1.5)


class TestReportAndSweep:
    def test_report_serializes(self):
        report = EvalReport(mean_ap=0.75, per_class_ap={1: 0.5, 0: 1.0}, n_frames=10)
        doc = report.to_json()
        assert doc["mean_ap"] == 0.75
        assert list(doc["per_class_ap"]) == ["0", "1"]
        assert doc["recall"] is None

    def test_report_rejects_out_of_range_ap(self):
        with pytest.raises(ValueError):
            EvalReport(mean_ap=1.5)

    def test_sweep_runs_grid_in_order(self):
        seen = []

        def runner(v):
            seen.append(v)
            return EvalReport(mean_ap=v / 10.0)

        points = sweep(runner, [5.0, 1.0, 3.0])
        assert seen == [5.0, 1.0, 3.0]
        assert [v for v, _ in points] == [5.0, 1.0, 3.0]
        assert points[1][1].mean_ap == 0.1

    def test_single_point_grid_is_one_run(self):
        points = sweep(lambda v: EvalReport(mean_ap=None), [2.0])
        assert len(points) == 1

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            sweep(lambda v: EvalReport(mean_ap=None), [])

    def test_sweep_rows_flatten(self):
        points = [(1.0, EvalReport(mean_ap=0.5)), (2.0, EvalReport(mean_ap=0.7))]
        rows = sweep_rows("lam", points)
        assert rows == [{"lam": 1.0, "mean_ap": 0.5}, {"lam": 2.0, "mean_ap": 0.7}]
