import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_detection, random_dataset
from fruitlet_metric.dataset_io import BBox
from fruitlet_metric.errors import (
    ContractError,
    EmptyInputError,
    InvalidArgumentError,
    UndefinedAPError,
)
from fruitlet_metric.evaluation import (
    LengthErrorStats,
    LengthRecord,
    average_precision_50,
    evaluate_detections,
    iou,
    length_error_stats,
    match_detections,
    match_poses,
    pose_average_precision_50,
    pose_correctness,
    precision_recall,
)
from oracles import brute_force_detection_metrics, rmse_mae_direct


class TestIou:
    def test_identical_boxes(self):
        box = BBox(0.5, 0.5, 0.2, 0.3)
        assert iou(box, box) == 1.0

    def test_disjoint_boxes(self):
        assert iou(BBox(0.2, 0.2, 0.1, 0.1), BBox(0.8, 0.8, 0.1, 0.1)) == 0.0

    def test_corner_overlap_is_one_seventh(self):
        # (0,0)-(2,2) and (1,1)-(3,3) on a 4-unit canvas: areas 4+4, inter 1
        a = BBox(cx=0.25, cy=0.25, w=0.5, h=0.5)
        b = BBox(cx=0.5, cy=0.5, w=0.5, h=0.5)
        assert iou(a, b) == pytest.approx(1 / 7, abs=1e-15)

    def test_symmetry(self):
        a = BBox(0.4, 0.4, 0.3, 0.2)
        b = BBox(0.5, 0.45, 0.25, 0.25)
        assert iou(a, b) == iou(b, a)


class TestMatchDetections:
    def test_single_match(self):
        truth = make_detection(cx=0.5, cy=0.5, w=0.2, h=0.2)
        pred = make_detection(cx=0.51, cy=0.5, w=0.2, h=0.2, confidence=0.9)
        assert iou(pred.bbox, truth.bbox) > 0.9
        result = match_detections([pred], [truth])
        assert (result.tp, result.fp, result.fn) == (1, 0, 0)
        assert result.pairs[0][:2] == (0, 0)

    def test_low_overlap_is_fp_and_fn(self):
        truth = make_detection(cx=0.3, cy=0.3, w=0.2, h=0.2)
        pred = make_detection(cx=0.42, cy=0.42, w=0.2, h=0.2, confidence=0.9)
        assert 0 < iou(pred.bbox, truth.bbox) < 0.5
        result = match_detections([pred], [truth], iou_thresh=0.5)
        assert (result.tp, result.fp, result.fn) == (0, 1, 1)

    def test_confidence_priority_starves_later_prediction(self):
        # pred1 overlaps T1 (0.6) and T2 (~0.55); pred2 overlaps only T1.
        truth1 = make_detection(cx=0.30, cy=0.5, w=0.2, h=0.2)
        truth2 = make_detection(cx=0.70, cy=0.5, w=0.2, h=0.2)
        pred1 = make_detection(cx=0.35, cy=0.5, w=0.2, h=0.2, confidence=0.9)
        pred2 = make_detection(cx=0.30, cy=0.55, w=0.2, h=0.2, confidence=0.8)
        overlaps = {
            (0, 0): iou(pred1.bbox, truth1.bbox),
            (0, 1): iou(pred1.bbox, truth2.bbox),
            (1, 0): iou(pred2.bbox, truth1.bbox),
            (1, 1): iou(pred2.bbox, truth2.bbox),
        }
        assert overlaps[(0, 0)] > overlaps[(0, 1)]  # pred1 prefers T1
        assert overlaps[(1, 0)] >= 0.5 and overlaps[(1, 1)] < 0.5

        result = match_detections([pred1, pred2], [truth1, truth2],
                                  iou_thresh=min(overlaps[(0, 0)], overlaps[(1, 0)]) - 0.01)
        matched = {(p, t) for p, t, _ in result.pairs}
        assert (0, 0) in matched           # highest-confidence pred takes T1
        assert result.fp >= 1 or (1, 1) in matched

    def test_tie_broken_by_lower_truth_index(self):
        truth_a = make_detection(cx=0.4, cy=0.5, w=0.2, h=0.2)
        truth_b = make_detection(cx=0.4, cy=0.5, w=0.2, h=0.2)  # identical boxes
        pred = make_detection(cx=0.4, cy=0.5, w=0.2, h=0.2, confidence=0.9)
        result = match_detections([pred], [truth_a, truth_b])
        assert result.pairs[0][:2] == (0, 0)

    def test_unsorted_predictions_rejected(self):
        preds = [
            make_detection(confidence=0.3),
            make_detection(confidence=0.9),
        ]
        with pytest.raises(ContractError):
            match_detections(preds, [])

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_truth_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        preds, truths = random_dataset(rng, max_images=1, max_boxes=6)
        (image_id,) = preds.keys()
        pred_list, truth_list = preds[image_id], truths[image_id]
        base = match_detections(pred_list, truth_list)

        order = rng.permutation(len(truth_list))
        shuffled = [truth_list[i] for i in order]
        permuted = match_detections(pred_list, shuffled)
        assert (permuted.tp, permuted.fp, permuted.fn) == (base.tp, base.fp, base.fn)


class TestPrecisionRecall:
    def test_exact_ratios(self):
        from fruitlet_metric.evaluation import MatchResult

        pr = precision_recall(MatchResult(tp=9, fp=1, fn=1, pairs=tuple([(i, i, 1.0) for i in range(9)])))
        assert pr.precision == 0.9
        assert pr.recall == 0.9
        assert not pr.precision_degenerate and not pr.recall_degenerate

    def test_zero_denominators_flagged(self):
        from fruitlet_metric.evaluation import MatchResult

        pr = precision_recall(MatchResult(tp=0, fp=0, fn=5, pairs=()))
        assert pr.precision == 0.0 and pr.precision_degenerate
        assert pr.recall == 0.0 and not pr.recall_degenerate

    def test_counts_producing_091(self):
        # aggregate counts of 91 TP / 9 FP must surface as exactly 0.91
        from fruitlet_metric.evaluation import MatchResult

        pr = precision_recall(MatchResult(tp=91, fp=9, fn=10, pairs=tuple([(i, i, 1.0) for i in range(91)])))
        assert repr(pr.precision) == "0.91"


class TestPoseCorrectness:
    def test_exact_coincidence_scores_one(self):
        truth = make_detection(calyx=(0.45, 0.45, 2), peduncle=(0.55, 0.55, 2))
        pred = make_detection(calyx=(0.45, 0.45, 2), peduncle=(0.55, 0.55, 2), confidence=0.9)
        assert pose_correctness(pred, truth) == 1.0

    def test_large_displacement_decays_to_zero(self):
        truth = make_detection(calyx=(0.1, 0.1, 2), peduncle=(0.12, 0.12, 2), w=0.05, h=0.05)
        pred = make_detection(calyx=(0.9, 0.9, 2), peduncle=(0.95, 0.95, 2), w=0.05, h=0.05,
                              confidence=0.9)
        assert pose_correctness(pred, truth) < 1e-6

    def test_half_score_at_derived_displacement(self):
        # single labeled keypoint displaced so exp(-d^2 / (2 a k^2)) = 1/2
        w, h, kappa = 0.2, 0.3, 0.05
        d = math.sqrt(2 * (w * h) * kappa ** 2 * math.log(2))
        truth = make_detection(w=w, h=h, calyx=(0.5, 0.5, 2), peduncle=(0.0, 0.0, 0))
        pred = make_detection(w=w, h=h, calyx=(0.5 + d, 0.5, 2), peduncle=(0.0, 0.0, 0),
                              confidence=0.9)
        assert pose_correctness(pred, truth, kappa=kappa) == pytest.approx(0.5, abs=1e-12)

    def test_unlabeled_truth_skipped(self):
        truth = make_detection(calyx=(0, 0, 0), peduncle=(0, 0, 0))
        pred = make_detection(confidence=0.9)
        assert pose_correctness(pred, truth) is None

    def test_unlabeled_prediction_keypoint_counts_as_miss(self):
        truth = make_detection(calyx=(0.45, 0.45, 2), peduncle=(0.55, 0.55, 2))
        pred = make_detection(calyx=(0.45, 0.45, 2), peduncle=(0.0, 0.0, 0), confidence=0.9)
        assert pose_correctness(pred, truth) == pytest.approx(0.5)


class TestAveragePrecision:
    def test_single_correct_detection(self):
        truth = make_detection(cx=0.5, cy=0.5)
        pred = make_detection(cx=0.51, cy=0.5, confidence=0.9)
        curve = average_precision_50({"img": [pred]}, {"img": [truth]})
        assert curve.ap == 1.0
        assert curve.points == ((1.0, 1.0),)

    def test_single_wrong_detection(self):
        truth = make_detection(cx=0.2, cy=0.2, w=0.1, h=0.1)
        pred = make_detection(cx=0.8, cy=0.8, w=0.1, h=0.1, confidence=0.9)
        assert average_precision_50({"img": [pred]}, {"img": [truth]}).ap == 0.0

    def test_no_truths_anywhere_is_undefined(self):
        pred = make_detection(confidence=0.9)
        with pytest.raises(UndefinedAPError):
            average_precision_50({"img": [pred]}, {"img": []})

    def test_recalls_non_decreasing(self):
        rng = np.random.default_rng(42)
        preds, truths = random_dataset(rng)
        if not any(truths.values()):
            return
        curve = average_precision_50(preds, truths)
        recalls = [r for r, _ in curve.points]
        assert recalls == sorted(recalls)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 100_000))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        preds, truths = random_dataset(rng)
        if not any(truths.values()):
            return
        curve = average_precision_50(preds, truths)
        metrics = evaluate_detections(preds, truths)
        precision, recall, ap = brute_force_detection_metrics(preds, truths, 0.5)
        assert curve.ap == pytest.approx(ap, abs=1e-9)
        assert metrics.box.precision == pytest.approx(precision, abs=1e-9)
        assert metrics.box.recall == pytest.approx(recall, abs=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 100_000))
    def test_extra_zero_overlap_prediction_never_raises_ap(self, seed):
        rng = np.random.default_rng(seed)
        preds, truths = random_dataset(rng, max_images=3, max_boxes=5)
        if not any(truths.values()):
            return
        base = average_precision_50(preds, truths).ap

        lowest = min((p.confidence for ps in preds.values() for p in ps), default=1.0)
        image_id = sorted(preds)[0]
        spurious = make_detection(image_id, cx=0.01, cy=0.01, w=0.01, h=0.01,
                                  confidence=max(0.0, lowest - 0.01))
        # a 0.01-side box in the corner cannot reach IoU 0.5 with generated truths
        augmented = dict(preds)
        augmented[image_id] = list(preds[image_id]) + [spurious]
        assert average_precision_50(augmented, truths).ap <= base + 1e-12


class TestPoseMetrics:
    def test_pose_match_requires_oks(self):
        truth = make_detection(cx=0.5, cy=0.5, w=0.1, h=0.1,
                               calyx=(0.46, 0.5, 2), peduncle=(0.54, 0.5, 2))
        good = make_detection(cx=0.5, cy=0.5, w=0.1, h=0.1, confidence=0.9,
                              calyx=(0.46, 0.5, 2), peduncle=(0.54, 0.5, 2))
        bad = make_detection(cx=0.5, cy=0.5, w=0.1, h=0.1, confidence=0.9,
                             calyx=(0.40, 0.42, 2), peduncle=(0.60, 0.58, 2))
        assert match_poses([good], [truth]).tp == 1
        result = match_poses([bad], [truth])
        assert (result.tp, result.fp, result.fn) == (0, 1, 1)

    def test_unlabeled_truths_excluded(self):
        unlabeled = make_detection(calyx=(0, 0, 0), peduncle=(0, 0, 0))
        result = match_poses([], [unlabeled])
        assert (result.tp, result.fp, result.fn) == (0, 0, 0)

    def test_pose_ap_defined_only_with_labeled_truths(self):
        unlabeled = make_detection(calyx=(0, 0, 0), peduncle=(0, 0, 0))
        with pytest.raises(UndefinedAPError):
            pose_average_precision_50({"img": []}, {"img": [unlabeled]})

    def test_perfect_pose_predictions_score_one(self):
        truths = {"img": [make_detection(cx=0.3, cy=0.3), make_detection(cx=0.7, cy=0.7)]}
        preds = {"img": [
            make_detection(cx=0.3, cy=0.3, confidence=0.9),
            make_detection(cx=0.7, cy=0.7, confidence=0.8),
        ]}
        metrics = evaluate_detections(preds, truths)
        assert metrics.pose.precision == 1.0
        assert metrics.pose.recall == 1.0
        assert metrics.pose_ap == 1.0


class TestLengthErrorStats:
    def test_zero_error(self):
        records = [LengthRecord("img", f"f{i}", 50.0, 50.0, "realsense") for i in range(3)]
        stats = length_error_stats(records)
        assert stats.rmse_mm == 0.0 and stats.mae_mm == 0.0

    def test_hand_case(self):
        records = [
            LengthRecord("img", "f1", 10.0, 11.0, "dpt"),
            LengthRecord("img", "f2", 12.0, 10.0, "dpt"),
        ]
        stats = length_error_stats(records)
        assert stats.residuals_mm == (-1.0, 2.0)
        assert stats.rmse_mm == pytest.approx(math.sqrt(2.5), abs=1e-15)
        assert stats.mae_mm == 1.5
        assert stats.n == 2

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            length_error_stats([])

    def test_invariant_enforced(self):
        with pytest.raises(InvalidArgumentError):
            LengthErrorStats(rmse_mm=1.0, mae_mm=2.0, n=1, residuals_mm=(1.0,))

    @settings(max_examples=50)
    @given(st.lists(
        st.tuples(st.floats(1, 200), st.floats(1, 200)), min_size=1, max_size=40,
    ))
    def test_matches_direct_arithmetic(self, pairs):
        records = [
            LengthRecord("img", f"f{i}", predicted, actual, "dpt")
            for i, (predicted, actual) in enumerate(pairs)
        ]
        stats = length_error_stats(records)
        rmse, mae = rmse_mae_direct([p for p, _ in pairs], [a for _, a in pairs])
        assert stats.rmse_mm == pytest.approx(rmse, abs=1e-12)
        assert stats.mae_mm == pytest.approx(mae, abs=1e-12)
        assert stats.rmse_mm >= stats.mae_mm - 1e-12

    def test_non_positive_record_rejected(self):
        with pytest.raises(InvalidArgumentError):
            LengthRecord("img", "f1", -1.0, 10.0, "dpt")
