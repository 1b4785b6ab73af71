"""Detection/pose quality metrics and length-accuracy statistics.

Matching policy: predictions are processed in descending confidence; each one
greedily takes the unmatched ground truth with the highest IoU at or above the
threshold, ties broken by lower truth index. A detection counts as correct at
IoU >= 0.5 for box metrics. Average precision integrates the all-point
interpolated precision envelope over recall, sweeping every distinct
confidence value in the prediction set.

Pose correctness is an OKS-style score: per labeled truth keypoint,
exp(-d^2 / (2 * area * kappa^2)) with d in normalized units and area the truth
box w*h, averaged over labeled keypoints. A pose match additionally requires
that score to reach the acceptance threshold (default 0.5, kappa 0.05).
There is no single standard keypoint-correctness criterion for two-point
poses, so kappa and the acceptance score are explicit configuration knobs
rather than claims of equivalence with any particular toolkit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .dataset_io import BBox, PoseDetection, Visibility
from .errors import ContractError, EmptyInputError, InvalidArgumentError, UndefinedAPError

DEFAULT_IOU_THRESHOLD = 0.5
DEFAULT_OKS_KAPPA = 0.05
DEFAULT_OKS_THRESHOLD = 0.5


@dataclass(frozen=True)
class MatchResult:
    """Outcome of greedy prediction/truth matching for one image or a pool."""

    tp: int
    fp: int
    fn: int
    pairs: tuple[tuple[int, int, float], ...]  # (prediction index, truth index, IoU)

    def __post_init__(self):
        if self.tp != len(self.pairs):
            raise InvalidArgumentError("tp must equal the number of matched pairs")


@dataclass(frozen=True)
class PrecisionRecall:
    precision: float
    recall: float
    precision_degenerate: bool = False
    recall_degenerate: bool = False


@dataclass(frozen=True)
class PRCurve:
    """PR points sorted by ascending recall plus the interpolated area."""

    points: tuple[tuple[float, float], ...]
    ap: float


@dataclass(frozen=True)
class LengthRecord:
    """Predicted vs caliper length for one fruit, millimeters."""

    image_id: str
    fruit_id: str
    predicted_mm: float
    actual_mm: float
    method: str

    def __post_init__(self):
        if not (self.predicted_mm > 0 and self.actual_mm > 0):
            raise InvalidArgumentError(
                f"lengths must be positive, got predicted={self.predicted_mm}, actual={self.actual_mm}"
            )

    @property
    def residual_mm(self) -> float:
        return self.predicted_mm - self.actual_mm


@dataclass(frozen=True)
class LengthErrorStats:
    rmse_mm: float
    mae_mm: float
    n: int
    residuals_mm: tuple[float, ...]

    def __post_init__(self):
        if self.n != len(self.residuals_mm):
            raise InvalidArgumentError("n must equal the residual count")
        # quadratic mean >= arithmetic mean, up to float rounding
        if self.rmse_mm < self.mae_mm - 1e-12:
            raise InvalidArgumentError(f"rmse {self.rmse_mm} < mae {self.mae_mm}")


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two normalized center-format boxes."""
    ax1, ax2 = a.cx - a.w / 2, a.cx + a.w / 2
    ay1, ay2 = a.cy - a.h / 2, a.cy + a.h / 2
    bx1, bx2 = b.cx - b.w / 2, b.cx + b.w / 2
    by1, by2 = b.cy - b.h / 2, b.cy + b.h / 2
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    return inter / union


def _require_sorted(preds: Sequence[PoseDetection]) -> None:
    for earlier, later in zip(preds, preds[1:]):
        if later.confidence > earlier.confidence:
            raise ContractError("predictions must be sorted by descending confidence")


def match_detections(
    preds: Sequence[PoseDetection],
    truths: Sequence[PoseDetection],
    iou_thresh: float = DEFAULT_IOU_THRESHOLD,
) -> MatchResult:
    """Greedy confidence-priority box matching at one IoU threshold."""
    _require_sorted(preds)
    taken = [False] * len(truths)
    pairs = []
    for pred_idx, pred in enumerate(preds):
        best_iou = 0.0
        best_truth = -1
        for truth_idx, truth in enumerate(truths):
            if taken[truth_idx]:
                continue
            overlap = iou(pred.bbox, truth.bbox)
            if overlap >= iou_thresh and overlap > best_iou:
                best_iou = overlap
                best_truth = truth_idx
        if best_truth >= 0:
            taken[best_truth] = True
            pairs.append((pred_idx, best_truth, best_iou))
    tp = len(pairs)
    return MatchResult(tp=tp, fp=len(preds) - tp, fn=len(truths) - tp, pairs=tuple(pairs))


def labeled_keypoints(det: PoseDetection):
    return [kp for kp in (det.calyx, det.peduncle) if kp.visibility != Visibility.NOT_LABELED]


def pose_correctness(
    pred: PoseDetection,
    truth: PoseDetection,
    kappa: float = DEFAULT_OKS_KAPPA,
) -> Optional[float]:
    """OKS-style keypoint score for a box-matched pair, or None when the truth
    has no labeled keypoints (the pair is skipped in pose metrics).

    A truth keypoint whose prediction counterpart is unlabeled contributes 0:
    the model produced no usable location for it.
    """
    area = truth.bbox.w * truth.bbox.h
    scores = []
    for pred_kp, truth_kp in ((pred.calyx, truth.calyx), (pred.peduncle, truth.peduncle)):
        if truth_kp.visibility == Visibility.NOT_LABELED:
            continue
        if pred_kp.visibility == Visibility.NOT_LABELED:
            scores.append(0.0)
            continue
        d_sq = (pred_kp.x - truth_kp.x) ** 2 + (pred_kp.y - truth_kp.y) ** 2
        scores.append(math.exp(-d_sq / (2.0 * area * kappa * kappa)))
    if not scores:
        return None
    return sum(scores) / len(scores)


def match_poses(
    preds: Sequence[PoseDetection],
    truths: Sequence[PoseDetection],
    iou_thresh: float = DEFAULT_IOU_THRESHOLD,
    oks_threshold: float = DEFAULT_OKS_THRESHOLD,
    kappa: float = DEFAULT_OKS_KAPPA,
) -> MatchResult:
    """Greedy matching where a pair must pass both box IoU and OKS acceptance.

    Truths without labeled keypoints are excluded entirely: they cannot be
    matched and do not count as misses. Truth indices in the returned pairs
    refer to the original sequence.
    """
    _require_sorted(preds)
    eligible = [i for i, t in enumerate(truths) if labeled_keypoints(t)]
    taken = {i: False for i in eligible}
    pairs = []
    for pred_idx, pred in enumerate(preds):
        best_iou = 0.0
        best_truth = -1
        for truth_idx in eligible:
            if taken[truth_idx]:
                continue
            truth = truths[truth_idx]
            overlap = iou(pred.bbox, truth.bbox)
            if overlap < iou_thresh or overlap <= best_iou:
                continue
            score = pose_correctness(pred, truth, kappa=kappa)
            if score is not None and score >= oks_threshold:
                best_iou = overlap
                best_truth = truth_idx
        if best_truth >= 0:
            taken[best_truth] = True
            pairs.append((pred_idx, best_truth, best_iou))
    tp = len(pairs)
    return MatchResult(tp=tp, fp=len(preds) - tp, fn=len(eligible) - tp, pairs=tuple(pairs))


def _pr_from_counts(tp: int, fp: int, fn: int) -> PrecisionRecall:
    precision_degenerate = (tp + fp) == 0
    recall_degenerate = (tp + fn) == 0
    precision = 0.0 if precision_degenerate else tp / (tp + fp)
    recall = 0.0 if recall_degenerate else tp / (tp + fn)
    return PrecisionRecall(precision, recall, precision_degenerate, recall_degenerate)


def precision_recall(m: MatchResult) -> PrecisionRecall:
    """Exact TP/(TP+FP) and TP/(TP+FN); zero denominators yield flagged zeros."""
    return _pr_from_counts(m.tp, m.fp, m.fn)


def _interpolated_area(recalls: np.ndarray, precisions: np.ndarray) -> float:
    mrec = np.concatenate(([0.0], recalls))
    mpre = np.concatenate(([0.0], precisions))
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    changed = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[changed + 1] - mrec[changed]) * mpre[changed + 1]))


def _sweep_ap(
    preds_by_image: Mapping[str, Sequence[PoseDetection]],
    truths_by_image: Mapping[str, Sequence[PoseDetection]],
    eligible_fn: Callable[[PoseDetection], bool],
    candidate_fn: Callable[[PoseDetection, PoseDetection, float], bool],
    iou_thresh: float,
) -> PRCurve:
    eligible: dict[str, list[int]] = {}
    total_truths = 0
    for image_id, truths in truths_by_image.items():
        keep = [i for i, t in enumerate(truths) if eligible_fn(t)]
        eligible[image_id] = keep
        total_truths += len(keep)
    if total_truths == 0:
        raise UndefinedAPError("no ground truths; average precision is undefined")

    flat: list[tuple[float, str, int]] = []
    for image_id in sorted(preds_by_image):
        for idx, pred in enumerate(preds_by_image[image_id]):
            flat.append((pred.confidence, image_id, idx))
    flat.sort(key=lambda item: -item[0])

    taken: dict[str, set[int]] = {image_id: set() for image_id in truths_by_image}
    tp_flags = np.zeros(len(flat), dtype=bool)
    for rank, (confidence, image_id, idx) in enumerate(flat):
        pred = preds_by_image[image_id][idx]
        truths = truths_by_image.get(image_id, [])
        used = taken.setdefault(image_id, set())
        best_iou = 0.0
        best_truth = -1
        for truth_idx in eligible.get(image_id, []):
            if truth_idx in used:
                continue
            truth = truths[truth_idx]
            overlap = iou(pred.bbox, truth.bbox)
            if overlap < iou_thresh or overlap <= best_iou:
                continue
            if candidate_fn(pred, truth, overlap):
                best_iou = overlap
                best_truth = truth_idx
        if best_truth >= 0:
            used.add(best_truth)
            tp_flags[rank] = True

    cum_tp = np.cumsum(tp_flags)
    cum_fp = np.cumsum(~tp_flags)
    points = []
    for i in range(len(flat)):
        last_of_score = i == len(flat) - 1 or flat[i + 1][0] < flat[i][0]
        if last_of_score:
            recall = cum_tp[i] / total_truths
            precision = cum_tp[i] / (cum_tp[i] + cum_fp[i])
            points.append((float(recall), float(precision)))

    if not points:
        return PRCurve(points=(), ap=0.0)
    recalls = np.array([p[0] for p in points])
    precisions = np.array([p[1] for p in points])
    return PRCurve(points=tuple(points), ap=_interpolated_area(recalls, precisions))


def average_precision_50(
    preds_by_image: Mapping[str, Sequence[PoseDetection]],
    truths_by_image: Mapping[str, Sequence[PoseDetection]],
    iou_thresh: float = DEFAULT_IOU_THRESHOLD,
) -> PRCurve:
    """Box AP at the given IoU threshold over the whole dataset (pooled)."""
    return _sweep_ap(
        preds_by_image, truths_by_image,
        eligible_fn=lambda truth: True,
        candidate_fn=lambda pred, truth, overlap: True,
        iou_thresh=iou_thresh,
    )


def pose_average_precision_50(
    preds_by_image: Mapping[str, Sequence[PoseDetection]],
    truths_by_image: Mapping[str, Sequence[PoseDetection]],
    iou_thresh: float = DEFAULT_IOU_THRESHOLD,
    oks_threshold: float = DEFAULT_OKS_THRESHOLD,
    kappa: float = DEFAULT_OKS_KAPPA,
) -> PRCurve:
    """Pose AP: a detection is correct when box IoU and OKS both pass."""

    def candidate(pred: PoseDetection, truth: PoseDetection, overlap: float) -> bool:
        score = pose_correctness(pred, truth, kappa=kappa)
        return score is not None and score >= oks_threshold

    return _sweep_ap(
        preds_by_image, truths_by_image,
        eligible_fn=lambda truth: bool(labeled_keypoints(truth)),
        candidate_fn=candidate,
        iou_thresh=iou_thresh,
    )


def length_error_stats(records: Sequence[LengthRecord]) -> LengthErrorStats:
    """RMSE and MAE of predicted-minus-actual lengths, residuals retained."""
    if not records:
        raise EmptyInputError("no length records")
    residuals = np.array([r.residual_mm for r in records], dtype=np.float64)
    rmse = float(np.sqrt(np.mean(residuals ** 2)))
    mae = float(np.mean(np.abs(residuals)))
    return LengthErrorStats(rmse_mm=rmse, mae_mm=mae, n=len(records),
                            residuals_mm=tuple(float(r) for r in residuals))


@dataclass(frozen=True)
class DatasetDetectionMetrics:
    """Pooled dataset metrics for one detection method."""

    box: PrecisionRecall
    box_ap: float
    pose: PrecisionRecall
    pose_ap: Optional[float]
    box_counts: tuple[int, int, int]  # tp, fp, fn
    pose_counts: tuple[int, int, int]


def evaluate_detections(
    preds_by_image: Mapping[str, Sequence[PoseDetection]],
    truths_by_image: Mapping[str, Sequence[PoseDetection]],
    iou_thresh: float = DEFAULT_IOU_THRESHOLD,
    oks_threshold: float = DEFAULT_OKS_THRESHOLD,
    kappa: float = DEFAULT_OKS_KAPPA,
) -> DatasetDetectionMetrics:
    """Accumulate per-image matches in sorted image order and derive metrics."""
    box_tp = box_fp = box_fn = 0
    pose_tp = pose_fp = pose_fn = 0
    for image_id in sorted(truths_by_image.keys() | preds_by_image.keys()):
        preds = list(preds_by_image.get(image_id, []))
        truths = list(truths_by_image.get(image_id, []))
        box_match = match_detections(preds, truths, iou_thresh)
        box_tp += box_match.tp
        box_fp += box_match.fp
        box_fn += box_match.fn
        pose_match = match_poses(preds, truths, iou_thresh, oks_threshold, kappa)
        pose_tp += pose_match.tp
        pose_fp += pose_match.fp
        pose_fn += pose_match.fn

    box_ap = average_precision_50(preds_by_image, truths_by_image, iou_thresh).ap
    try:
        pose_ap: Optional[float] = pose_average_precision_50(
            preds_by_image, truths_by_image, iou_thresh, oks_threshold, kappa
        ).ap
    except UndefinedAPError:
        pose_ap = None
    return DatasetDetectionMetrics(
        box=_pr_from_counts(box_tp, box_fp, box_fn),
        box_ap=box_ap,
        pose=_pr_from_counts(pose_tp, pose_fp, pose_fn),
        pose_ap=pose_ap,
        box_counts=(box_tp, box_fp, box_fn),
        pose_counts=(pose_tp, pose_fp, pose_fn),
    )
