"""Detection evaluation: greedy matching, AP/mAP, F1, and confidence sweeps.

Predictions are matched to ground truth per image, in descending confidence
order (ties broken by input order): each prediction takes the unmatched
same-class ground-truth box of maximum IoU and counts as a true positive iff
that IoU clears the threshold. AP integrates the all-point interpolated
precision envelope over recall. mAP averages per-class AP over the classes
that actually appear in the ground truth.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .geometry import iou
from .labels import BoundingBox, Prediction


@dataclass(frozen=True)
class MatchConfig:
    iou_threshold: float = 0.5
    class_agnostic: bool = False

    def __post_init__(self) -> None:
        if not (0.0 < self.iou_threshold <= 1.0):
            raise ValueError("iou_threshold must lie in (0, 1]")


@dataclass
class MatchResult:
    """Per-prediction outcome of greedy matching on one image."""

    tp: list[bool]                  # aligned with the input prediction order
    pred_to_gt: list[int | None]    # matched ground-truth index per prediction
    unmatched_gt: int
    order: list[int]                # prediction indices, descending confidence


def match_detections(predictions: Sequence[Prediction], truths: Sequence[BoundingBox],
                     cfg: MatchConfig = MatchConfig()) -> MatchResult:
    """Greedy confidence-ordered matching of predictions to ground truth.

    A ground-truth box is consumed only by the prediction that scores a true
    positive on it; below-threshold best matches leave it available.
    """
    n = len(predictions)
    order = sorted(range(n), key=lambda i: -predictions[i].confidence)
    taken = [False] * len(truths)
    tp = [False] * n
    pred_to_gt: list[int | None] = [None] * n
    for i in order:
        pbox = predictions[i].box
        best_j, best_iou = None, 0.0
        for j, gt in enumerate(truths):
            if taken[j]:
                continue
            if not cfg.class_agnostic and gt.class_id != pbox.class_id:
                continue
            overlap = iou(pbox, gt)
            if overlap > best_iou:
                best_j, best_iou = j, overlap
        if best_j is not None and best_iou >= cfg.iou_threshold:
            tp[i] = True
            pred_to_gt[i] = best_j
            taken[best_j] = True
    return MatchResult(tp, pred_to_gt, taken.count(False), order)


@dataclass
class PRCurve:
    """Precision/recall points ordered by descending confidence cutoff."""

    points: list[tuple[float, float]]   # (recall, precision)
    total_gt: int
    cutoffs: list[float] = field(default_factory=list)  # aligned with points


def pr_curve(confidences: Sequence[float], tp_flags: Sequence[bool], total_gt: int) -> PRCurve:
    """Build the PR curve for one class from matched flags."""
    order = sorted(range(len(confidences)), key=lambda i: -confidences[i])
    points = []
    cum_tp = 0
    for rank, i in enumerate(order, start=1):
        cum_tp += 1 if tp_flags[i] else 0
        recall = cum_tp / total_gt if total_gt else 0.0
        points.append((recall, cum_tp / rank))
    return PRCurve(points, total_gt, [confidences[i] for i in order])


def average_precision(curve: PRCurve) -> float:
    """All-point interpolated AP: area under the precision envelope.

    Zero when there are no predictions or no ground truth.
    """
    if not curve.points or curve.total_gt == 0:
        return 0.0
    n = len(curve.points)
    envelope = [0.0] * n
    best = 0.0
    for k in range(n - 1, -1, -1):
        best = max(best, curve.points[k][1])
        envelope[k] = best
    ap = 0.0
    prev_recall = 0.0
    for k in range(n):
        recall = curve.points[k][0]
        if recall > prev_recall:
            ap += (recall - prev_recall) * envelope[k]
            prev_recall = recall
    return ap


def f1(precision: float, recall: float) -> float:
    """Harmonic blend of precision and recall; 0 when both are 0."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def mean_average_precision(per_class_ap: Mapping[int, float]) -> float:
    """Arithmetic mean of per-class AP values."""
    if not per_class_ap:
        raise ValueError("mean average precision needs at least one class")
    return sum(per_class_ap.values()) / len(per_class_ap)


def confidence_grid(points: int = 101) -> list[float]:
    """Evenly spaced confidence cutoffs spanning [0, 1]."""
    if points < 2:
        raise ValueError("grid needs at least two points")
    return [i / (points - 1) for i in range(points)]


@dataclass
class SweepPoint:
    cutoff: float
    precision: float    # mean over evaluated classes
    recall: float
    f1: float


@dataclass
class SweepResult:
    points: list[SweepPoint]
    best_f1: float
    best_f1_confidence: float


@dataclass
class _ClassTallies:
    """Per-class (confidence, tp) pairs pooled over the whole image set."""

    gt_count: int = 0
    neg_confs: list[float] = field(default_factory=list)  # negated, ascending
    tp_prefix: list[int] = field(default_factory=list)


def _pool_matches(preds_by_image: Mapping[str, Sequence[Prediction]],
                  gts_by_image: Mapping[str, Sequence[BoundingBox]],
                  cfg: MatchConfig) -> dict[int, _ClassTallies]:
    """Match every image once and pool flags per class.

    Greedy matching processes predictions in descending confidence, so the
    matches of predictions at or above any cutoff are unaffected by the
    predictions below it; one full match per image therefore serves every
    cutoff of a sweep.
    """
    # Sorted so confidence ties across images break identically on every run.
    image_ids = sorted(set(preds_by_image) | set(gts_by_image))
    scored: dict[int, list[tuple[float, bool]]] = {}
    tallies: dict[int, _ClassTallies] = {}
    for image_id in image_ids:
        preds = list(preds_by_image.get(image_id, ()))
        gts = list(gts_by_image.get(image_id, ()))
        result = match_detections(preds, gts, cfg)
        for gt in gts:
            tallies.setdefault(gt.class_id, _ClassTallies()).gt_count += 1
        for i, pred in enumerate(preds):
            scored.setdefault(pred.box.class_id, []).append((pred.confidence, result.tp[i]))
    for class_id, pairs in scored.items():
        pairs.sort(key=lambda p: -p[0])
        tally = tallies.setdefault(class_id, _ClassTallies())
        cum = 0
        for conf, hit in pairs:
            cum += 1 if hit else 0
            tally.neg_confs.append(-conf)
            tally.tp_prefix.append(cum)
    return tallies


def f1_confidence_sweep(preds_by_image: Mapping[str, Sequence[Prediction]],
                        gts_by_image: Mapping[str, Sequence[BoundingBox]],
                        cfg: MatchConfig = MatchConfig(),
                        grid: Sequence[float] | None = None) -> SweepResult:
    """Mean-over-classes F1 at each confidence cutoff of an ascending grid.

    At every cutoff, predictions below it are discarded and per-class
    precision/recall are computed over the whole image set; classes with no
    ground truth anywhere are excluded. Ties for the best F1 resolve to the
    lowest cutoff.
    """
    if grid is None:
        grid = confidence_grid()
    if len(grid) == 0:
        raise ValueError("confidence grid is empty")
    tallies = _pool_matches(preds_by_image, gts_by_image, cfg)
    eval_classes = [c for c, t in tallies.items() if t.gt_count > 0]
    points: list[SweepPoint] = []
    best = SweepPoint(grid[0], 0.0, 0.0, -1.0)
    for cutoff in grid:
        precisions, recalls, f1s = [], [], []
        for class_id in eval_classes:
            tally = tallies[class_id]
            kept = bisect.bisect_right(tally.neg_confs, -cutoff)
            tp = tally.tp_prefix[kept - 1] if kept else 0
            precision = tp / kept if kept else 0.0
            recall = tp / tally.gt_count
            precisions.append(precision)
            recalls.append(recall)
            f1s.append(f1(precision, recall))
        if eval_classes:
            point = SweepPoint(cutoff, sum(precisions) / len(precisions),
                               sum(recalls) / len(recalls), sum(f1s) / len(f1s))
        else:
            point = SweepPoint(cutoff, 0.0, 0.0, 0.0)
        points.append(point)
        if point.f1 > best.f1:
            best = point
    return SweepResult(points, max(best.f1, 0.0), best.cutoff)


@dataclass
class EvalReport:
    """Evaluation summary: per-class AP, mAP at each threshold, F1 sweep."""

    per_class_ap: dict[int, dict[float, float]]
    map_by_threshold: dict[float, float]
    f1_curve: list[SweepPoint]
    best_f1: float
    best_f1_confidence: float
    pr_curves: dict[int, dict[float, PRCurve]] = field(default_factory=dict)

    @property
    def map_50(self) -> float:
        return self.map_by_threshold.get(0.5, 0.0)

    @property
    def map_90(self) -> float:
        return self.map_by_threshold.get(0.9, 0.0)

    def to_dict(self) -> dict:
        return {
            "per_class_ap": {
                str(c): {f"{t:g}": ap for t, ap in sorted(by_thr.items())}
                for c, by_thr in sorted(self.per_class_ap.items())
            },
            "map_50": self.map_50,
            "map_90": self.map_90,
            "f1_curve": [[p.cutoff, p.f1] for p in self.f1_curve],
            "best_f1": self.best_f1,
            "best_f1_confidence": self.best_f1_confidence,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def summary_text(self) -> str:
        lines = [
            f"{'class':>8}  {'AP@0.5':>8}  {'AP@0.9':>8}",
        ]
        for class_id, by_thr in sorted(self.per_class_ap.items()):
            lines.append(f"{class_id:>8}  {by_thr.get(0.5, 0.0):>8.4f}  {by_thr.get(0.9, 0.0):>8.4f}")
        lines.append(f"mAP@0.5 = {self.map_50:.4f}   mAP@0.9 = {self.map_90:.4f}")
        lines.append(f"best F1 = {self.best_f1:.4f} at confidence {self.best_f1_confidence:.2f}")
        return "\n".join(lines) + "\n"


def evaluate(preds_by_image: Mapping[str, Sequence[Prediction]],
             gts_by_image: Mapping[str, Sequence[BoundingBox]],
             iou_thresholds: Sequence[float] = (0.5, 0.9),
             f1_match: MatchConfig = MatchConfig(),
             grid: Sequence[float] | None = None) -> EvalReport:
    """Full evaluation of a prediction set against ground truth."""
    per_class_ap: dict[int, dict[float, float]] = {}
    pr_curves: dict[int, dict[float, PRCurve]] = {}
    map_by_threshold: dict[float, float] = {}
    for threshold in iou_thresholds:
        tallies = _pool_matches(preds_by_image, gts_by_image, MatchConfig(threshold, f1_match.class_agnostic))
        aps: dict[int, float] = {}
        for class_id, tally in tallies.items():
            if tally.gt_count == 0:
                continue  # classes absent from the ground truth do not enter the mean
            flags = [tally.tp_prefix[i] > (tally.tp_prefix[i - 1] if i else 0)
                     for i in range(len(tally.tp_prefix))]
            confs = [-c for c in tally.neg_confs]
            curve = pr_curve(confs, flags, tally.gt_count)
            aps[class_id] = average_precision(curve)
            pr_curves.setdefault(class_id, {})[threshold] = curve
        for class_id, ap in aps.items():
            per_class_ap.setdefault(class_id, {})[threshold] = ap
        map_by_threshold[threshold] = mean_average_precision(aps) if aps else 0.0
    sweep = f1_confidence_sweep(preds_by_image, gts_by_image, f1_match, grid)
    return EvalReport(per_class_ap, map_by_threshold, sweep.points,
                      sweep.best_f1, sweep.best_f1_confidence, pr_curves)


def f1_curve_csv(points: Sequence[SweepPoint]) -> str:
    lines = ["cutoff,precision,recall,f1"]
    for p in points:
        lines.append(f"{p.cutoff:.6f},{p.precision:.6f},{p.recall:.6f},{p.f1:.6f}")
    return "\n".join(lines) + "\n"


def pr_curve_csv(curve: PRCurve) -> str:
    """One PR point per line, cutoff = the prediction confidence at the point."""
    lines = ["cutoff,precision,recall,f1"]
    for k, (recall, precision) in enumerate(curve.points):
        cutoff = curve.cutoffs[k] if k < len(curve.cutoffs) else float("nan")
        lines.append(f"{cutoff:.6f},{precision:.6f},{recall:.6f},{f1(precision, recall):.6f}")
    return "\n".join(lines) + "\n"
