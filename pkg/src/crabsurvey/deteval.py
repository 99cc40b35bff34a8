"""Detection scoring: IoU matching, confusion matrix, P/R/F1, AP and mAP@50.

Matching is greedy in descending confidence and runs in two phases per image:
same-class matches first (these drive the per-class PR curves), then
cross-class matches among the leftovers (these fill the off-diagonal
confusion cells). Whatever remains unmatched counts against background.

AP uses all-point interpolation: p_interp(r) = max precision at recall >= r,
summed over the recall steps of the confidence-sorted curve. mAP averages the
per-class APs over classes that have ground truths.

Zero-denominator conventions (pinned so golden tests are stable):
precision = 1 when there are neither detections nor missed ground truths,
0 when there are no detections but misses exist; recall mirrors this with
false positives in place of misses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boxes import NUM_CLASSES, BoundingBox

BACKGROUND = NUM_CLASSES  # index of the background row/column


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; degenerate zero-area pairs score 0."""
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    # areas from the same corner arithmetic, so identical boxes score exactly 1
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


@dataclass
class ConfusionMatrix:
    """3x3 tally over {underwater, on_sand, background} x the same, rows = ground truth."""

    cells: np.ndarray = field(default_factory=lambda: np.zeros((3, 3), dtype=np.int64))

    def add(self, gt_class: int, pred_class: int, count: int = 1) -> None:
        self.cells[gt_class, pred_class] += count

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.cells + other.cells)

    # cell names follow the published table layout
    @property
    def tp1(self) -> int:
        return int(self.cells[0, 0])

    @property
    def fp1(self) -> int:
        return int(self.cells[0, 1])

    @property
    def fp2(self) -> int:
        return int(self.cells[0, 2])

    @property
    def fn1(self) -> int:
        return int(self.cells[1, 0])

    @property
    def tp2(self) -> int:
        return int(self.cells[1, 1])

    @property
    def fp3(self) -> int:
        return int(self.cells[1, 2])

    @property
    def fn2(self) -> int:
        return int(self.cells[2, 0])

    @property
    def fn3(self) -> int:
        return int(self.cells[2, 1])

    @property
    def tn(self) -> int:
        return int(self.cells[2, 2])

    def row_sums(self) -> tuple[int, int, int]:
        return (
            self.tp1 + self.fp1 + self.fp2,
            self.fn1 + self.tp2 + self.fp3,
            self.fn2 + self.fn3 + self.tn,
        )

    def col_sums(self) -> tuple[int, int, int]:
        return (
            self.tp1 + self.fn1 + self.fn2,
            self.fp1 + self.tp2 + self.fn3,
            self.fp2 + self.fp3 + self.tn,
        )

    def total(self) -> int:
        return int(self.cells.sum())


@dataclass(frozen=True)
class ScoredDetection:
    """One detection's fate after matching, in PR-curve order."""

    class_id: int
    confidence: float
    is_tp: bool


@dataclass
class MatchResult:
    scored: list[ScoredDetection]
    gt_counts: list[int]
    confusion: ConfusionMatrix

    def merge(self, other: "MatchResult") -> "MatchResult":
        return MatchResult(
            scored=self.scored + other.scored,
            gt_counts=[a + b for a, b in zip(self.gt_counts, other.gt_counts)],
            confusion=self.confusion + other.confusion,
        )


def _greedy_match(dets, gts, taken, iou_threshold, same_class):
    """Greedy best-IoU assignment; mutates ``taken``; returns det->gt index map."""
    assigned = {}
    for di, det in dets:
        best_iou, best_gi = 0.0, None
        for gi, gt in gts:
            if taken[gi]:
                continue
            if same_class != (det.class_id == gt.class_id):
                continue
            v = iou(det, gt)
            if v >= iou_threshold and v > best_iou:
                best_iou, best_gi = v, gi
        if best_gi is not None:
            taken[best_gi] = True
            assigned[di] = best_gi
    return assigned


def match_detections(detections, ground_truths, iou_threshold: float = 0.5) -> MatchResult:
    """Match one image's detections against its ground truths."""
    order = sorted(range(len(detections)), key=lambda i: -detections[i].confidence)
    dets = [(i, detections[i]) for i in order]
    gts = list(enumerate(ground_truths))
    taken = [False] * len(ground_truths)

    same = _greedy_match(dets, gts, taken, iou_threshold, same_class=True)
    leftovers = [(i, d) for i, d in dets if i not in same]
    cross = _greedy_match(leftovers, gts, taken, iou_threshold, same_class=False)

    confusion = ConfusionMatrix()
    scored = []
    for di, det in dets:
        if di in same:
            confusion.add(det.class_id, det.class_id)
            scored.append(ScoredDetection(det.class_id, det.confidence, True))
        elif di in cross:
            confusion.add(ground_truths[cross[di]].class_id, det.class_id)
            scored.append(ScoredDetection(det.class_id, det.confidence, False))
        else:
            confusion.add(BACKGROUND, det.class_id)
            scored.append(ScoredDetection(det.class_id, det.confidence, False))
    for gi, gt in gts:
        if not taken[gi]:
            confusion.add(gt.class_id, BACKGROUND)

    gt_counts = [0] * NUM_CLASSES
    for gt in ground_truths:
        gt_counts[gt.class_id] += 1
    return MatchResult(scored, gt_counts, confusion)


def _prf_from_counts(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    if tp + fp > 0:
        p = tp / (tp + fp)
    else:
        p = 1.0 if fn == 0 else 0.0
    if tp + fn > 0:
        r = tp / (tp + fn)
    else:
        r = 1.0 if fp == 0 else 0.0
    f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def precision_recall_f1(result: MatchResult, class_id: int) -> tuple[float, float, float]:
    tp = sum(1 for s in result.scored if s.class_id == class_id and s.is_tp)
    fp = sum(1 for s in result.scored if s.class_id == class_id and not s.is_tp)
    fn = result.gt_counts[class_id] - tp
    return _prf_from_counts(tp, fp, fn)


@dataclass(frozen=True)
class PRCurve:
    """Confidence-ordered cumulative precision/recall points for one class."""

    recalls: np.ndarray
    precisions: np.ndarray
    n_gt: int


def pr_curve(result: MatchResult, class_id: int) -> PRCurve:
    scored = sorted(
        (s for s in result.scored if s.class_id == class_id),
        key=lambda s: -s.confidence,
    )
    tps = np.array([1.0 if s.is_tp else 0.0 for s in scored])
    n_gt = result.gt_counts[class_id]
    if len(scored) == 0:
        return PRCurve(np.zeros(0), np.zeros(0), n_gt)
    cum_tp = np.cumsum(tps)
    cum_fp = np.cumsum(1.0 - tps)
    recalls = cum_tp / n_gt if n_gt > 0 else np.zeros_like(cum_tp)
    precisions = cum_tp / (cum_tp + cum_fp)
    return PRCurve(recalls, precisions, n_gt)


def average_precision(curve: PRCurve) -> float | None:
    """All-point interpolated AP; None when the class has no ground truths."""
    if curve.n_gt == 0:
        return None
    if curve.recalls.size == 0:
        return 0.0
    # p_interp at each curve point = running max of precision from the right
    p_interp = np.maximum.accumulate(curve.precisions[::-1])[::-1]
    prev_r = 0.0
    ap = 0.0
    for r, p in zip(curve.recalls, p_interp):
        if r > prev_r:
            ap += (r - prev_r) * p
            prev_r = r
    return float(ap)


def mean_ap(aps) -> float:
    """Arithmetic mean over classes that have ground truths (AP is not None)."""
    present = [a for a in aps if a is not None]
    if not present:
        raise ValueError("no class has ground truths; mAP undefined")
    return float(np.mean(present))


@dataclass(frozen=True)
class ClassReport:
    class_id: int
    precision: float
    recall: float
    f1: float
    ap: float | None


@dataclass(frozen=True)
class EvalReport:
    per_class: tuple
    map50: float
    confusion: ConfusionMatrix


def evaluate(per_image_pairs, iou_threshold: float = 0.5) -> EvalReport:
    """Aggregate over (detections, ground_truths) pairs, one per image."""
    total = MatchResult([], [0] * NUM_CLASSES, ConfusionMatrix())
    for dets, gts in per_image_pairs:
        total = total.merge(match_detections(dets, gts, iou_threshold))
    reports = []
    aps = []
    for cid in range(NUM_CLASSES):
        p, r, f1 = precision_recall_f1(total, cid)
        ap = average_precision(pr_curve(total, cid))
        reports.append(ClassReport(cid, p, r, f1, ap))
        aps.append(ap)
    return EvalReport(tuple(reports), mean_ap(aps), total.confusion)


def report_to_dict(report: EvalReport) -> dict:
    """JSON-ready view: per-class metrics, mAP@50 and the confusion cells."""
    from .boxes import CLASS_NAMES

    return {
        "per_class": {
            CLASS_NAMES[c.class_id]: {
                "precision": c.precision,
                "recall": c.recall,
                "f1": c.f1,
                "ap50": c.ap,
            }
            for c in report.per_class
        },
        "map50": report.map50,
        "confusion": report.confusion.cells.tolist(),
    }
