import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crabsurvey.boxes import BoundingBox
from crabsurvey.deteval import (
    ConfusionMatrix,
    MatchResult,
    PRCurve,
    ScoredDetection,
    average_precision,
    evaluate,
    iou,
    match_detections,
    mean_ap,
    pr_curve,
    precision_recall_f1,
)


from oracles import brute_force_ap


def box(cid, cx, cy, w, h, conf=1.0):
    return BoundingBox(cid, cx, cy, w, h, confidence=conf)


def random_match_result(rng, max_boxes=20) -> MatchResult:
    n = int(rng.integers(1, max_boxes + 1))
    scored = [
        ScoredDetection(int(rng.integers(2)), float(rng.uniform(0, 1)), bool(rng.integers(2)))
        for _ in range(n)
    ]
    tp_counts = [sum(1 for s in scored if s.class_id == c and s.is_tp) for c in (0, 1)]
    gt_counts = [tp_counts[c] + int(rng.integers(0, 5)) for c in (0, 1)]
    return MatchResult(scored, gt_counts, ConfusionMatrix())


class TestIoU:
    def test_identical(self):
        a = box(0, 0.5, 0.5, 0.4, 0.2)
        assert iou(a, a) == 1.0

    def test_disjoint(self):
        assert iou(box(0, 0.2, 0.2, 0.1, 0.1), box(0, 0.8, 0.8, 0.1, 0.1)) == 0.0

    def test_half_overlapping_unit_squares(self):
        a = box(0, 0.5, 0.5, 1.0, 1.0)
        b = box(0, 1.0, 0.5, 1.0, 1.0)
        assert iou(a, b) == pytest.approx(1.0 / 3.0)

    @given(
        st.floats(0.1, 0.9), st.floats(0.1, 0.9),
        st.floats(0.01, 0.5), st.floats(0.01, 0.5),
        st.floats(0.1, 0.9), st.floats(0.1, 0.9),
        st.floats(0.01, 0.5), st.floats(0.01, 0.5),
    )
    @settings(max_examples=50, deadline=None)
    def test_bounded_and_symmetric(self, ax, ay, aw, ah, bx, by, bw, bh):
        a, b = box(0, ax, ay, aw, ah), box(0, bx, by, bw, bh)
        v = iou(a, b)
        assert 0.0 <= v <= 1.0
        assert v == pytest.approx(iou(b, a), abs=1e-12)


class TestMatching:
    def test_perfect_single_match(self):
        result = match_detections([box(0, 0.5, 0.5, 0.2, 0.2, 0.9)], [box(0, 0.5, 0.5, 0.2, 0.2)])
        assert result.confusion.tp1 == 1
        assert result.confusion.total() == 1
        assert result.scored[0].is_tp

    def test_double_detection_counts_one_tp_one_fp(self):
        dets = [box(0, 0.5, 0.5, 0.2, 0.2, 0.9), box(0, 0.51, 0.5, 0.2, 0.2, 0.8)]
        result = match_detections(dets, [box(0, 0.5, 0.5, 0.2, 0.2)])
        flags = sorted(s.is_tp for s in result.scored)
        assert flags == [False, True]
        # the higher-confidence detection is the one matched
        assert result.scored[0].confidence == 0.9 and result.scored[0].is_tp

    def test_cross_class_overlap_hits_off_diagonal(self):
        dets = [box(1, 0.5, 0.5, 0.2, 0.2, 0.8)]
        gts = [box(0, 0.5, 0.5, 0.2, 0.2)]
        result = match_detections(dets, gts)
        assert result.confusion.fp1 == 1  # gt class 0 row, predicted class 1 column
        assert not result.scored[0].is_tp

    def test_unmatched_det_and_gt_hit_background(self):
        dets = [box(0, 0.2, 0.2, 0.1, 0.1, 0.7)]
        gts = [box(1, 0.8, 0.8, 0.1, 0.1)]
        result = match_detections(dets, gts)
        assert result.confusion.fn2 == 1  # background row, predicted class 0
        assert result.confusion.fp3 == 1  # gt class 1 row, predicted background

    def test_marginal_identities_random(self, rng):
        for _ in range(50):
            dets = [
                box(int(rng.integers(2)), float(rng.uniform(0.2, 0.8)), float(rng.uniform(0.2, 0.8)),
                    float(rng.uniform(0.05, 0.3)), float(rng.uniform(0.05, 0.3)), float(rng.uniform(0, 1)))
                for _ in range(int(rng.integers(0, 10)))
            ]
            gts = [
                box(int(rng.integers(2)), float(rng.uniform(0.2, 0.8)), float(rng.uniform(0.2, 0.8)),
                    float(rng.uniform(0.05, 0.3)), float(rng.uniform(0.05, 0.3)))
                for _ in range(int(rng.integers(0, 10)))
            ]
            cm = match_detections(dets, gts).confusion
            assert cm.row_sums() == tuple(cm.cells.sum(axis=1))
            assert cm.col_sums() == tuple(cm.cells.sum(axis=0))
            assert cm.total() == sum(cm.row_sums())


class TestPRF:
    def test_hand_case(self):
        scored = [ScoredDetection(0, 0.9, True)] * 3 + [ScoredDetection(0, 0.5, False)]
        result = MatchResult(scored, [3, 0], ConfusionMatrix())
        p, r, f1 = precision_recall_f1(result, 0)
        assert (p, r) == (0.75, 1.0)
        assert f1 == pytest.approx(6.0 / 7.0)

    def test_vacuous_agreement(self):
        result = MatchResult([], [0, 0], ConfusionMatrix())
        assert precision_recall_f1(result, 0) == (1.0, 1.0, 1.0)

    def test_no_dets_with_misses(self):
        result = MatchResult([], [2, 0], ConfusionMatrix())
        p, r, f1 = precision_recall_f1(result, 0)
        assert (p, r, f1) == (0.0, 0.0, 0.0)

    def test_only_false_positives(self):
        result = MatchResult([ScoredDetection(0, 0.9, False)], [0, 0], ConfusionMatrix())
        p, r, _ = precision_recall_f1(result, 0)
        assert p == 0.0 and r == 0.0


class TestAP:
    def test_single_correct_detection(self):
        result = MatchResult([ScoredDetection(0, 0.9, True)], [1, 0], ConfusionMatrix())
        assert average_precision(pr_curve(result, 0)) == 1.0

    def test_tp_fp_tp_hand_case(self):
        scored = [
            ScoredDetection(0, 0.9, True),
            ScoredDetection(0, 0.8, False),
            ScoredDetection(0, 0.7, True),
        ]
        result = MatchResult(scored, [2, 0], ConfusionMatrix())
        assert average_precision(pr_curve(result, 0)) == pytest.approx(5.0 / 6.0, abs=1e-12)

    def test_no_detections_with_gts(self):
        result = MatchResult([], [3, 0], ConfusionMatrix())
        assert average_precision(pr_curve(result, 0)) == 0.0

    def test_no_gts_is_skip(self):
        result = MatchResult([], [0, 1], ConfusionMatrix())
        assert average_precision(pr_curve(result, 0)) is None

    def test_matches_brute_force_randomized(self, rng):
        for _ in range(60):
            result = random_match_result(rng)
            for cid in (0, 1):
                curve = pr_curve(result, cid)
                if curve.n_gt == 0:
                    continue
                assert average_precision(curve) == pytest.approx(
                    brute_force_ap(curve), abs=1e-9
                )

    def test_invariant_under_monotone_confidence_rescale(self, rng):
        result = random_match_result(rng)
        squashed = MatchResult(
            [ScoredDetection(s.class_id, s.confidence**3, s.is_tp) for s in result.scored],
            result.gt_counts,
            ConfusionMatrix(),
        )
        for cid in (0, 1):
            a, b = pr_curve(result, cid), pr_curve(squashed, cid)
            if a.n_gt == 0:
                continue
            assert average_precision(a) == pytest.approx(average_precision(b), abs=1e-12)

    def test_added_true_positive_never_lowers_recall(self, rng):
        # matching one previously-missed ground truth can only raise recall
        for _ in range(20):
            result = random_match_result(rng)
            cid = 0
            tp = sum(1 for s in result.scored if s.class_id == cid and s.is_tp)
            if result.gt_counts[cid] <= tp:  # no miss left to convert
                continue
            _, r0, _ = precision_recall_f1(result, cid)
            fixed = MatchResult(
                result.scored + [ScoredDetection(cid, 0.5, True)],
                result.gt_counts,
                ConfusionMatrix(),
            )
            _, r1, _ = precision_recall_f1(fixed, cid)
            assert r1 >= r0

    def test_trailing_false_positive_never_raises_ap(self, rng):
        for _ in range(20):
            result = random_match_result(rng)
            cid = 0
            if result.gt_counts[cid] == 0:
                continue
            base = average_precision(pr_curve(result, cid))
            floor_conf = min((s.confidence for s in result.scored), default=1.0)
            worse = MatchResult(
                result.scored + [ScoredDetection(cid, floor_conf / 2, False)],
                result.gt_counts,
                ConfusionMatrix(),
            )
            assert average_precision(pr_curve(worse, cid)) <= base + 1e-12


class TestMeanAP:
    def test_simple_mean(self):
        assert mean_ap([1.0, 0.0]) == 0.5
        assert mean_ap([0.7, 0.7]) == pytest.approx(0.7)

    def test_skips_absent_classes(self):
        assert mean_ap([0.8, None]) == pytest.approx(0.8)

    def test_all_absent_rejected(self):
        with pytest.raises(ValueError):
            mean_ap([None, None])


def test_evaluate_end_to_end():
    gts = [box(0, 0.3, 0.3, 0.2, 0.2), box(1, 0.7, 0.7, 0.2, 0.2)]
    dets = [box(0, 0.3, 0.3, 0.2, 0.2, 0.9), box(1, 0.7, 0.7, 0.2, 0.2, 0.8)]
    report = evaluate([(dets, gts)])
    assert report.map50 == 1.0
    assert all(c.precision == 1.0 and c.recall == 1.0 for c in report.per_class)
    assert report.confusion.tp1 == 1 and report.confusion.tp2 == 1
