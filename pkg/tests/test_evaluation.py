import numpy as np
import pytest

from foodcal.calorimetry import EstimationRecord
from foodcal.dataset import BoundingBox
from foodcal.errors import MissingDataError
from foodcal.evaluation import (
    REPORT_HEADER,
    BoxPrediction,
    BoxTruth,
    average_precision,
    emit_report,
    iou,
    match_detections,
    mean_mass_error,
    mean_volume_error,
    summarize,
)


def _vol_records(food, pairs):
    return [
        EstimationRecord(scene_id=f"s{i}", food=food, est_volume=v, ref_volume=rv)
        for i, (v, rv) in enumerate(pairs)
    ]


def _mass_records(food, pairs):
    return [
        EstimationRecord(scene_id=f"s{i}", food=food, est_volume=1.0, ref_volume=1.0,
                         est_mass=m, ref_mass=rm)
        for i, (m, rm) in enumerate(pairs)
    ]


# --------------------------------------------------------------- mean errors

def test_mean_volume_error_single():
    assert mean_volume_error(_vol_records("apple", [(110, 100)])) == pytest.approx(0.10, abs=1e-15)


def test_mean_volume_error_symmetric():
    records = _vol_records("apple", [(90, 100), (110, 100)])
    assert mean_volume_error(records) == pytest.approx(0.0, abs=1e-15)


def test_mean_volume_error_reproduces_reference_row():
    # per-pair ratios -0.10 and -0.1318 average to the expected -11.59%
    records = _vol_records("apple", [(90, 100), (8682, 10000)])
    assert mean_volume_error(records) == pytest.approx(-0.1159, abs=1e-12)


def test_mean_mass_error_values():
    assert mean_mass_error(_mass_records("apple", [(120, 100)])) == pytest.approx(0.20, abs=1e-15)
    assert mean_mass_error(_mass_records("apple", [(100, 100)])) == 0.0


def test_mean_mass_error_reproduces_reference_row():
    records = _mass_records("apple", [(90, 100), (8372, 10000)])
    assert mean_mass_error(records) == pytest.approx(-0.1314, abs=1e-12)


def test_mean_error_is_mean_of_ratios_not_ratio_of_means():
    records = _vol_records("apple", [(50, 100), (300, 200)])
    # ratio of means would be (350-300)/300 = +1/6; mean of ratios is 0
    assert mean_volume_error(records) == pytest.approx(0.0, abs=1e-15)


def test_mean_error_requires_references():
    with pytest.raises(MissingDataError):
        mean_volume_error([EstimationRecord("s", "apple", 10.0)])


# --------------------------------------------------------------- iou

def test_iou_identical_and_disjoint():
    a = BoundingBox(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, BoundingBox(20, 20, 30, 30)) == 0.0


def test_iou_half_overlap():
    a = BoundingBox(0, 0, 10, 10)
    b = BoundingBox(5, 0, 15, 10)
    assert iou(a, b) == pytest.approx(1 / 3, rel=1e-12)


def test_iou_symmetry_random_boxes():
    rng = np.random.default_rng(6)
    for _ in range(50):
        x0, y0, x1, y1 = rng.integers(0, 50, 4)
        a = BoundingBox(min(x0, x1), min(y0, y1), max(x0, x1) + 1, max(y0, y1) + 1)
        x0, y0, x1, y1 = rng.integers(0, 50, 4)
        b = BoundingBox(min(x0, x1), min(y0, y1), max(x0, x1) + 1, max(y0, y1) + 1)
        assert iou(a, b) == iou(b, a)
        assert 0.0 <= iou(a, b) <= 1.0


# --------------------------------------------------------------- AP

def brute_force_ap(predictions, truths, iou_threshold=0.5):
    """Naive all-points AP: scan max precision at each distinct recall level."""
    matches = match_detections(predictions, truths, iou_threshold)
    flags = [m.truth is not None for m in matches]
    precisions, recalls = [], []
    tp = 0
    for i, flag in enumerate(flags, start=1):
        tp += int(flag)
        precisions.append(tp / i)
        recalls.append(tp / len(truths))
    ap, prev = 0.0, 0.0
    for level in sorted(set(recalls)):
        if level == prev:
            continue
        best = max((p for p, r in zip(precisions, recalls) if r >= level), default=0.0)
        ap += (level - prev) * best
        prev = level
    return ap


def test_ap_perfect_single():
    box = BoundingBox(0, 0, 10, 10)
    assert average_precision([BoxPrediction("i", box, 0.9)], [BoxTruth("i", box)]) == 1.0


def test_ap_no_predictions():
    assert average_precision([], [BoxTruth("i", BoundingBox(0, 0, 10, 10))]) == 0.0


def test_ap_empty_ground_truth_warns(caplog):
    import logging

    with caplog.at_level(logging.WARNING, logger="foodcal.evaluation"):
        ap = average_precision([BoxPrediction("i", BoundingBox(0, 0, 10, 10), 0.9)], [])
    assert ap == 0.0
    assert any("empty ground truth" in r.message for r in caplog.records)


def test_ap_lower_scored_match_is_quarter():
    gt_box = BoundingBox(0, 0, 10, 10)
    truths = [BoxTruth("i", gt_box), BoxTruth("i", BoundingBox(50, 50, 60, 60))]
    predictions = [
        BoxPrediction("i", BoundingBox(100, 100, 110, 110), 0.9),  # FP, higher score
        BoxPrediction("i", gt_box, 0.5),  # TP
    ]
    assert average_precision(predictions, truths) == pytest.approx(0.25, abs=1e-12)
    assert brute_force_ap(predictions, truths) == pytest.approx(0.25, abs=1e-12)


def test_ap_matches_brute_force_on_random_fixtures():
    rng = np.random.default_rng(8)
    for _ in range(40):
        n_gt = int(rng.integers(1, 4))
        n_pred = int(rng.integers(0, 7))
        truths, predictions = [], []
        for g in range(n_gt):
            x, y = rng.integers(0, 60, 2)
            truths.append(BoxTruth("img", BoundingBox(x, y, x + 12, y + 12)))
        for _ in range(n_pred):
            anchor = truths[rng.integers(0, n_gt)].box
            dx, dy = rng.integers(-8, 9, 2)
            predictions.append(BoxPrediction(
                "img",
                BoundingBox(anchor.x_min + dx, anchor.y_min + dy,
                            anchor.x_max + dx, anchor.y_max + dy),
                float(rng.random()),
            ))
        ap = average_precision(predictions, truths)
        assert ap == pytest.approx(brute_force_ap(predictions, truths), abs=1e-12)


def test_ap_invariant_under_monotone_score_transform():
    rng = np.random.default_rng(9)
    truths = [BoxTruth("img", BoundingBox(10 * i, 0, 10 * i + 8, 8)) for i in range(4)]
    predictions = [
        BoxPrediction("img", BoundingBox(10 * i + int(rng.integers(0, 4)), 0,
                                         10 * i + 8, 8), float(rng.random()))
        for i in range(4)
    ]
    base = average_precision(predictions, truths)
    squashed = [BoxPrediction(p.image_id, p.box, 0.1 + 0.5 * np.tanh(p.score))
                for p in predictions]
    assert average_precision(squashed, truths) == pytest.approx(base, abs=1e-12)


def test_ap_11point_mode():
    box = BoundingBox(0, 0, 10, 10)
    ap = average_precision([BoxPrediction("i", box, 0.9)], [BoxTruth("i", box)],
                           interpolation="11point")
    assert ap == pytest.approx(1.0, abs=1e-12)


def test_greedy_matching_claims_each_truth_once():
    box = BoundingBox(0, 0, 10, 10)
    predictions = [BoxPrediction("i", box, 0.9), BoxPrediction("i", box, 0.8)]
    matches = match_detections(predictions, [BoxTruth("i", box)])
    assert [m.truth is not None for m in matches] == [True, False]


# --------------------------------------------------------------- report

def _summary(food="apple"):
    return summarize(_mass_records(food, [(100, 110), (120, 100)]))


def test_emit_report_shape(tmp_path):
    rows = emit_report([_summary()], tmp_path / "report.csv")
    assert rows[0] == REPORT_HEADER and len(REPORT_HEADER) == 8
    assert len(rows) == 2
    assert rows[1][0] == "apple" and rows[1][1] == "4"  # two images per estimation


def test_emit_report_19_rows(tmp_path):
    from foodcal.dataset import default_params

    summaries = [_summary(food) for food in default_params()]
    rows = emit_report(summaries, tmp_path / "report.csv")
    assert len(rows) == 20
    text = (tmp_path / "report.csv").read_text(encoding="utf-8")
    assert text.splitlines()[0] == ",".join(REPORT_HEADER)


def test_emit_report_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        emit_report([], tmp_path / "report.csv")
