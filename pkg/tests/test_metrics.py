from fractions import Fraction

import numpy as np
import pytest

from specdrive.errors import EmptyMatrix, LabelOutOfRange, ShapeMismatch
from specdrive.metrics import (
    ConfusionMatrix,
    accumulate,
    compute_metrics,
    inverse_frequency_weights,
    report_csv,
)

TRAIN_FREQUENCIES = np.array([0.5956, 0.0338, 0.3706])


def test_perfect_prediction_is_diagonal():
    gt = np.array([[0, 1], [2, 1]])
    cm = accumulate(gt, gt, 3)
    assert np.array_equal(cm.counts, np.diag([1, 2, 1]))
    rep = compute_metrics(cm)
    assert np.allclose(rep.recall, 1) and np.allclose(rep.precision, 1)
    assert np.allclose(rep.iou, 1)
    assert rep.overall == (1, 1, 1)
    assert rep.mean == (1, 1, 1) and rep.weighted == (1, 1, 1)


def test_hand_counted_toy_matrix():
    gt = np.array([0, 0, 1, 1])
    pred = np.array([0, 1, 1, 1])
    cm = accumulate(gt, pred, 2)
    assert np.array_equal(cm.counts, [[1, 1], [0, 2]])
    rep = compute_metrics(cm)
    assert rep.recall[0] == pytest.approx(0.5)
    assert rep.precision[0] == pytest.approx(1.0)
    assert rep.iou[0] == pytest.approx(0.5)
    assert rep.recall[1] == pytest.approx(1.0)
    assert rep.precision[1] == pytest.approx(2 / 3)
    assert rep.iou[1] == pytest.approx(2 / 3)


def test_ignore_label_skips_pixels():
    gt = np.full((4, 4), 255, np.uint8)
    pred = np.zeros((4, 4), np.uint8)
    cm = accumulate(gt, pred, 3)
    assert cm.total == 0
    with pytest.raises(EmptyMatrix):
        compute_metrics(cm)


def test_inverse_frequency_weights_exact():
    w = inverse_frequency_weights(TRAIN_FREQUENCIES)
    exact = [Fraction(1) / Fraction("0.5956"), Fraction(1) / Fraction("0.0338"),
             Fraction(1) / Fraction("0.3706")]
    total = sum(exact)
    for got, want in zip(w, exact):
        assert abs(got - float(want / total)) <= 1e-12
    assert w.sum() == pytest.approx(1.0, abs=1e-12)


def test_weighted_aggregation_matches_formula():
    counts = np.array([[50, 3, 2], [1, 10, 1], [4, 2, 40]], np.int64)
    rep = compute_metrics(ConfusionMatrix(counts), frequencies=TRAIN_FREQUENCIES)
    w = inverse_frequency_weights(TRAIN_FREQUENCIES)
    for got, metric in zip(rep.weighted, (rep.recall, rep.precision, rep.iou)):
        assert got == pytest.approx(float((w * metric).sum()), abs=1e-12)


def test_label_permutation_equivariance(rng):
    gt = rng.integers(0, 3, 500)
    pred = rng.integers(0, 3, 500)
    rep = compute_metrics(accumulate(gt, pred, 3))
    perm = np.array([2, 0, 1])
    rep_p = compute_metrics(accumulate(perm[gt], perm[pred], 3))
    for c in range(3):
        assert rep.iou[c] == pytest.approx(rep_p.iou[perm[c]])
        assert rep.recall[c] == pytest.approx(rep_p.recall[perm[c]])


def test_iou_bounded_by_recall_and_precision(rng):
    gt = rng.integers(0, 4, 1000)
    pred = rng.integers(0, 4, 1000)
    rep = compute_metrics(accumulate(gt, pred, 4))
    for c in range(4):
        if not np.isnan(rep.iou[c]):
            assert rep.iou[c] <= rep.recall[c] + 1e-12
            assert rep.iou[c] <= rep.precision[c] + 1e-12


def test_micro_metrics_equal_accuracy(rng):
    gt = rng.integers(0, 3, 800)
    pred = rng.integers(0, 3, 800)
    cm = accumulate(gt, pred, 3)
    acc = (gt == pred).mean()
    r, p, _ = compute_metrics(cm).overall
    assert r == pytest.approx(acc) and p == pytest.approx(acc)


def test_adding_correct_pixels_never_hurts(rng):
    gt = rng.integers(0, 3, 300)
    pred = rng.integers(0, 3, 300)
    cm = accumulate(gt, pred, 3)
    rep = compute_metrics(cm)
    more = accumulate(np.full(50, 1), np.full(50, 1), 3, into=cm)
    rep2 = compute_metrics(more)
    assert rep2.recall[1] >= rep.recall[1] - 1e-12
    assert rep2.precision[1] >= rep.precision[1] - 1e-12
    assert rep2.iou[1] >= rep.iou[1] - 1e-12


def test_merge_is_elementwise_add(rng):
    gt = rng.integers(0, 3, 400)
    pred = rng.integers(0, 3, 400)
    full = accumulate(gt, pred, 3)
    merged = accumulate(gt[:150], pred[:150], 3) + accumulate(gt[150:], pred[150:], 3)
    assert np.array_equal(full.counts, merged.counts)


def test_absent_class_excluded_with_warning():
    gt = np.array([0, 0, 1, 1])
    pred = np.array([0, 0, 1, 1])
    rep = compute_metrics(accumulate(gt, pred, 3))
    assert not rep.present[2]
    assert np.isnan(rep.weights[2])
    assert rep.mean == (1, 1, 1)
    assert any("absent" in w for w in rep.warnings)


def test_zero_denominator_reported_missing():
    # class 1 present in gt but never predicted and never hit
    counts = np.array([[5, 0], [3, 0]], np.int64)
    rep = compute_metrics(ConfusionMatrix(counts))
    assert np.isnan(rep.precision[1])
    assert rep.recall[1] == 0.0
    assert rep.iou[1] == 0.0
    assert not np.isnan(rep.mean[1])  # mean precision over defined classes only


def test_label_out_of_range():
    with pytest.raises(LabelOutOfRange):
        accumulate(np.array([0, 3]), np.array([0, 0]), 3)
    with pytest.raises(LabelOutOfRange):
        accumulate(np.array([0, 0]), np.array([0, 255]), 3)


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        accumulate(np.zeros((2, 2)), np.zeros((2, 3)), 2)


def test_csv_format():
    gt = np.array([0, 0, 1, 1])
    pred = np.array([0, 1, 1, 1])
    rep = compute_metrics(accumulate(gt, pred, 2))
    csv = report_csv(rep, ["road", "marks"])
    lines = csv.strip().split("\n")
    assert lines[0] == "name,recall,precision,iou"
    assert lines[1] == "road,50.00,100.00,50.00"
    assert lines[2] == "marks,100.00,66.67,66.67"
    assert lines[-1].startswith("weighted,")
