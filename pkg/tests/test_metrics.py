"""Loss values against closed forms and metrics against brute-force math."""

import numpy as np
import pytest

from segclass import metrics
from segclass.errors import DataError, ShapeError
from segclass.tensor import Tensor


# -- label weights --------------------------------------------------------


def test_inverse_sqrt_weights_spot_values():
    maps = [np.repeat(np.array([0, 1], np.uint8), [90, 10])]
    w = metrics.label_weights(maps, 2)
    assert np.allclose(w, [1.0541, 3.1623], atol=1e-4)


def test_uniform_frequencies_give_equal_weights():
    maps = [np.arange(6, dtype=np.uint8) % 3]
    w = metrics.label_weights(maps, 3)
    assert np.allclose(w, np.sqrt(3.0))


def test_absent_label_gets_zero_weight():
    w = metrics.label_weights([np.zeros(4, np.uint8)], 3)
    assert w[0] > 0 and w[1] == 0.0 and w[2] == 0.0


def test_ignore_label_excluded_from_weights():
    maps = [np.array([0, 0, 255, 255], np.uint8)]
    w = metrics.label_weights(maps, 2)
    assert np.allclose(w, [1.0, 0.0])


def test_out_of_range_label_raises():
    with pytest.raises(DataError):
        metrics.label_weights([np.array([0, 7], np.uint8)], 3)


# -- cross-entropy --------------------------------------------------------


def test_uniform_probs_give_log_k():
    probs = Tensor(np.full((2, 4), 0.25))
    labels = np.array([0, 3])
    loss = metrics.weighted_ce_cls(probs, labels, np.ones(4))
    assert abs(loss.data.item() - np.log(4.0)) < 1e-12


def test_half_prob_gives_log_two_and_weight_scales_linearly():
    probs = Tensor(np.array([[0.5, 0.5]]))
    labels = np.array([1])
    plain = metrics.weighted_ce_cls(probs, labels, np.ones(2)).data.item()
    scaled = metrics.weighted_ce_cls(probs, labels, np.array([1.0, 3.0])).data.item()
    assert abs(plain - np.log(2.0)) < 1e-12
    assert abs(scaled - 3.0 * np.log(2.0)) < 1e-12


def test_seg_loss_sums_pixels_and_averages_batch():
    # two samples, two pixels each, all at probability 1/2: per-sample loss
    # is 2 log 2, batch mean the same
    probs = Tensor(np.full((2, 2, 2, 1), 0.5))
    labels = np.zeros((2, 2, 1), np.uint8)
    loss = metrics.weighted_ce_seg(probs, labels, np.ones(2))
    assert abs(loss.data.item() - 2.0 * np.log(2.0)) < 1e-12


def test_seg_loss_skips_ignore_pixels():
    probs = Tensor(np.full((1, 2, 2, 1), 0.5))
    labels = np.array([[[0], [255]]], dtype=np.uint8)
    loss = metrics.weighted_ce_seg(probs, labels, np.ones(2), ignore_label=255)
    assert abs(loss.data.item() - np.log(2.0)) < 1e-12


def test_zero_probability_stays_finite():
    probs = Tensor(np.array([[1.0, 0.0]]))
    loss = metrics.weighted_ce_cls(probs, np.array([1]), np.ones(2))
    assert np.isfinite(loss.data.item())
    assert loss.data.item() == pytest.approx(-np.log(1e-12))


def test_cls_loss_gradient_matches_finite_difference():
    rng = np.random.default_rng(0)
    p = rng.uniform(0.2, 1.0, (3, 4))
    labels = np.array([0, 2, 3])
    weights = rng.uniform(0.5, 2.0, 4)
    pt = Tensor(p.copy(), requires_grad=True)
    metrics.weighted_ce_cls(pt, labels, weights).backward()
    for n, c in ((0, 0), (1, 2), (2, 1)):
        h = 1e-6
        bumped = p.copy()
        bumped[n, c] += h
        hi = metrics.weighted_ce_cls(Tensor(bumped), labels, weights).data.item()
        bumped[n, c] -= 2 * h
        lo = metrics.weighted_ce_cls(Tensor(bumped), labels, weights).data.item()
        assert pt.grad[n, c] == pytest.approx((hi - lo) / (2 * h), rel=1e-4, abs=1e-8)


def test_cls_loss_rejects_bad_labels_and_shapes():
    probs = Tensor(np.full((1, 3), 1 / 3))
    with pytest.raises(DataError):
        metrics.weighted_ce_cls(probs, np.array([5]), np.ones(3))
    with pytest.raises(ShapeError):
        metrics.weighted_ce_cls(Tensor(np.zeros((1, 3, 2, 2))), np.array([0]), np.ones(3))


# -- agreement metrics vs brute force -------------------------------------


def brute_accuracy(cm):
    return sum(cm[i][i] for i in range(len(cm))) / sum(map(sum, cm))


def brute_kappa(cm):
    total = sum(map(sum, cm))
    po = brute_accuracy(cm)
    pe = sum(sum(row) * sum(col) for row, col in zip(cm, np.transpose(cm))) / total**2
    if pe >= 1.0:
        return 0.0
    return (po - pe) / (1.0 - pe)


def brute_f1(cm, c):
    tp = cm[c][c]
    denom = sum(cm[c]) + sum(row[c] for row in cm)
    return 0.0 if denom == 0 else 2.0 * tp / denom


def test_metrics_match_brute_force_on_random_matrices():
    rng = np.random.default_rng(42)
    for _ in range(200):
        k = int(rng.integers(2, 7))
        cm = rng.integers(0, 20, (k, k))
        if cm.sum() == 0:
            cm[0, 0] = 1
        rows = cm.tolist()
        assert metrics.accuracy(cm) == pytest.approx(brute_accuracy(rows), abs=1e-12)
        assert metrics.cohen_kappa(cm) == pytest.approx(brute_kappa(rows), abs=1e-12)
        f1 = metrics.f1_per_class(cm)
        for c in range(k):
            assert f1[c] == pytest.approx(brute_f1(rows, c), abs=1e-12)


def test_dice_matches_brute_force_on_random_masks():
    rng = np.random.default_rng(43)
    for _ in range(200):
        a = rng.random((6, 6)) < rng.random()
        b = rng.random((6, 6)) < rng.random()
        inter = int((a & b).sum())
        denom = int(a.sum()) + int(b.sum())
        expect = 1.0 if denom == 0 else 2.0 * inter / denom
        assert metrics.dice_binary(a, b) == pytest.approx(expect, abs=1e-12)


def test_dice_empty_masks_define_one():
    z = np.zeros((3, 3), bool)
    assert metrics.dice_binary(z, z) == 1.0


def test_dice_pooled_selects_label():
    pred = np.array([[0, 1], [2, 1]])
    truth = np.array([[0, 1], [1, 1]])
    assert metrics.dice_pooled(pred, truth, 1) == pytest.approx(2 * 2 / (2 + 3))


def test_confusion_matrix_rows_are_truth():
    cm = metrics.confusion_matrix([0, 0, 1], [0, 1, 1], 2)
    assert np.array_equal(cm, [[1, 1], [0, 1]])


def test_confusion_matrix_validates_labels():
    with pytest.raises(DataError):
        metrics.confusion_matrix([0, 3], [0, 1], 2)
    with pytest.raises(ShapeError):
        metrics.confusion_matrix([0, 1], [0], 2)


def test_kappa_degenerate_marginals_map_to_zero():
    assert metrics.cohen_kappa([[5, 0], [0, 0]]) == 0.0


def test_empty_matrix_rejected():
    with pytest.raises(DataError):
        metrics.accuracy(np.zeros((2, 2), int))
    with pytest.raises(DataError):
        metrics.cohen_kappa(np.zeros((2, 2), int))


def test_report_rows_for_classification():
    cm = metrics.confusion_matrix([0, 1, 2], [0, 1, 1], 3)
    rep = metrics.MetricsReport.from_confusion("classification", 3, cm)
    rows = rep.metric_rows()
    names = [n for n, _ in rows]
    assert names == ["accuracy", "kappa", "macro_f1", "f1_0", "f1_1", "f1_2"]
    got = dict(rows)
    assert got["accuracy"] == pytest.approx(2 / 3)
    assert got["macro_f1"] == pytest.approx(float(metrics.f1_per_class(cm).mean()))


def test_report_rows_for_segmentation_include_dice():
    pred = np.array([[0, 1], [2, 2]])
    truth = np.array([[0, 1], [2, 1]])
    cm = metrics.confusion_matrix(truth, pred, 3)
    rep = metrics.MetricsReport.from_confusion(
        "segmentation", 1, cm, dice=(1.0, 2 / 3, 2 / 3), dice_foreground=2 / 3
    )
    names = [n for n, _ in rep.metric_rows()]
    assert "dice_fg" in names and "dice_1" in names and "dice_2" in names
    assert names.index("dice_fg") < names.index("dice_0")
