"""Losses, label weighting, and evaluation metrics.

The cross-entropy losses are the only differentiable pieces: they take the
probability ``Tensor`` produced by a network's softmax and return a scalar
``Tensor``. Per-sample loss is the weighted negative log probability of
the true label, summed over pixels for segmentation; the batch reduction
is the mean. Logs are clamped at ``LOG_EPS`` so the loss stays finite for
degenerate probabilities.

Label weights follow an inverse-frequency square-root rule: label ``l``
with pixel frequency ``f_l`` gets ``sqrt(sum_k f_k / f_l)``; labels that
never occur get weight 0 and drop out of the sum.

Everything below the losses is plain numpy on integer label arrays:
confusion matrices (rows = truth), accuracy, Cohen's kappa, per-class F1
(0 when the denominator is 0), and pooled Dice overlap (1.0 when both
masks are empty). ``MetricsReport.metric_rows()`` is the serialization
consumed by the sweep CSVs: ``(metric, value)`` pairs using the names
``accuracy``, ``kappa``, ``macro_f1``, ``f1_<class>``, and for
segmentation additionally ``dice_fg`` and ``dice_<label>``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeError
from .tensor import Tensor

LOG_EPS = 1e-12
UNLABELED = 255


def label_weights(label_maps, num_labels, ignore_label=UNLABELED):
    """Inverse-frequency-sqrt weights from the training label maps."""
    flat = np.concatenate([np.asarray(m).reshape(-1) for m in label_maps])
    bad = (flat >= num_labels) & (flat != ignore_label)
    if bad.any():
        raise DataError(f"label {int(flat[bad][0])} out of range for {num_labels} labels")
    freq = np.bincount(flat[flat < num_labels].astype(np.int64), minlength=num_labels)[:num_labels]
    total = freq.sum()
    weights = np.zeros(num_labels, dtype=np.float64)
    present = freq > 0
    weights[present] = np.sqrt(total / freq[present])
    return weights


def _gather_true_prob(probs, labels):
    idx = labels[:, None, ...].astype(np.intp)
    return np.take_along_axis(probs, idx, axis=1)[:, 0]


def _check_labels(labels, num_labels, ignore_label):
    bad = (labels < 0) | (labels >= num_labels)
    if ignore_label is not None:
        bad &= labels != ignore_label
    if bad.any():
        coord = tuple(int(v) for v in np.argwhere(bad)[0])
        raise DataError(
            f"label {int(labels[coord])} at {coord} out of range for {num_labels} labels"
        )


def _weighted_ce(probs, labels, weights, ignore_label):
    labels = np.asarray(labels)
    if probs.shape[0] != labels.shape[0] or probs.shape[2:] != labels.shape[1:]:
        raise ShapeError(f"probs {probs.shape} and labels {labels.shape} do not align")
    num_labels = probs.shape[1]
    if len(weights) != num_labels:
        raise ShapeError(f"got {len(weights)} weights for {num_labels} labels")
    _check_labels(labels, num_labels, ignore_label)
    batch = probs.shape[0]
    keep = labels != ignore_label if ignore_label is not None else np.ones(labels.shape, bool)
    safe = np.where(keep, labels, 0).astype(np.intp)
    w = np.asarray(weights, dtype=np.float64)[safe] * keep
    p = _gather_true_prob(probs.data.astype(np.float64), safe)
    pc = np.maximum(p, LOG_EPS)
    # pixel sum within each sample (a single term for classification), batch mean
    loss = -(w * np.log(pc)).reshape(batch, -1).sum(axis=1).mean()

    def bwd(g):
        gp = -(w * (p >= LOG_EPS)) / pc / batch * float(g)
        full = np.zeros(probs.shape, dtype=np.float64)
        np.put_along_axis(full, safe[:, None, ...], gp[:, None, ...], axis=1)
        probs.accumulate(full.astype(probs.dtype))

    return Tensor.from_op(np.asarray(loss), (probs,), bwd)


def weighted_ce_seg(probs, labels, weights, ignore_label=None):
    """Weighted cross-entropy for segmentation: pixel sum, batch mean."""
    if probs.data.ndim < 3:
        raise ShapeError(f"segmentation probs need spatial axes, got {probs.shape}")
    return _weighted_ce(probs, labels, weights, ignore_label)


def weighted_ce_cls(probs, labels, weights):
    """Weighted cross-entropy for classification: one term per sample."""
    if probs.data.ndim != 2:
        raise ShapeError(f"classification probs must be (batch, classes), got {probs.shape}")
    return _weighted_ce(probs, labels, weights, ignore_label=None)


def dice_pooled(pred, truth, label):
    """Dice overlap of ``label`` pooled over everything passed in."""
    return dice_binary(np.asarray(pred) == label, np.asarray(truth) == label)


def dice_binary(pred_mask, true_mask):
    """2|A&B| / (|A|+|B|); defined as 1.0 when both masks are empty."""
    pred_mask = np.asarray(pred_mask, bool)
    true_mask = np.asarray(true_mask, bool)
    if pred_mask.shape != true_mask.shape:
        raise ShapeError(f"mask shapes differ: {pred_mask.shape} vs {true_mask.shape}")
    denom = int(pred_mask.sum()) + int(true_mask.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((pred_mask & true_mask).sum()) / denom


def confusion_matrix(truth, pred, num_classes):
    """Counts with rows indexed by truth, columns by prediction."""
    truth = np.asarray(truth).reshape(-1).astype(np.int64)
    pred = np.asarray(pred).reshape(-1).astype(np.int64)
    if truth.shape != pred.shape:
        raise ShapeError(f"truth and prediction sizes differ: {truth.shape} vs {pred.shape}")
    for name, arr in (("truth", truth), ("prediction", pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise DataError(f"{name} labels outside [0, {num_classes})")
    counts = np.bincount(truth * num_classes + pred, minlength=num_classes * num_classes)
    return counts.reshape(num_classes, num_classes)


def accuracy(cm):
    cm = np.asarray(cm)
    total = cm.sum()
    if total == 0:
        raise DataError("accuracy of an empty confusion matrix is undefined")
    return float(np.trace(cm) / total)


def cohen_kappa(cm):
    """(p_o - p_e) / (1 - p_e), with the degenerate p_e = 1 case mapped to 0."""
    cm = np.asarray(cm, dtype=np.float64)
    total = cm.sum()
    if total == 0:
        raise DataError("kappa of an empty confusion matrix is undefined")
    po = np.trace(cm) / total
    pe = float((cm.sum(axis=1) * cm.sum(axis=0)).sum()) / (total * total)
    if pe >= 1.0:
        return 0.0
    return float((po - pe) / (1.0 - pe))


def f1_per_class(cm):
    """F1 for each class; 0.0 where the denominator vanishes."""
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    denom = cm.sum(axis=0) + cm.sum(axis=1)  # 2*tp + fp + fn
    out = np.zeros(cm.shape[0], dtype=np.float64)
    nz = denom > 0
    out[nz] = 2.0 * tp[nz] / denom[nz]
    return out


@dataclass(frozen=True)
class MetricsReport:
    """Evaluation summary for one model on one dataset."""

    task: str  # "classification" or "segmentation"
    n_samples: int
    accuracy: float
    kappa: float
    f1: tuple
    confusion: tuple
    dice: tuple | None = None  # per label, segmentation only
    dice_foreground: float | None = None

    @classmethod
    def from_confusion(cls, task, n_samples, cm, dice=None, dice_foreground=None):
        return cls(
            task=task,
            n_samples=int(n_samples),
            accuracy=accuracy(cm),
            kappa=cohen_kappa(cm),
            f1=tuple(float(v) for v in f1_per_class(cm)),
            confusion=tuple(tuple(int(v) for v in row) for row in np.asarray(cm)),
            dice=None if dice is None else tuple(float(v) for v in dice),
            dice_foreground=None if dice_foreground is None else float(dice_foreground),
        )

    def metric_rows(self):
        """(metric, value) pairs in the documented CSV order."""
        rows = [("accuracy", self.accuracy), ("kappa", self.kappa)]
        rows.append(("macro_f1", float(np.mean(self.f1))))
        rows.extend((f"f1_{i}", v) for i, v in enumerate(self.f1))
        if self.dice_foreground is not None:
            rows.append(("dice_fg", self.dice_foreground))
        if self.dice is not None:
            rows.extend((f"dice_{i}", v) for i, v in enumerate(self.dice))
        return rows
