"""Training loops and evaluation.

``fit_segmentation`` trains a segmentation net on dense label maps with
the square-root inverse-frequency label weighting computed from the
training set itself. ``fit_classifier`` trains a classifier head on
frozen backbone features (or any classifier directly on images when no
backbone is given) with the same weighting over class frequencies.

Randomness discipline: each fit derives three independent generator
streams (batch shuffling, augmentation, dropout) from ``config.seed``,
so runs repeat exactly for a given seed and changing one knob (say,
augmentation) does not shift the others' draws.

Images are stored in [0, 255] and scaled by 1/255 at batch assembly;
augmentation, when enabled, is re-drawn per sample per epoch before
scaling. When a frozen backbone is used without augmentation the feature
stacks are extracted once up front and reused every epoch.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics
from .augment import augment_sample
from .errors import ConfigError, DataError, NumericError
from .optim import Adam

INTENSITY_SCALE = np.float32(1.0 / 255.0)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    learning_rate: float
    augment: object = None  # AugmentPolicy, or None for no augmentation
    seed: int = 0
    log_every: int = 0  # print a progress line every n epochs; 0 = silent

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be non-negative, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be non-negative, got {self.learning_rate}")


PRESETS = {
    "seg2d": TrainConfig(epochs=120, batch_size=5, learning_rate=1e-3),
    "seg3d": TrainConfig(epochs=100, batch_size=1, learning_rate=1e-3),
    "cls2d": TrainConfig(epochs=300, batch_size=64, learning_rate=5e-4),
    "cls3d": TrainConfig(epochs=50, batch_size=4, learning_rate=1e-4),
}


def preset(name, **overrides):
    """Named baseline configuration, optionally with fields replaced."""
    if name not in PRESETS:
        raise ConfigError(f"unknown training preset {name!r}; choose from {sorted(PRESETS)}")
    cfg = PRESETS[name]
    return replace(cfg, **overrides) if overrides else cfg


@dataclass
class TrainResult:
    epoch_losses: list = field(default_factory=list)
    weights: np.ndarray | None = None
    steps: int = 0

    @property
    def final_loss(self):
        return self.epoch_losses[-1] if self.epoch_losses else None


def _streams(seed):
    shuffle_ss, augment_ss, dropout_ss = np.random.SeedSequence(seed).spawn(3)
    return (
        np.random.default_rng(shuffle_ss),
        np.random.default_rng(augment_ss),
        np.random.default_rng(dropout_ss),
    )


def _check_loss(value, epoch, step, config):
    if not np.isfinite(value):
        raise NumericError(
            f"non-finite loss {value} at epoch {epoch} step {step} "
            f"(lr={config.learning_rate}, batch_size={config.batch_size}); "
            "a lower learning rate usually fixes this"
        )


def _log(config, epoch, mean_loss):
    if config.log_every and (epoch % config.log_every == 0 or epoch == config.epochs):
        print(f"  epoch {epoch}/{config.epochs}  loss {mean_loss:.4f}", flush=True)


def fit_segmentation(net, dataset, config, weights=None):
    """Train ``net`` on ``dataset`` label maps; returns a TrainResult.

    ``weights`` defaults to the square-root inverse-frequency weights of
    the training labels. The per-epoch loss trace is the mean over that
    epoch's batches.
    """
    if not len(dataset):
        raise DataError("cannot train on an empty dataset")
    if weights is None:
        weights = metrics.label_weights([s.seg for s in dataset.samples], dataset.num_labels)
    shuffle_rng, augment_rng, dropout_rng = _streams(config.seed)
    opt = Adam(net.parameters(), lr=config.learning_rate)
    result = TrainResult(weights=np.asarray(weights, dtype=np.float64))
    samples = dataset.samples
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(samples))
        losses = []
        for step, start in enumerate(range(0, len(order), config.batch_size)):
            batch = order[start : start + config.batch_size]
            xs, ys = [], []
            for i in batch:
                img, seg = samples[i].image[0], samples[i].seg
                if config.augment is not None:
                    img, seg = augment_sample(img, seg, config.augment, augment_rng)
                xs.append(img)
                ys.append(seg)
            x = np.stack(xs)[:, None].astype(net.dtype) * INTENSITY_SCALE
            y = np.stack(ys)
            probs = net.forward(x, train=True, rng=dropout_rng)
            loss = metrics.weighted_ce_seg(probs, y, weights)
            value = float(loss.data)
            _check_loss(value, epoch, step, config)
            loss.backward()
            opt.step()
            opt.zero_grad()
            losses.append(value)
            result.steps += 1
        result.epoch_losses.append(float(np.mean(losses)))
        _log(config, epoch, result.epoch_losses[-1])
    return result


def fit_classifier(net, dataset, config, backbone=None, weights=None):
    """Train a classifier; with ``backbone`` the net sees frozen features.

    The backbone runs in eval mode with no gradient recording, so its
    parameters and running statistics never change. Without augmentation
    its features are computed once and reused across epochs.
    """
    if not len(dataset):
        raise DataError("cannot train on an empty dataset")
    targets = dataset.class_vector()
    if weights is None:
        weights = metrics.label_weights([targets], dataset.num_classes, ignore_label=None)
    shuffle_rng, augment_rng, dropout_rng = _streams(config.seed)
    opt = Adam(net.parameters(), lr=config.learning_rate)
    result = TrainResult(weights=np.asarray(weights, dtype=np.float64))
    samples = dataset.samples

    cached = None
    if backbone is not None and config.augment is None:
        cached = _extract_features(backbone, dataset.images() * INTENSITY_SCALE, config.batch_size)

    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(samples))
        losses = []
        for step, start in enumerate(range(0, len(order), config.batch_size)):
            batch = order[start : start + config.batch_size]
            if cached is not None:
                x = cached[batch]
            else:
                xs = []
                for i in batch:
                    img = samples[i].image[0]
                    if config.augment is not None:
                        img, _ = augment_sample(img, None, config.augment, augment_rng)
                    xs.append(img)
                x = np.stack(xs)[:, None].astype(net.dtype) * INTENSITY_SCALE
                if backbone is not None:
                    x = backbone.features(x)
            y = targets[batch]
            probs = net.forward(x, train=True, rng=dropout_rng)
            loss = metrics.weighted_ce_cls(probs, y, weights)
            value = float(loss.data)
            _check_loss(value, epoch, step, config)
            loss.backward()
            opt.step()
            opt.zero_grad()
            losses.append(value)
            result.steps += 1
        result.epoch_losses.append(float(np.mean(losses)))
        _log(config, epoch, result.epoch_losses[-1])
    return result


def _extract_features(backbone, images, batch_size):
    outs = []
    for start in range(0, images.shape[0], batch_size):
        outs.append(backbone.features(images[start : start + batch_size]))
    return np.concatenate(outs, axis=0)


def evaluate_segmentation(net, dataset, batch_size=4):
    """Pixel metrics plus per-label and foreground Dice over ``dataset``."""
    if not len(dataset):
        raise DataError("cannot evaluate on an empty dataset")
    truth = dataset.seg_stack()
    probs = net.predict(dataset.images() * INTENSITY_SCALE, batch_size=batch_size)
    pred = np.argmax(probs, axis=1)
    cm = metrics.confusion_matrix(truth.reshape(-1), pred.reshape(-1), dataset.num_labels)
    dice = [metrics.dice_pooled(pred, truth, lab) for lab in range(dataset.num_labels)]
    dice_fg = metrics.dice_binary(pred > 0, truth > 0)
    return metrics.MetricsReport.from_confusion(
        "segmentation", len(dataset), cm, dice=dice, dice_foreground=dice_fg
    )


def evaluate_classifier(model, dataset, batch_size=32):
    """Confusion-derived metrics for any model with a ``predict`` method."""
    if not len(dataset):
        raise DataError("cannot evaluate on an empty dataset")
    truth = dataset.class_vector()
    probs = model.predict(dataset.images() * INTENSITY_SCALE, batch_size=batch_size)
    pred = np.argmax(probs, axis=1)
    cm = metrics.confusion_matrix(truth, pred, dataset.num_classes)
    return metrics.MetricsReport.from_confusion("classification", len(dataset), cm)
