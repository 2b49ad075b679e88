"""The three compared training frameworks.

* ``manual``: the backbone is pretrained to reproduce the anatomical
  segmentation labels; the classifier head then trains on its frozen
  full-resolution feature stack.
* ``threshold``: identical, except the pretraining targets are k-means
  intensity clusters computed per image, so no annotated labels are
  needed anywhere in the pipeline.
* ``scratch``: no pretraining; a VGG-style net trains directly on the
  images.

``prepare`` builds the shared artifacts once per experiment (datasets,
preprocessing, pretrained backbones); ``run_cell`` trains and evaluates
one (framework, samples-per-class, seed) grid cell. All cells of one
(size, seed) pair draw the same training subset, so frameworks compare
on identical data.

Dataset seeds, the train/test pool split, and every cell's subset, net
init, and training streams are derived from named SeedSequence spawns,
which keeps any single cell reproducible in isolation.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import nets, trainer
from .dataset import Dataset, Sample
from .errors import ConfigError
from .expconfig import FRAMEWORK_CHOICES
from .phantoms import generate_phantoms
from .preprocess import clahe, kmeans_labels

PRETRAINED = ("manual", "threshold")


def apply_clahe(dataset, tiles, clip):
    """Dataset copy with every image equalized (no-op when tiles is 0)."""
    if not tiles:
        return dataset
    samples = [
        Sample(
            uid=s.uid,
            image=clahe(s.image[0], tiles=tiles, clip=clip)[None].astype(np.float32),
            seg=s.seg,
            cls=s.cls,
        )
        for s in dataset.samples
    ]
    return replace(dataset, samples=samples)


def cluster_relabel(dataset, k):
    """Dataset copy whose label maps are per-image k-means clusters."""
    samples = [
        Sample(uid=s.uid, image=s.image, seg=kmeans_labels(s.image[0], k)[0], cls=s.cls)
        for s in dataset.samples
    ]
    return replace(dataset, num_labels=k, samples=samples)


def sample_per_class(dataset, per_class, rng):
    """Subset with exactly ``per_class`` samples of every class."""
    labels = dataset.class_vector()
    picked = []
    for cls in range(dataset.num_classes):
        idx = np.flatnonzero(labels == cls)
        if idx.size < per_class:
            raise ConfigError(
                f"class {cls} has {idx.size} pool samples, cannot draw {per_class}"
            )
        picked.extend(int(i) for i in idx[rng.permutation(idx.size)[:per_class]])
    return dataset.subset(sorted(picked))


def _uids(dataset):
    return [s.uid for s in dataset.samples]


@dataclass
class Workbench:
    """Shared artifacts for one experiment: datasets and backbones."""

    exp: object
    pretrain: Dataset
    pool_train: Dataset
    pool_test: Dataset
    backbones: dict = field(default_factory=dict)  # framework -> SegNet
    pretrain_results: dict = field(default_factory=dict)  # framework -> TrainResult
    backbone_reports: dict = field(default_factory=dict)  # framework -> MetricsReport

    def manifest(self):
        """Provenance facts for hygiene checks and reporting."""
        return {
            "task": self.exp.task.name,
            "num_classes": self.exp.num_classes,
            "pretrain_uids": _uids(self.pretrain),
            "pool_train_uids": _uids(self.pool_train),
            "pool_test_uids": _uids(self.pool_test),
            "backbones": {
                fw: {
                    "num_labels": bb.config.num_labels,
                    "feature_channels": bb.config.feature_channels,
                    "final_loss": self.pretrain_results[fw].final_loss,
                    "train_dice_fg": self.backbone_reports[fw].dice_foreground,
                }
                for fw, bb in sorted(self.backbones.items())
            },
        }


def make_datasets(exp):
    """Generate and preprocess the pretraining set and the task pools.

    Returns (pretrain, pool_train, pool_test). The task pool is split
    once: the test side is fixed for the whole experiment so every sweep
    cell is scored on identical data.
    """
    pre_seed, pool_seed, split_seed = (
        int(s) for s in np.random.SeedSequence(exp.data.seed).generate_state(3)
    )
    pretrain = generate_phantoms(exp.phantom, exp.data.pretrain_count, "plain", pre_seed, tag="pretrain")
    per_class = exp.data.pool_per_class + exp.data.test_per_class
    pool = generate_phantoms(
        exp.phantom,
        0,
        exp.task.name,
        pool_seed,
        class_counts=[per_class] * exp.num_classes,
        tag=f"pool-{exp.task.name}",
    )
    pretrain = apply_clahe(pretrain, exp.task.clahe_tiles, exp.task.clahe_clip)
    pool = apply_clahe(pool, exp.task.clahe_tiles, exp.task.clahe_clip)

    test = sample_per_class(pool, exp.data.test_per_class, np.random.default_rng(split_seed))
    test_uids = set(_uids(test))
    train = pool.subset([i for i, s in enumerate(pool.samples) if s.uid not in test_uids])
    return pretrain, train, test


def pretrain_backbone(exp, framework, pretrain_ds, log_every=0):
    """Train one segmentation backbone; returns (net, result, targets).

    ``targets`` is the dataset the net was actually fitted to (the
    anatomical labels for ``manual``, the k-means relabeling for
    ``threshold``); evaluating against it measures pretraining quality.
    """
    if framework not in PRETRAINED:
        raise ConfigError(f"framework {framework!r} has no pretraining stage")
    targets = pretrain_ds if framework == "manual" else cluster_relabel(pretrain_ds, exp.task.kmeans_k)
    cfg = nets.SegNetConfig(
        dim=exp.phantom.dim,
        num_labels=targets.num_labels,
        base_channels=exp.backbone.base_channels,
        right_leg_depth=exp.backbone.right_leg_depth,
        dropout_rate=exp.backbone.dropout_rate,
    )
    seed_ss = np.random.SeedSequence(exp.data.seed, spawn_key=(PRETRAINED.index(framework),))
    init_seed, train_seed = (int(s) for s in seed_ss.generate_state(2))
    net = nets.SegNet(cfg, seed=init_seed)
    train_cfg = replace(exp.backbone.train, seed=train_seed, log_every=log_every)
    result = trainer.fit_segmentation(net, targets, train_cfg)
    return net, result, targets


def prepare(exp, frameworks=None, log_every=0):
    """Workbench with datasets plus pretrained backbones for ``frameworks``."""
    frameworks = tuple(frameworks if frameworks is not None else exp.sweep.frameworks)
    for fw in frameworks:
        if fw not in FRAMEWORK_CHOICES:
            raise ConfigError(f"unknown framework {fw!r}; choose from {FRAMEWORK_CHOICES}")
    pretrain, pool_train, pool_test = make_datasets(exp)
    bench = Workbench(exp=exp, pretrain=pretrain, pool_train=pool_train, pool_test=pool_test)
    for fw in PRETRAINED:
        if fw in frameworks:
            net, result, targets = pretrain_backbone(exp, fw, pretrain, log_every=log_every)
            bench.backbones[fw] = net
            bench.pretrain_results[fw] = result
            bench.backbone_reports[fw] = trainer.evaluate_segmentation(net, targets)
    return bench


def _cell_seeds(seed, per_class, framework):
    """Derived (subset_seed, init_seed, train_seed) for one grid cell.

    The subset stream depends only on (seed, size), so the frameworks of
    one cell train on the same drawn subset; init/train streams also mix
    in the framework so the nets differ.
    """
    subset = int(np.random.SeedSequence(seed, spawn_key=(per_class, 0)).generate_state(1)[0])
    fw_index = FRAMEWORK_CHOICES.index(framework)
    init, train = (
        int(s)
        for s in np.random.SeedSequence(seed, spawn_key=(per_class, 1 + fw_index)).generate_state(2)
    )
    return subset, init, train


def run_cell(bench, framework, per_class, seed, keep_model=False):
    """Train and score one sweep cell; returns a plain-dict record.

    With ``keep_model`` the trained classifier rides along under the
    ``"_model"`` key (for checkpointing; strip it before serializing).
    """
    exp = bench.exp
    subset_seed, init_seed, train_seed = _cell_seeds(seed, per_class, framework)
    train_ds = sample_per_class(bench.pool_train, per_class, np.random.default_rng(subset_seed))
    cls_cfg = replace(exp.classifier.train, seed=train_seed)

    if framework in PRETRAINED:
        backbone = bench.backbones[framework]
        head_cfg = nets.HeadConfig(
            dim=exp.phantom.dim,
            in_channels=backbone.config.feature_channels,
            in_size=exp.phantom.size,
            num_classes=exp.num_classes,
            conv_channels=exp.classifier.conv_channels,
            fc_width=exp.classifier.fc_width,
            conv_pool_pairs=exp.classifier.conv_pool_pairs,
            dropout_rate=exp.classifier.dropout_rate,
        )
        head = nets.FeatureClassifier(head_cfg, seed=init_seed)
        result = trainer.fit_classifier(head, train_ds, cls_cfg, backbone=backbone)
        model = nets.ComposedClassifier(backbone, head)
    elif framework == "scratch":
        scratch_cfg = nets.ScratchConfig(
            dim=exp.phantom.dim,
            in_size=exp.phantom.size,
            num_classes=exp.num_classes,
            conv_channels=exp.classifier.scratch_channels,
            fc_width=exp.classifier.scratch_fc_width,
            batchnorm=exp.classifier.scratch_batchnorm,
            dropout_rate=exp.classifier.dropout_rate,
        )
        model = nets.VggStyleNet(scratch_cfg, seed=init_seed)
        result = trainer.fit_classifier(model, train_ds, cls_cfg)
    else:
        raise ConfigError(f"unknown framework {framework!r}; choose from {FRAMEWORK_CHOICES}")

    report = trainer.evaluate_classifier(model, bench.pool_test, batch_size=8)
    train_uids = _uids(train_ds)
    test_uids = _uids(bench.pool_test)
    if set(train_uids) & set(test_uids):
        raise ConfigError("train/test leak: a sample appears on both sides")
    record = {
        "framework": framework,
        "samples_per_class": per_class,
        "seed": seed,
        "final_loss": result.final_loss,
        "metrics": dict(report.metric_rows()),
        "train_uids": train_uids,
        "test_uids": test_uids,
    }
    if keep_model:
        head = model.head if isinstance(model, nets.ComposedClassifier) else model
        record["_model"] = head
    return record


def run_framework(exp, framework, per_class, seed, log_every=0):
    """One-shot convenience: prepare just what one cell needs, run it."""
    bench = prepare(exp, frameworks=(framework,), log_every=log_every)
    return run_cell(bench, framework, per_class, seed), bench
