"""Experiment configuration: INI files to typed config objects.

One INI file describes a full experiment: the phantom geometry, the
classification task and its preprocessing, dataset sizes and seeds, the
segmentation backbone and its training recipe, the classifier head and
scratch baseline, and the sweep grid. Every key has a default, so a
minimal file only names what it changes. Unknown sections or keys are
rejected so typos fail loudly instead of silently using defaults.

Example::

    [phantom]
    size = 64
    levels = 9

    [task]
    name = level

    [sweep]
    frameworks = manual, scratch
    sizes = 2, 4
    seeds = 0, 1, 2, 3, 4
"""

import configparser
from dataclasses import dataclass, replace

from .augment import AugmentPolicy
from .errors import ConfigError
from .phantoms import ANOMALY_CLASSES, TASKS, PhantomConfig
from .trainer import PRESETS, TrainConfig

TASK_CHOICES = tuple(t for t in TASKS if t != "plain")
FRAMEWORK_CHOICES = ("manual", "threshold", "scratch")


@dataclass(frozen=True)
class TaskSpec:
    name: str = "level"
    clahe_tiles: int = 8  # 0 disables equalization
    clahe_clip: float = 2.0
    kmeans_k: int = 5

    def __post_init__(self):
        if self.name not in TASK_CHOICES:
            raise ConfigError(f"task name must be one of {TASK_CHOICES}, got {self.name!r}")
        if self.clahe_tiles < 0:
            raise ConfigError(f"clahe_tiles must be >= 0, got {self.clahe_tiles}")
        if self.kmeans_k < 2:
            raise ConfigError(f"kmeans_k must be >= 2, got {self.kmeans_k}")


@dataclass(frozen=True)
class DataSpec:
    pretrain_count: int = 24
    pool_per_class: int = 8  # training-side pool; sweep sizes draw from it
    test_per_class: int = 8
    seed: int = 1000

    def __post_init__(self):
        for name in ("pretrain_count", "pool_per_class", "test_per_class"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")


@dataclass(frozen=True)
class BackboneSpec:
    base_channels: int = 16
    right_leg_depth: int | None = None
    dropout_rate: float = 0.5
    train: TrainConfig = None

    def __post_init__(self):
        if self.base_channels < 1:
            raise ConfigError(f"base_channels must be >= 1, got {self.base_channels}")


@dataclass(frozen=True)
class ClassifierSpec:
    conv_channels: int = 16
    fc_width: int = 100
    conv_pool_pairs: int = 3
    dropout_rate: float = 0.5
    train: TrainConfig = None
    scratch_channels: int = 16
    scratch_fc_width: int = 100
    scratch_batchnorm: bool = True


@dataclass(frozen=True)
class SweepSpec:
    frameworks: tuple = FRAMEWORK_CHOICES
    sizes: tuple = (2, 4)
    seeds: tuple = (0, 1, 2, 3, 4)

    def __post_init__(self):
        for fw in self.frameworks:
            if fw not in FRAMEWORK_CHOICES:
                raise ConfigError(f"unknown framework {fw!r}; choose from {FRAMEWORK_CHOICES}")
        if not self.frameworks or not self.sizes or not self.seeds:
            raise ConfigError("sweep needs at least one framework, one size, and one seed")
        if len(set(self.seeds)) != len(self.seeds) or len(set(self.sizes)) != len(self.sizes):
            raise ConfigError("sweep sizes and seeds must not repeat")
        if any(s < 1 for s in self.sizes):
            raise ConfigError(f"sweep sizes must be >= 1, got {self.sizes}")


@dataclass(frozen=True)
class ExperimentConfig:
    phantom: PhantomConfig
    task: TaskSpec
    data: DataSpec
    backbone: BackboneSpec
    classifier: ClassifierSpec
    sweep: SweepSpec

    @property
    def num_classes(self):
        return self.phantom.levels if self.task.name == "level" else ANOMALY_CLASSES


def _train_config(prefix, dim, section):
    """Resolve a training preset plus per-key overrides from one section.

    Segmentation pretraining defaults to augmentation on; classifier
    training defaults to off (which also enables one-time feature
    extraction for frozen backbones). An explicit ``augment`` key wins.
    """
    default_preset = f"{prefix}{dim}d"
    name = section.pop("preset", default_preset)
    if name not in PRESETS:
        raise ConfigError(f"unknown training preset {name!r}; choose from {sorted(PRESETS)}")
    cfg = PRESETS[name]
    overrides = {}
    if prefix == "seg" and "augment" not in section:
        overrides["augment"] = AugmentPolicy()
    for key in ("epochs", "batch_size"):
        if key in section:
            overrides[key] = int(section.pop(key))
    if "learning_rate" in section:
        overrides["learning_rate"] = float(section.pop("learning_rate"))
    if "log_every" in section:
        overrides["log_every"] = int(section.pop("log_every"))
    if "augment" in section:
        overrides["augment"] = AugmentPolicy() if _parse_bool(section.pop("augment")) else None
    return replace(cfg, **overrides) if overrides else cfg


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_int_list(text):
    return tuple(int(part) for part in text.split(",") if part.strip())


def _parse_str_list(text):
    return tuple(part.strip() for part in text.split(",") if part.strip())


_PHANTOM_KEYS = {
    "dim": int,
    "size": int,
    "num_structures": int,
    "levels": int,
    "noise_sigma": float,
    "background": float,
    "intensity_base": float,
    "intensity_step": float,
    "layout_seed": int,
}
_TASK_KEYS = {"name": str, "clahe_tiles": int, "clahe_clip": float, "kmeans_k": int}
_DATA_KEYS = {"pretrain_count": int, "pool_per_class": int, "test_per_class": int, "seed": int}
_BACKBONE_KEYS = {"base_channels": int, "right_leg_depth": int, "dropout_rate": float}
_CLASSIFIER_KEYS = {
    "conv_channels": int,
    "fc_width": int,
    "conv_pool_pairs": int,
    "dropout_rate": float,
    "scratch_channels": int,
    "scratch_fc_width": int,
    "scratch_batchnorm": _parse_bool,
}
_SWEEP_KEYS = {"frameworks": _parse_str_list, "sizes": _parse_int_list, "seeds": _parse_int_list}
_TRAIN_KEYS = ("preset", "epochs", "batch_size", "learning_rate", "augment", "log_every")

_SECTIONS = {
    "phantom": (_PHANTOM_KEYS, False),
    "task": (_TASK_KEYS, False),
    "data": (_DATA_KEYS, False),
    "backbone": (_BACKBONE_KEYS, True),
    "classifier": (_CLASSIFIER_KEYS, True),
    "sweep": (_SWEEP_KEYS, False),
}


def parse_experiment(text, source="<string>"):
    """Build an ExperimentConfig from INI text; every key is optional."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {source}: {exc}") from exc

    sections = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}] in {source}; known: {sorted(_SECTIONS)}")
        sections[section] = dict(parser.items(section))

    def take(section_name):
        keys, has_train = _SECTIONS[section_name]
        raw = sections.get(section_name, {})
        values = {}
        for key, conv in keys.items():
            if key in raw:
                try:
                    values[key] = conv(raw.pop(key))
                except ConfigError:
                    raise
                except ValueError as exc:
                    raise ConfigError(f"bad value for {section_name}.{key}: {exc}") from exc
        leftovers = {k: v for k, v in raw.items() if not (has_train and k in _TRAIN_KEYS)}
        if leftovers:
            raise ConfigError(
                f"unknown key(s) {sorted(leftovers)} in section [{section_name}] of {source}"
            )
        train_raw = {k: raw[k] for k in _TRAIN_KEYS if k in raw} if has_train else None
        return values, train_raw

    phantom_kw, _ = take("phantom")
    phantom = PhantomConfig(**phantom_kw)
    task_kw, _ = take("task")
    task = TaskSpec(**task_kw)
    data_kw, _ = take("data")
    data = DataSpec(**data_kw)
    backbone_kw, backbone_train = take("backbone")
    backbone = BackboneSpec(train=_train_config("seg", phantom.dim, dict(backbone_train)), **backbone_kw)
    classifier_kw, classifier_train = take("classifier")
    classifier = ClassifierSpec(
        train=_train_config("cls", phantom.dim, dict(classifier_train)), **classifier_kw
    )
    sweep_kw, _ = take("sweep")
    sweep = SweepSpec(**sweep_kw)

    exp = ExperimentConfig(
        phantom=phantom, task=task, data=data, backbone=backbone, classifier=classifier, sweep=sweep
    )
    _validate(exp)
    return exp


def load_experiment(path):
    """Parse the INI file at ``path`` into an ExperimentConfig."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_experiment(text, source=str(path))


def default_experiment(dim=2, task="level", **phantom_overrides):
    """Programmatic equivalent of an empty INI file (plus phantom tweaks)."""
    phantom = PhantomConfig(dim=dim, **phantom_overrides)
    exp = ExperimentConfig(
        phantom=phantom,
        task=TaskSpec(name=task),
        data=DataSpec(),
        backbone=BackboneSpec(train=replace(PRESETS[f"seg{dim}d"], augment=AugmentPolicy())),
        classifier=ClassifierSpec(train=PRESETS[f"cls{dim}d"]),
        sweep=SweepSpec(),
    )
    _validate(exp)
    return exp


def _validate(exp):
    if exp.task.name == "level" and exp.phantom.dim != 2:
        raise ConfigError("the level task requires dim = 2")
    if exp.task.clahe_tiles and exp.phantom.size % exp.task.clahe_tiles:
        raise ConfigError(
            f"clahe_tiles={exp.task.clahe_tiles} must divide the phantom size {exp.phantom.size}"
        )
    if max(exp.sweep.sizes) > exp.data.pool_per_class:
        raise ConfigError(
            f"largest sweep size {max(exp.sweep.sizes)} exceeds pool_per_class={exp.data.pool_per_class}"
        )
    pools = 2 ** (exp.classifier.conv_pool_pairs + 1)
    if exp.phantom.size % pools or exp.phantom.size < 2 * pools:
        raise ConfigError(
            f"phantom size {exp.phantom.size} cannot feed a head with "
            f"{exp.classifier.conv_pool_pairs} conv/pool pairs (needs a multiple of {pools})"
        )
    if "scratch" in exp.sweep.frameworks and exp.phantom.size % 32:
        raise ConfigError(
            f"the scratch net pools five times and needs the size to be a multiple of 32, got {exp.phantom.size}"
        )
