"""The three network architectures.

``SegNet`` is an encoder/decoder segmentation network with three extras on
top of the usual U shape: a left leg that pools the first conv layer's
feature maps and feeds them to every encoder stage, residual skips inside
each cascaded conv pair, and a right leg that upsamples the deeper decoder
outputs back to full resolution and concatenates them with the final
decoder output. That concatenation is the feature stack handed to
downstream classifiers; with four deep taps its width is 31x the base
channel count, with two taps (the 3-d default) it is 7x.

``FeatureClassifier`` is the small conv/FC head trained on those frozen
feature stacks. ``VggStyleNet`` is the from-scratch baseline: five conv
blocks of (2,2,3,3,3) layers with channel multipliers (1,2,4,8,8) followed
by three FC layers; with 64 base channels, a 4096-wide FC stage and
batchnorm disabled its layer plan is exactly VGG-16.

All constructors take ``(config, seed, dtype)`` and build identical
parameters for identical seeds. Forward passes take ``train`` and, when
dropout is active, an ``rng``.
"""

from dataclasses import asdict, dataclass

import numpy as np

from . import ops
from .errors import ConfigError, ShapeError
from .layers import BatchNorm, Conv, Conv1x, ConvBNRelu, Dense, collect_tensors
from .tensor import Tensor, no_grad

ENCODER_STAGES = 4
SCRATCH_BLOCKS = (2, 2, 3, 3, 3)
SCRATCH_MULTIPLIERS = (1, 2, 4, 8, 8)


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


@dataclass(frozen=True)
class SegNetConfig:
    """Segmentation backbone shape.

    ``right_leg_depth`` is the number of deep decoder outputs (counting the
    bottleneck) recombined at full resolution; ``None`` resolves to 4 in 2-d
    and 2 in 3-d. Feature width is ``(2**(depth+1) - 1) * base_channels``.
    """

    dim: int
    num_labels: int
    base_channels: int = 16
    in_channels: int = 1
    right_leg_depth: int | None = None
    dropout_rate: float = 0.5

    def __post_init__(self):
        _require(self.dim in (2, 3), f"dim must be 2 or 3, got {self.dim}")
        _require(self.num_labels >= 2, f"num_labels must be >= 2, got {self.num_labels}")
        _require(self.base_channels >= 1, f"base_channels must be >= 1, got {self.base_channels}")
        _require(self.in_channels >= 1, f"in_channels must be >= 1, got {self.in_channels}")
        if self.right_leg_depth is None:
            object.__setattr__(self, "right_leg_depth", 4 if self.dim == 2 else 2)
        _require(
            0 <= self.right_leg_depth <= ENCODER_STAGES,
            f"right_leg_depth must be in [0, {ENCODER_STAGES}], got {self.right_leg_depth}",
        )
        _require(0.0 <= self.dropout_rate < 1.0, f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def feature_channels(self):
        return (2 ** (self.right_leg_depth + 1) - 1) * self.base_channels


class SegNet:
    """Encoder/decoder segmentation network with left and right legs."""

    def __init__(self, config, seed=0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        b = config.base_channels
        dim = config.dim
        widths = [b * 2**i for i in range(ENCODER_STAGES + 1)]
        layers = {}
        layers["enc0.a"] = ConvBNRelu(config.in_channels, b, dim, rng, dtype)
        layers["enc0.b"] = ConvBNRelu(b, b, dim, rng, dtype)
        for i in range(1, ENCODER_STAGES):
            layers[f"enc{i}.a"] = ConvBNRelu(widths[i - 1] + b, widths[i], dim, rng, dtype)
            layers[f"enc{i}.b"] = ConvBNRelu(widths[i], widths[i], dim, rng, dtype)
        layers["bottleneck.a"] = ConvBNRelu(widths[3] + b, widths[4], dim, rng, dtype)
        layers["bottleneck.b"] = ConvBNRelu(widths[4], widths[4], dim, rng, dtype)
        for j in reversed(range(ENCODER_STAGES)):
            layers[f"dec{j}.a"] = ConvBNRelu(3 * widths[j], widths[j], dim, rng, dtype)
            layers[f"dec{j}.b"] = ConvBNRelu(widths[j], widths[j], dim, rng, dtype)
        layers["final"] = Conv1x(config.feature_channels, config.num_labels, rng, dtype)
        self._layers = layers

    def _check_input(self, x):
        cfg = self.config
        if x.data.ndim != cfg.dim + 2 or x.shape[1] != cfg.in_channels:
            raise ShapeError(
                f"expected (batch, {cfg.in_channels}, {'x'.join(['S'] * cfg.dim)}) input, got {x.shape}"
            )
        stride = 2**ENCODER_STAGES
        if any(n % stride or n < stride for n in x.shape[2:]):
            raise ShapeError(f"spatial dims must be multiples of {stride}, got {x.shape}")

    def forward(self, x, train=False, rng=None, return_features=False):
        """Per-pixel label probabilities (batch, num_labels, *spatial).

        With ``return_features`` the pre-classifier feature stack is
        returned instead (batch, feature_channels, *spatial).
        """
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        self._check_input(x)
        lay = self._layers
        cfg = self.config

        a0 = lay["enc0.a"](x, train)
        e = ops.residual_add(lay["enc0.b"](a0, train), a0)
        skips = [e]
        left = a0
        for i in range(1, ENCODER_STAGES):
            left = ops.maxpool(left)
            a = lay[f"enc{i}.a"](ops.concat([ops.maxpool(e), left]), train)
            e = ops.residual_add(lay[f"enc{i}.b"](a, train), a)
            skips.append(e)
        left = ops.maxpool(left)
        h = ops.dropout(ops.maxpool(e), cfg.dropout_rate, train, rng)
        a = lay["bottleneck.a"](ops.concat([h, left]), train)
        d = ops.residual_add(lay["bottleneck.b"](a, train), a)

        deep = [d]  # bottleneck, then decoder outputs from deep to shallow
        for j in reversed(range(ENCODER_STAGES)):
            a = lay[f"dec{j}.a"](ops.concat([ops.upsample(d), skips[j]]), train)
            d = ops.residual_add(lay[f"dec{j}.b"](a, train), a)
            deep.append(d)
        full = deep.pop()  # full-resolution decoder output

        taps = deep[len(deep) - cfg.right_leg_depth :] if cfg.right_leg_depth else []
        if taps:
            r = taps[0]
            for t in taps[1:]:
                r = ops.concat([ops.upsample(r), t])
            features = ops.concat([ops.upsample(r), full])
        else:
            features = full
        if return_features:
            return features
        return ops.softmax(lay["final"](features), axis=1)

    def features(self, images):
        """Frozen-feature extraction: eval mode, no graph recorded."""
        with no_grad():
            return self.forward(images, train=False, return_features=True).data

    def predict(self, images, batch_size=8):
        """Eval-mode label probabilities for a stack of images."""
        return _predict(self, images, batch_size)

    def named_tensors(self):
        return collect_tensors(self._layers)

    def parameters(self):
        return [t for t in self.named_tensors().values() if isinstance(t, Tensor)]


@dataclass(frozen=True)
class HeadConfig:
    """Conv/FC classifier head applied to backbone feature stacks."""

    dim: int
    in_channels: int
    in_size: int
    num_classes: int
    conv_channels: int = 16
    fc_width: int = 100
    conv_pool_pairs: int = 3
    dropout_rate: float = 0.5

    def __post_init__(self):
        _require(self.dim in (2, 3), f"dim must be 2 or 3, got {self.dim}")
        _require(self.num_classes >= 2, f"num_classes must be >= 2, got {self.num_classes}")
        _require(self.conv_pool_pairs >= 1, f"conv_pool_pairs must be >= 1, got {self.conv_pool_pairs}")
        _require(self.conv_channels >= 1, f"conv_channels must be >= 1, got {self.conv_channels}")
        _require(self.fc_width >= 1, f"fc_width must be >= 1, got {self.fc_width}")
        pools = 2 ** (self.conv_pool_pairs + 1)
        _require(
            self.in_size % pools == 0 and self.in_size >= 2 * pools,
            f"in_size must be a multiple of 2**(pairs+1)={pools} and at least {2 * pools}, got {self.in_size}",
        )

    @property
    def flat_features(self):
        side = self.in_size // 2 ** (self.conv_pool_pairs + 1)
        return self.conv_channels * side**self.dim


class FeatureClassifier:
    """Leading pool, then conv/pool pairs, then a three-layer FC stack."""

    def __init__(self, config, seed=0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        layers = {}
        cin = config.in_channels
        for k in range(config.conv_pool_pairs):
            layers[f"pair{k}"] = ConvBNRelu(cin, config.conv_channels, config.dim, rng, dtype)
            cin = config.conv_channels
        layers["fc1"] = Dense(config.flat_features, config.fc_width, rng, dtype)
        layers["fc1_bn"] = BatchNorm(config.fc_width, dtype)
        layers["fc2"] = Dense(config.fc_width, config.fc_width, rng, dtype)
        layers["fc2_bn"] = BatchNorm(config.fc_width, dtype)
        layers["out"] = Dense(config.fc_width, config.num_classes, rng, dtype)
        self._layers = layers

    def forward(self, x, train=False, rng=None):
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        cfg = self.config
        expected = (cfg.in_channels,) + (cfg.in_size,) * cfg.dim
        if x.shape[1:] != expected:
            raise ShapeError(f"expected input (batch, {expected}), got {x.shape}")
        lay = self._layers
        h = ops.maxpool(x)
        for k in range(cfg.conv_pool_pairs):
            h = ops.maxpool(lay[f"pair{k}"](h, train))
        h = ops.flatten(h)
        h = ops.dropout(ops.relu(lay["fc1_bn"](lay["fc1"](h), train)), cfg.dropout_rate, train, rng)
        h = ops.dropout(ops.relu(lay["fc2_bn"](lay["fc2"](h), train)), cfg.dropout_rate, train, rng)
        return ops.softmax(lay["out"](h), axis=1)

    def predict(self, images, batch_size=32):
        return _predict(self, images, batch_size)

    def named_tensors(self):
        return collect_tensors(self._layers)

    def parameters(self):
        return [t for t in self.named_tensors().values() if isinstance(t, Tensor)]


@dataclass(frozen=True)
class ScratchConfig:
    """From-scratch classifier: five conv blocks then three FC layers."""

    dim: int
    in_size: int
    num_classes: int
    in_channels: int = 1
    conv_channels: int = 16
    fc_width: int = 100
    batchnorm: bool = True
    dropout_rate: float = 0.5

    def __post_init__(self):
        _require(self.dim in (2, 3), f"dim must be 2 or 3, got {self.dim}")
        _require(self.num_classes >= 2, f"num_classes must be >= 2, got {self.num_classes}")
        _require(self.conv_channels >= 1, f"conv_channels must be >= 1, got {self.conv_channels}")
        _require(self.fc_width >= 1, f"fc_width must be >= 1, got {self.fc_width}")
        stride = 2 ** len(SCRATCH_BLOCKS)
        _require(
            self.in_size % stride == 0 and self.in_size >= stride,
            f"in_size must be a multiple of 2**{len(SCRATCH_BLOCKS)}={stride}, got {self.in_size}",
        )

    @property
    def block_channels(self):
        return tuple(self.conv_channels * m for m in SCRATCH_MULTIPLIERS)

    @property
    def flat_features(self):
        side = self.in_size // 2 ** len(SCRATCH_BLOCKS)
        return self.block_channels[-1] * side**self.dim


class VggStyleNet:
    def __init__(self, config, seed=0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        layers = {}
        cin = config.in_channels
        for bi, (count, cout) in enumerate(zip(SCRATCH_BLOCKS, config.block_channels)):
            for k in range(count):
                layers[f"block{bi}.conv{k}"] = Conv(cin, cout, config.dim, rng, self.dtype)
                if config.batchnorm:
                    layers[f"block{bi}.bn{k}"] = BatchNorm(cout, self.dtype)
                cin = cout
        layers["fc1"] = Dense(config.flat_features, config.fc_width, rng, self.dtype)
        layers["fc2"] = Dense(config.fc_width, config.fc_width, rng, self.dtype)
        if config.batchnorm:
            layers["fc1_bn"] = BatchNorm(config.fc_width, self.dtype)
            layers["fc2_bn"] = BatchNorm(config.fc_width, self.dtype)
        layers["out"] = Dense(config.fc_width, config.num_classes, rng, self.dtype)
        self._layers = layers

    def forward(self, x, train=False, rng=None):
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        cfg = self.config
        expected = (cfg.in_channels,) + (cfg.in_size,) * cfg.dim
        if x.shape[1:] != expected:
            raise ShapeError(f"expected input (batch, {expected}), got {x.shape}")
        lay = self._layers
        h = x
        for bi, count in enumerate(SCRATCH_BLOCKS):
            for k in range(count):
                h = lay[f"block{bi}.conv{k}"](h)
                if cfg.batchnorm:
                    h = lay[f"block{bi}.bn{k}"](h, train)
                h = ops.relu(h)
            h = ops.maxpool(h)
        h = ops.flatten(h)
        for name in ("fc1", "fc2"):
            h = lay[name](h)
            if cfg.batchnorm:
                h = lay[f"{name}_bn"](h, train)
            h = ops.dropout(ops.relu(h), cfg.dropout_rate, train, rng)
        return ops.softmax(lay["out"](h), axis=1)

    def layer_plan(self):
        """Structural description: [('conv', cin, cout) | ('bn', c) | ('pool',) | ('fc', fin, fout) ...]."""
        cfg = self.config
        plan = []
        cin = cfg.in_channels
        for count, cout in zip(SCRATCH_BLOCKS, cfg.block_channels):
            for _ in range(count):
                plan.append(("conv", cin, cout))
                if cfg.batchnorm:
                    plan.append(("bn", cout))
                plan.append(("relu",))
                cin = cout
            plan.append(("pool",))
        fin = cfg.flat_features
        for width in (cfg.fc_width, cfg.fc_width):
            plan.append(("fc", fin, width))
            if cfg.batchnorm:
                plan.append(("bn", width))
            plan.append(("relu",))
            plan.append(("dropout",))
            fin = width
        plan.append(("fc", fin, cfg.num_classes))
        plan.append(("softmax", cfg.num_classes))
        return plan

    def predict(self, images, batch_size=32):
        return _predict(self, images, batch_size)

    def named_tensors(self):
        return collect_tensors(self._layers)

    def parameters(self):
        return [t for t in self.named_tensors().values() if isinstance(t, Tensor)]


class ComposedClassifier:
    """Frozen backbone feature extraction piped into a classifier head."""

    def __init__(self, backbone, head):
        self.backbone = backbone
        self.head = head

    def predict(self, images, batch_size=8):
        outs = []
        for start in range(0, images.shape[0], batch_size):
            feats = self.backbone.features(images[start : start + batch_size])
            outs.append(self.head.predict(feats, batch_size=batch_size))
        return np.concatenate(outs, axis=0)


def _predict(net, images, batch_size):
    images = np.asarray(images, dtype=net.dtype)
    outs = []
    with no_grad():
        for start in range(0, images.shape[0], batch_size):
            outs.append(net.forward(images[start : start + batch_size]).data)
    return np.concatenate(outs, axis=0)


def count_params(net):
    """Number of trainable parameter values (running statistics excluded)."""
    return int(sum(t.data.size for t in net.parameters()))


def freeze(net, frozen=True):
    """Toggle gradient tracking for every parameter of ``net``."""
    for t in net.parameters():
        t.requires_grad = not frozen
    return net


def config_dict(config):
    """Dataclass config as a flat plain dict (for checkpoint echoes)."""
    return asdict(config)


NET_KINDS = {
    "segnet": (SegNetConfig, SegNet),
    "head": (HeadConfig, FeatureClassifier),
    "scratch": (ScratchConfig, VggStyleNet),
}


def net_kind(net):
    for kind, (_, cls) in NET_KINDS.items():
        if isinstance(net, cls):
            return kind
    raise TypeError(f"unknown network type {type(net)!r}")


def build_net(kind, config_fields, seed=0, dtype=np.float32):
    """Construct a network of ``kind`` from a plain config-field dict."""
    if kind not in NET_KINDS:
        raise ConfigError(f"unknown network kind {kind!r}")
    cfg_cls, net_cls = NET_KINDS[kind]
    return net_cls(cfg_cls(**config_fields), seed=seed, dtype=dtype)


__all__ = [
    "SegNetConfig",
    "SegNet",
    "HeadConfig",
    "FeatureClassifier",
    "ScratchConfig",
    "VggStyleNet",
    "ComposedClassifier",
    "count_params",
    "freeze",
    "config_dict",
    "build_net",
    "net_kind",
]
