"""Parameter-owning layers shared by the network definitions.

A layer holds its tensors and knows how to apply itself; wiring lives in
the network classes. ``tensors()`` exposes every persistent array (trainable
parameters as ``Tensor``, batchnorm running statistics as plain ndarrays)
under stable names for checkpointing.
"""

import numpy as np

from . import ops
from .initializers import conv_fans, dense_fans, glorot_uniform
from .tensor import Tensor

# 0.9 retention converges the running estimates within the few hundred
# optimizer steps a small training run takes; 0.99 leaves them far from
# the batch statistics and wrecks eval-mode predictions on short runs.
BN_MOMENTUM = 0.9
BN_EPS = 1e-5


class Conv:
    """3^d convolution with bias, stride 1, same padding."""

    def __init__(self, in_channels, out_channels, dim, rng, dtype=np.float32):
        shape = (out_channels, in_channels) + (3,) * dim
        self.weight = Tensor(glorot_uniform(shape, *conv_fans(shape), rng, dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True)

    def __call__(self, x):
        return ops.conv(x, self.weight, self.bias)

    def tensors(self):
        return {"weight": self.weight, "bias": self.bias}


class Conv1x:
    """1^d convolution: per-position channel mixing."""

    def __init__(self, in_channels, out_channels, rng, dtype=np.float32):
        shape = (out_channels, in_channels)
        self.weight = Tensor(glorot_uniform(shape, in_channels, out_channels, rng, dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True)

    def __call__(self, x):
        return ops.conv1x(x, self.weight, self.bias)

    def tensors(self):
        return {"weight": self.weight, "bias": self.bias}


class Dense:
    def __init__(self, in_features, out_features, rng, dtype=np.float32):
        shape = (out_features, in_features)
        self.weight = Tensor(glorot_uniform(shape, *dense_fans(shape), rng, dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(out_features, dtype=dtype), requires_grad=True)

    def __call__(self, x):
        return ops.dense(x, self.weight, self.bias)

    def tensors(self):
        return {"weight": self.weight, "bias": self.bias}


class BatchNorm:
    """Channel batchnorm; owns scale/shift and the running statistics."""

    def __init__(self, channels, dtype=np.float32):
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def __call__(self, x, train):
        return ops.batchnorm(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            train,
            momentum=BN_MOMENTUM,
            eps=BN_EPS,
        )

    def tensors(self):
        return {
            "gamma": self.gamma,
            "beta": self.beta,
            "running_mean": self.running_mean,
            "running_var": self.running_var,
        }


class ConvBNRelu:
    """conv -> batchnorm -> relu, the standard block in all three nets."""

    def __init__(self, in_channels, out_channels, dim, rng, dtype=np.float32):
        self.conv = Conv(in_channels, out_channels, dim, rng, dtype)
        self.bn = BatchNorm(out_channels, dtype)

    def __call__(self, x, train):
        return ops.relu(self.bn(self.conv(x), train))

    def tensors(self):
        out = {}
        for sub, layer in (("conv", self.conv), ("bn", self.bn)):
            for key, t in layer.tensors().items():
                out[f"{sub}.{key}"] = t
        return out


def collect_tensors(layer_map):
    """Flatten {layer_name: layer} into {qualified_name: tensor}."""
    out = {}
    for lname, layer in layer_map.items():
        for key, t in layer.tensors().items():
            out[f"{lname}.{key}"] = t
    return out
