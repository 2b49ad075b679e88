"""Parameter initialization."""

import numpy as np


def glorot_uniform(shape, fan_in, fan_out, rng, dtype=np.float32):
    """Uniform samples on [-b, b] with b = sqrt(6 / (fan_in + fan_out))."""
    if fan_in <= 0 or fan_out <= 0:
        raise ValueError(f"fans must be positive, got {fan_in} and {fan_out}")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def conv_fans(weight_shape):
    """(fan_in, fan_out) of a conv weight (out, in, *kernel)."""
    receptive = int(np.prod(weight_shape[2:])) if len(weight_shape) > 2 else 1
    return weight_shape[1] * receptive, weight_shape[0] * receptive


def dense_fans(weight_shape):
    """(fan_in, fan_out) of a dense weight (out, in)."""
    return weight_shape[1], weight_shape[0]
