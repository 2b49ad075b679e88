"""Forward-value oracles and basic behavior for the differentiable ops."""

import numpy as np
import pytest

from segclass import ops
from segclass.errors import ShapeError
from segclass.initializers import conv_fans, dense_fans, glorot_uniform
from segclass.optim import Adam
from segclass.tensor import Tensor


def t(a, grad=False):
    return Tensor(np.asarray(a), requires_grad=grad)


# -- conv ---------------------------------------------------------------


def test_conv_identity_kernel():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 1, 6, 6)).astype(np.float32)
    w = np.zeros((1, 1, 3, 3), dtype=np.float32)
    w[0, 0, 1, 1] = 1.0
    y = ops.conv(t(x), t(w))
    assert np.array_equal(y.data, x)


def test_conv_all_ones_kernel_hand_value():
    # 2x2 input, 3x3 ones kernel, zero padding: every window sees all four pixels
    x = t(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
    w = t(np.ones((1, 1, 3, 3)))
    y = ops.conv(x, w)
    assert np.array_equal(y.data[0, 0], np.full((2, 2), 10.0))


def test_conv_bias_broadcasts_per_channel():
    x = t(np.zeros((1, 2, 4, 4), dtype=np.float32))
    w = t(np.zeros((3, 2, 3, 3), dtype=np.float32))
    b = t(np.array([1.0, 2.0, 3.0], dtype=np.float32))
    y = ops.conv(x, w, b)
    for c, v in enumerate((1.0, 2.0, 3.0)):
        assert np.all(y.data[:, c] == v)


def test_conv_rejects_channel_mismatch():
    with pytest.raises(ShapeError):
        ops.conv(t(np.zeros((1, 2, 4, 4))), t(np.zeros((1, 3, 3, 3))))


def test_conv1x_equals_dense_at_each_pixel():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 4, 4))
    w = rng.standard_normal((5, 3))
    b = rng.standard_normal(5)
    y = ops.conv1x(t(x), t(w), t(b))
    for n in range(2):
        for i in range(4):
            for j in range(4):
                assert np.allclose(y.data[n, :, i, j], w @ x[n, :, i, j] + b, atol=1e-12)


# -- pooling and upsampling ---------------------------------------------


def test_maxpool_ramp_oracle():
    x = t(np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4))
    y = ops.maxpool(x)
    assert np.array_equal(y.data[0, 0], [[5.0, 7.0], [13.0, 15.0]])


def test_maxpool_3d_corner_oracle():
    x = t(np.arange(8, dtype=np.float32).reshape(1, 1, 2, 2, 2))
    y = ops.maxpool(x)
    assert y.data.shape == (1, 1, 1, 1, 1)
    assert y.data.item() == 7.0


def test_maxpool_rejects_odd_spatial():
    with pytest.raises(ShapeError):
        ops.maxpool(t(np.zeros((1, 1, 3, 4))))


def test_upsample_repeats_blocks():
    x = t(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
    y = ops.upsample(x)
    assert np.array_equal(
        y.data[0, 0],
        [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]],
    )


def test_maxpool_inverts_upsample():
    rng = np.random.default_rng(2)
    for dim in (2, 3):
        x = rng.standard_normal((2, 3) + (4,) * dim).astype(np.float32)
        y = ops.maxpool(ops.upsample(t(x)))
        assert np.array_equal(y.data, x)


# -- activations and regularizers ----------------------------------------


def test_relu_table():
    x = t(np.array([-2.0, -0.0, 0.5, 3.0]))
    assert np.array_equal(ops.relu(x).data, [0.0, 0.0, 0.5, 3.0])


def test_softmax_three_logit_oracle():
    y = ops.softmax(t(np.array([[1.0, 2.0, 3.0]])), axis=1)
    assert np.allclose(y.data[0], [0.09003057, 0.24472847, 0.66524096], atol=1e-5)


def test_softmax_rows_sum_to_one_and_shift_invariant():
    rng = np.random.default_rng(3)
    for _ in range(10):
        z = rng.standard_normal((4, 7)) * 10.0
        p = ops.softmax(t(z), axis=1).data
        q = ops.softmax(t(z + 123.0), axis=1).data
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert np.allclose(p, q, atol=1e-12)


def test_softmax_channel_axis_on_maps():
    rng = np.random.default_rng(4)
    z = rng.standard_normal((2, 3, 4, 4))
    p = ops.softmax(t(z), axis=1).data
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_dropout_eval_is_identity():
    x = t(np.ones((2, 8)))
    y = ops.dropout(x, 0.5, train=False)
    assert y is x


def test_dropout_train_scales_survivors():
    rng = np.random.default_rng(5)
    x = np.ones((1, 10000), dtype=np.float64)
    y = ops.dropout(t(x), 0.25, train=True, rng=rng).data
    vals = set(np.unique(y).tolist())
    assert vals <= {0.0, 1.0 / 0.75}
    # survivor fraction concentrates around 1 - rate
    assert abs((y > 0).mean() - 0.75) < 0.02


def test_dropout_mc_mean_is_unbiased():
    rng = np.random.default_rng(6)
    x = np.full((1, 2000), 3.0)
    acc = np.zeros_like(x)
    for _ in range(200):
        acc += ops.dropout(t(x), 0.5, train=True, rng=rng).data
    assert abs(acc.mean() / 200 - 3.0) < 0.05


def test_batchnorm_normalizes_in_train_mode():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((8, 3, 6, 6)) * 4.0 + 2.0
    gamma = t(np.ones(3), grad=True)
    beta = t(np.zeros(3), grad=True)
    rm, rv = np.zeros(3), np.ones(3)
    y = ops.batchnorm(t(x), gamma, beta, rm, rv, train=True).data
    for c in range(3):
        assert abs(y[:, c].mean()) < 1e-10
        assert abs(y[:, c].var() - 1.0) < 1e-3  # eps shifts it slightly


def test_batchnorm_running_stats_update():
    x = np.zeros((4, 1, 2, 2))
    x[0] = 4.0  # batch mean 1.0, biased var 3.0
    rm, rv = np.zeros(1), np.ones(1)
    ops.batchnorm(t(x), t(np.ones(1)), t(np.zeros(1)), rm, rv, train=True, momentum=0.9)
    assert np.allclose(rm, [0.1 * 1.0], atol=1e-12)
    assert np.allclose(rv, [0.9 * 1.0 + 0.1 * 3.0], atol=1e-12)


def test_batchnorm_eval_uses_running_stats():
    x = np.full((2, 1, 2, 2), 5.0)
    rm, rv = np.array([3.0]), np.array([4.0])
    y = ops.batchnorm(t(x), t(np.ones(1)), t(np.zeros(1)), rm, rv, train=False).data
    assert np.allclose(y, (5.0 - 3.0) / np.sqrt(4.0 + 1e-5), atol=1e-9)
    assert rm[0] == 3.0 and rv[0] == 4.0  # untouched in eval


# -- shape plumbing ------------------------------------------------------


def test_concat_along_channels():
    a = np.ones((1, 2, 4, 4))
    b = np.zeros((1, 3, 4, 4))
    y = ops.concat([t(a), t(b)])
    assert y.shape == (1, 5, 4, 4)
    assert np.all(y.data[:, :2] == 1.0) and np.all(y.data[:, 2:] == 0.0)


def test_concat_rejects_spatial_mismatch():
    with pytest.raises(ShapeError):
        ops.concat([t(np.zeros((1, 1, 4, 4))), t(np.zeros((1, 1, 2, 2)))])


def test_residual_add_requires_same_shape():
    a = t(np.ones((1, 2, 4, 4)))
    assert np.all(ops.residual_add(a, a).data == 2.0)
    with pytest.raises(ShapeError):
        ops.residual_add(a, t(np.ones((1, 3, 4, 4))))


def test_flatten_keeps_batch_dim():
    x = t(np.arange(24.0).reshape(2, 3, 2, 2))
    y = ops.flatten(x)
    assert y.shape == (2, 12)
    assert np.array_equal(y.data[0], np.arange(12.0))


def test_dense_hand_value():
    x = t(np.array([[1.0, 2.0]]))
    w = t(np.array([[3.0, 4.0], [5.0, 6.0]]))  # (out, in)
    b = t(np.array([0.5, -0.5]))
    y = ops.dense(x, w, b)
    assert np.allclose(y.data, [[11.5, 16.5]], atol=1e-12)


# -- optimizer and init ---------------------------------------------------


def test_adam_minimizes_quadratic_bowl():
    theta = Tensor(np.array([1.0]), requires_grad=True)
    opt = Adam([theta], lr=0.1)
    for _ in range(500):
        opt.zero_grad()
        (theta * theta).sum().backward()
        opt.step()
    assert abs(theta.data[0]) < 1e-3


def test_adam_first_step_size_is_lr():
    # bias correction makes the very first update lr * sign(grad)
    theta = Tensor(np.array([10.0]), requires_grad=True)
    opt = Adam([theta], lr=0.05)
    opt.zero_grad()
    (theta * 3.0).sum().backward()
    opt.step()
    assert abs(theta.data[0] - (10.0 - 0.05)) < 1e-6


def test_adam_skips_params_without_grad():
    a = Tensor(np.array([1.0]), requires_grad=True)
    b = Tensor(np.array([2.0]), requires_grad=True)
    opt = Adam([a, b], lr=0.1)
    (a * a).sum().backward()
    opt.step()
    assert b.data[0] == 2.0 and a.data[0] != 1.0


def test_adam_rejects_negative_lr():
    with pytest.raises(ValueError):
        Adam([], lr=-1.0)


def test_glorot_bound_and_variance():
    rng = np.random.default_rng(8)
    fan_in, fan_out = 30, 50
    w = glorot_uniform((100, 100), fan_in, fan_out, rng, dtype=np.float64)
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    assert np.abs(w).max() <= bound
    # uniform on [-b, b] has variance b^2 / 3 = 2 / (fan_in + fan_out)
    assert abs(w.var() - 2.0 / (fan_in + fan_out)) < 0.003


def test_fan_helpers():
    assert conv_fans((8, 4, 3, 3)) == (36, 72)
    assert conv_fans((8, 4, 3, 3, 3)) == (108, 216)
    assert dense_fans((10, 20)) == (20, 10)
