import numpy as np
import pytest

from conftest import naive_conv
from iianet import nn
from iianet.errors import ConfigError, ContractError, DimensionError
from iianet.nn import Conv2dSpec, batch_norm, channel_sizes, channel_split, conv2d
from iianet.tensor import Tensor, make_rng


def random_case(r, depthwise=False, dilated=False):
    b = int(r.integers(1, 3))
    groups = 1
    if depthwise:
        cin = cout = groups = int(r.integers(1, 5))
    else:
        groups = int(r.choice([1, 2]))
        cin = groups * int(r.integers(1, 3))
        cout = groups * int(r.integers(1, 3))
    k = int(r.choice([1, 3]))
    d = int(r.integers(2, 4)) if dilated else 1
    stride = int(r.integers(1, 3))
    pad = int(r.integers(0, d + 1))
    size = int(r.integers(d * (k - 1) + 1, 9))
    spec = Conv2dSpec(cin, cout, k, stride, pad, d, groups)
    x = r.standard_normal((b, cin, size, size + 1))
    w = r.standard_normal(spec.weight_shape)
    bias = r.standard_normal(cout)
    return spec, x, w, bias


def run(spec, x, w, bias, fn=conv2d):
    return fn(Tensor(x), spec, Tensor(w), Tensor(bias)).data


def oracle(spec, x, w, bias):
    return naive_conv(x, w, spec.stride, spec.padding, spec.dilation, spec.groups, bias)


@pytest.mark.parametrize("seed", range(20))
def test_conv2d_vs_loop(seed):
    spec, x, w, b = random_case(make_rng(seed))
    assert np.abs(run(spec, x, w, b) - oracle(spec, x, w, b)).max() <= 1e-12


@pytest.mark.parametrize("seed", range(20))
def test_depthwise_vs_loop(seed):
    spec, x, w, b = random_case(make_rng(100 + seed), depthwise=True)
    assert np.abs(run(spec, x, w, b, nn.depthwise_conv) - oracle(spec, x, w, b)).max() <= 1e-12


@pytest.mark.parametrize("seed", range(20))
def test_dilated_vs_loop(seed):
    spec, x, w, b = random_case(make_rng(200 + seed), dilated=True)
    assert np.abs(run(spec, x, w, b, nn.dilated_conv) - oracle(spec, x, w, b)).max() <= 1e-12


def test_stride2_example(rng):
    spec = Conv2dSpec(4, 5, 3, 2, 1)
    x, w = rng.standard_normal((2, 4, 8, 8)), rng.standard_normal(spec.weight_shape)
    out = conv2d(Tensor(x), spec, Tensor(w)).data
    assert out.shape == (2, 5, 4, 4)
    assert np.abs(out - naive_conv(x, w, (2, 2), (1, 1), (1, 1), 1)).max() <= 1e-12


@pytest.mark.parametrize("d", [2, 3])
def test_dilated_equals_zero_inserted_kernel(rng, d):
    spec = Conv2dSpec(3, 4, 3, 1, d, d)
    x, w = rng.standard_normal((2, 3, 9, 9)), rng.standard_normal(spec.weight_shape)
    big = np.zeros((4, 3, 2 * d + 1, 2 * d + 1))
    big[:, :, ::d, ::d] = w
    plain = Conv2dSpec(3, 4, 2 * d + 1, 1, d)
    a = nn.dilated_conv(Tensor(x), spec, Tensor(w)).data
    b = conv2d(Tensor(x), plain, Tensor(big)).data
    assert np.array_equal(a, b)


def test_zero_kernel_gives_zero():
    spec = Conv2dSpec(1, 1, 3)
    assert not conv2d(Tensor(np.ones((1, 1, 3, 3))), spec, Tensor(np.zeros(spec.weight_shape))).data.any()


@pytest.mark.parametrize("d", [1, 2])
def test_identity_kernel_reproduces_input(rng, d):
    spec = Conv2dSpec(3, 3, 3, 1, d, d, groups=3)
    w = np.zeros(spec.weight_shape)
    w[:, 0, 1, 1] = 1.0
    x = rng.standard_normal((1, 3, 6, 6))
    assert np.array_equal(conv2d(Tensor(x), spec, Tensor(w)).data, x)


def test_uniform_kernel_on_constant_input():
    spec = Conv2dSpec(2, 2, 3, groups=2)
    out = nn.depthwise_conv(Tensor(np.full((1, 2, 5, 5), 0.7)), spec, Tensor(np.full(spec.weight_shape, 1 / 9))).data
    assert np.allclose(out, 0.7, atol=1e-15)


def test_edge_kernel_on_ramp():
    spec = Conv2dSpec(1, 1, 3, padding=1, groups=1)
    w = np.tile([-1.0, 0.0, 1.0], (3, 1)).reshape(1, 1, 3, 3)
    ramp = np.tile(np.arange(8.0), (8, 1)).reshape(1, 1, 8, 8)
    out = conv2d(Tensor(ramp), spec, Tensor(w)).data[0, 0, 1:-1, 1:-1]
    assert np.array_equal(out, np.full_like(out, 6.0))


def test_conv_errors():
    with pytest.raises(ConfigError):
        Conv2dSpec(3, 4, 3, groups=2)
    with pytest.raises(DimensionError):
        spec = Conv2dSpec(1, 1, 5)
        conv2d(Tensor(np.ones((1, 1, 3, 3))), spec, Tensor(np.ones(spec.weight_shape)))
    with pytest.raises(ConfigError):
        nn.depthwise_conv(Tensor(np.ones((1, 2, 3, 3))), Conv2dSpec(2, 2, 3), Tensor(np.ones((2, 2, 3, 3))))


def test_dilated_receptive_field():
    spec = Conv2dSpec(1, 1, 3, 1, 2, 2)
    x = np.zeros((1, 1, 9, 9))
    x[0, 0, 4, 4] = 1.0
    out = conv2d(Tensor(x), spec, Tensor(np.ones(spec.weight_shape))).data[0, 0]
    rows, cols = np.nonzero(out)
    assert out.shape == (9, 9)
    assert rows.max() - rows.min() + 1 == 5 and cols.max() - cols.min() + 1 == 5


def test_batch_norm_train_and_running_stats(rng):
    x = rng.standard_normal((4, 3, 5, 5)) * 2 + 1
    rm, rv = np.zeros(3), np.ones(3)
    g, b = Tensor(np.ones(3)), Tensor(np.zeros(3))
    y = batch_norm(Tensor(x), g, b, rm, rv, training=True).data
    assert np.allclose(y.mean(axis=(0, 2, 3)), 0, atol=1e-12)
    assert np.allclose(y.var(axis=(0, 2, 3)), x.var(axis=(0, 2, 3)) / (x.var(axis=(0, 2, 3)) + 1e-5))
    assert np.allclose(rm, 0.1 * x.mean(axis=(0, 2, 3)))
    assert np.allclose(rv, 0.9 + 0.1 * x.var(axis=(0, 2, 3)))


def test_batch_norm_eval_uses_running_stats_only(rng):
    rm, rv = rng.standard_normal(3), rng.uniform(0.5, 2, 3)
    x = rng.standard_normal((2, 3, 4, 4))
    before = rm.copy(), rv.copy()
    y = batch_norm(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3)), rm, rv, training=False).data
    expect = (x - rm[:, None, None]) / np.sqrt(rv[:, None, None] + 1e-5)
    assert np.allclose(y, expect, atol=1e-14)
    assert np.array_equal(rm, before[0]) and np.array_equal(rv, before[1])


def test_batch_norm_single_value_in_train_mode():
    with pytest.raises(ContractError):
        batch_norm(Tensor(np.ones((1, 2, 1, 1))), Tensor(np.ones(2)), Tensor(np.zeros(2)), np.zeros(2), np.ones(2), True)


def test_linear_and_pool(rng):
    x, w, b = rng.standard_normal((3, 4)), rng.standard_normal((2, 4)), rng.standard_normal(2)
    assert np.allclose(nn.linear(Tensor(x), Tensor(w), Tensor(b)).data, x @ w.T + b)
    img = rng.standard_normal((2, 3, 4, 5))
    assert np.allclose(nn.global_avg_pool(Tensor(img)).data.reshape(2, 3), img.mean(axis=(2, 3)))


def test_channel_split_sizes():
    assert channel_sizes(64, (1, 6, 1)) == (8, 48, 8)
    assert channel_sizes(64, (2, 4, 2)) == (16, 32, 16)
    with pytest.raises(ConfigError):
        channel_sizes(60, (1, 6, 1))
    parts = channel_split(Tensor(np.zeros((1, 16, 2, 2))), (1, 6, 1))
    assert [p.shape[1] for p in parts] == [2, 12, 2]
