"""Convolution, normalization, linear and pooling primitives plus layer wrappers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .module import Module
from .tensor import Tensor, _record, concat, matmul, mean, relu, split, transpose


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def conv_output_size(size: int, kernel: int, stride: int = 1, padding: int = 0, dilation: int = 1) -> int:
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def same_padding(kernel: int, dilation: int = 1) -> int:
    """Padding that keeps the spatial size for an odd kernel at stride 1."""
    if kernel % 2 == 0:
        raise ConfigError(f"same padding needs an odd kernel, got {kernel}")
    return dilation * (kernel - 1) // 2


@dataclass(frozen=True)
class Conv2dSpec:
    in_channels: int
    out_channels: int
    kernel: tuple[int, int] = (3, 3)
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    dilation: tuple[int, int] = (1, 1)
    groups: int = 1

    def __post_init__(self):
        for f in ("kernel", "stride", "padding", "dilation"):
            object.__setattr__(self, f, _pair(getattr(self, f)))
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError(f"channels must be positive, got {self.in_channels}->{self.out_channels}")
        if self.groups < 1 or self.in_channels % self.groups or self.out_channels % self.groups:
            raise ConfigError(
                f"groups={self.groups} must divide in_channels={self.in_channels} "
                f"and out_channels={self.out_channels}"
            )
        if min(self.kernel) < 1 or min(self.stride) < 1 or min(self.dilation) < 1 or min(self.padding) < 0:
            raise ConfigError(f"invalid conv geometry {self}")

    @property
    def is_depthwise(self) -> bool:
        return self.groups == self.in_channels == self.out_channels

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels // self.groups, *self.kernel)

    def output_size(self, h: int, w: int) -> tuple[int, int]:
        ho = conv_output_size(h, self.kernel[0], self.stride[0], self.padding[0], self.dilation[0])
        wo = conv_output_size(w, self.kernel[1], self.stride[1], self.padding[1], self.dilation[1])
        if ho < 1 or wo < 1:
            raise DimensionError(f"conv output would be {ho}x{wo} for input {h}x{w} with {self}")
        return ho, wo


def _im2col(xp, spec: Conv2dSpec, ho, wo):
    b, c = xp.shape[:2]
    (kh, kw), (sh, sw), (dh, dw) = spec.kernel, spec.stride, spec.dilation
    cols = np.empty((b, c, kh, kw, ho, wo))
    for i in range(kh):
        for j in range(kw):
            r, s = i * dh, j * dw
            cols[:, :, i, j] = xp[:, :, r : r + sh * (ho - 1) + 1 : sh, s : s + sw * (wo - 1) + 1 : sw]
    return cols


def _col2im(cols, spec: Conv2dSpec, padded_shape, ho, wo):
    (kh, kw), (sh, sw), (dh, dw) = spec.kernel, spec.stride, spec.dilation
    dxp = np.zeros(padded_shape)
    for i in range(kh):
        for j in range(kw):
            r, s = i * dh, j * dw
            dxp[:, :, r : r + sh * (ho - 1) + 1 : sh, s : s + sw * (wo - 1) + 1 : sw] += cols[:, :, i, j]
    return dxp


def conv2d(x: Tensor, spec: Conv2dSpec, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """2D cross-correlation (no kernel flip) over NCHW input."""
    if x.ndim != 4 or x.shape[1] != spec.in_channels:
        raise DimensionError(f"conv2d expects B x {spec.in_channels} x H x W input, got {x.shape}")
    if weight.shape != spec.weight_shape:
        raise DimensionError(f"conv2d weight must be {spec.weight_shape}, got {weight.shape}")
    if bias is not None and bias.shape != (spec.out_channels,):
        raise DimensionError(f"conv2d bias must be ({spec.out_channels},), got {bias.shape}")
    b, _, h, w = x.shape
    ho, wo = spec.output_size(h, w)
    ph, pw = spec.padding
    g = spec.groups
    cg, og = spec.in_channels // g, spec.out_channels // g
    kk = spec.kernel[0] * spec.kernel[1]
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else x.data
    taps = _im2col(xp, spec, ho, wo).reshape(b, g, cg, kk, ho * wo)
    wtaps = weight.data.reshape(g, og, cg, kk)
    depthwise = cg == 1 and og == 1
    # one product per kernel tap, summed in raster order: a zero tap adds an
    # exact zero, so a zero-inserted kernel reproduces dilation bit for bit
    out = np.zeros((b, g, og, ho * wo))
    for t in range(kk):
        if depthwise:
            out += wtaps[None, :, :, 0, t, None] * taps[:, :, :, t]
        else:
            out += np.matmul(wtaps[:, :, :, t], taps[:, :, :, t])
    out = out.reshape(b, spec.out_channels, ho, wo)
    cols = taps.reshape(b, g, cg * kk, ho * wo)
    wmat = wtaps.reshape(g, og, cg * kk)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def backward(gout):
        gm = gout.reshape(b, g, og, ho * wo)
        if depthwise:
            gw = np.einsum("bgl,bgkl->gk", gm[:, :, 0], cols, optimize=True)[:, None, :]
            gcols = gm[:, :, 0, None, :] * wmat[:, 0][None, :, :, None]
        else:
            gw = np.einsum("bgol,bgkl->gok", gm, cols, optimize=True)
            gcols = np.matmul(np.swapaxes(wmat, -1, -2), gm)
        gcols = gcols.reshape(b, spec.in_channels, *spec.kernel, ho, wo)
        gx = _col2im(gcols, spec, xp.shape, ho, wo)
        if ph or pw:
            gx = gx[:, :, ph : ph + h, pw : pw + w]
        grads = [gx, gw.reshape(weight.shape)]
        if bias is not None:
            grads.append(gout.sum(axis=(0, 2, 3)))
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _record(out, inputs, backward, "conv2d")


def depthwise_conv(x: Tensor, spec: Conv2dSpec, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    if not spec.is_depthwise:
        raise ConfigError(f"depthwise conv needs groups == in == out channels, got {spec}")
    return conv2d(x, spec, weight, bias)


def dilated_conv(x: Tensor, spec: Conv2dSpec, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    if max(spec.dilation) < 2:
        raise ConfigError(f"dilated conv needs dilation >= 2, got {spec.dilation}")
    return conv2d(x, spec, weight, bias)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization over B, H and W.

    In training mode the batch statistics (biased variance) normalize the
    input and ``running_mean``/``running_var`` are updated in place with
    ``new = (1 - momentum) * old + momentum * batch``.  In eval mode only the
    running statistics are used.
    """
    if x.ndim != 4:
        raise DimensionError(f"batch_norm expects B x C x H x W, got {x.shape}")
    c = x.shape[1]
    shape = (1, c, 1, 1)
    g = gamma.data.reshape(shape)
    if training:
        n = x.shape[0] * x.shape[2] * x.shape[3]
        if n < 2:
            raise ContractError(f"batch_norm in train mode needs B*H*W >= 2, got {x.shape}")
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        n = None
        mu, var = running_mean, running_var
    invstd = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(shape)) * invstd.reshape(shape)
    out = g * xhat + beta.data.reshape(shape)

    def backward(gout):
        dgamma = (gout * xhat).sum(axis=(0, 2, 3))
        dbeta = gout.sum(axis=(0, 2, 3))
        dxhat = gout * g
        if training:
            dx = (invstd.reshape(shape) / n) * (
                n * dxhat
                - dxhat.sum(axis=(0, 2, 3), keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            )
        else:
            dx = dxhat * invstd.reshape(shape)
        return dx, dgamma, dbeta

    return _record(out, (x, gamma, beta), backward, "batch_norm")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` with weight stored as (out, in)."""
    if x.shape[-1] != weight.shape[1]:
        raise DimensionError(f"linear: input {x.shape} does not match weight {weight.shape}")
    y = matmul(x, transpose(weight, (1, 0)))
    return y + bias if bias is not None else y


def global_avg_pool(x: Tensor) -> Tensor:
    """Adaptive average pool to 1x1: B x C x H x W -> B x C x 1 x 1."""
    return mean(x, axis=(2, 3), keepdims=True)


def channel_sizes(channels: int, ratio) -> tuple[int, ...]:
    parts = sum(ratio)
    if channels % parts:
        raise ConfigError(
            f"channel count {channels} must be divisible by {parts} for ratio {':'.join(map(str, ratio))}"
        )
    unit = channels // parts
    return tuple(r * unit for r in ratio)


def channel_split(x: Tensor, ratio=(1, 6, 1)) -> list[Tensor]:
    """Split channels into contiguous groups proportional to ``ratio``.

    Zero-width groups are returned as ``None``.
    """
    sizes = channel_sizes(x.shape[1], ratio)
    nonzero = [s for s in sizes if s]
    pieces = iter(split(x, nonzero, axis=1))
    return [next(pieces) if s else None for s in sizes]


def channel_concat(parts) -> Tensor:
    return concat([p for p in parts if p is not None], axis=1)


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

def kaiming_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class Conv2d(Module):
    def __init__(self, spec: Conv2dSpec, rng: np.random.Generator, bias: bool = False):
        super().__init__()
        self.spec = spec
        fan_in = spec.weight_shape[1] * spec.kernel[0] * spec.kernel[1]
        self.weight = Tensor(kaiming_normal(rng, spec.weight_shape, fan_in), requires_grad=True)
        self.bias = Tensor(np.zeros(spec.out_channels), requires_grad=True) if bias else None

    def forward(self, x):
        return conv2d(x, self.spec, self.weight, self.bias)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.weight = Tensor(np.ones(channels), requires_grad=True)
        self.bias = Tensor(np.zeros(channels), requires_grad=True)
        self.register_buffer("running_mean", np.zeros(channels))
        self.register_buffer("running_var", np.ones(channels))

    def forward(self, x):
        return batch_norm(
            x, self.weight, self.bias, self.running_mean, self.running_var,
            self.training, self.momentum, self.eps,
        )


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.weight = Tensor(kaiming_normal(rng, (out_features, in_features), in_features), requires_grad=True)
        self.bias = Tensor(np.zeros(out_features), requires_grad=True) if bias else None

    def forward(self, x):
        return linear(x, self.weight, self.bias)


class ConvBN(Module):
    """Conv (no bias) followed by batch norm and an optional ReLU."""

    def __init__(self, spec: Conv2dSpec, rng: np.random.Generator, act: bool = True):
        super().__init__()
        self.act = act
        self.conv = Conv2d(spec, rng)
        self.bn = BatchNorm2d(spec.out_channels)

    def forward(self, x):
        y = self.bn(self.conv(x))
        return relu(y) if self.act else y
