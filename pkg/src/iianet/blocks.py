"""Stem, MBConv2, dilated branch, ECA, downsample and the iiABlock."""
from __future__ import annotations

from dataclasses import dataclass, replace
from math import gcd

import numpy as np

from .attention import REGISTER_MODES, Mhsa2d, Mhsa2dSpec
from .errors import ConfigError, DimensionError
from .module import Module
from .nn import Conv2dSpec, ConvBN, channel_concat, channel_sizes, global_avg_pool, kaiming_normal, linear, split
from .tensor import Tensor, mul, reshape, sigmoid

# Branch order everywhere is (dilated, mbconv, mhsa).
VARIANTS = {
    "mbconv-only": (False, True, False),
    "mbconv+dilated": (True, True, False),
    "full": (True, True, True),
    "dilated+mhsa": (True, False, True),
    "mbconv+mhsa": (False, True, True),
}
VARIANT_ALIASES = {"a": "mbconv-only", "b": "mbconv+dilated", "c": "full", "d": "dilated+mhsa", "e": "mbconv+mhsa"}


def _require_even(x: Tensor, what: str) -> None:
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ConfigError(f"{what} needs even spatial dims, got {x.shape[2]}x{x.shape[3]}; resize first")


@dataclass(frozen=True)
class IiaBlockConfig:
    channels: int
    ratio: tuple[int, int, int] = (1, 6, 1)
    dilation: int = 2
    expansion: int = 6
    heads: int = 8
    registers: int = 0
    register_mode: str = "appended"
    rel_pos: bool = True
    variant: str = "full"

    def __post_init__(self):
        object.__setattr__(self, "variant", VARIANT_ALIASES.get(self.variant, self.variant))
        object.__setattr__(self, "ratio", tuple(int(r) for r in self.ratio))
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown block variant {self.variant!r}; expected one of {sorted(VARIANTS)}")
        if len(self.ratio) != 3 or min(self.ratio) < 0 or sum(self.ratio) == 0:
            raise ConfigError(f"ratio must be three non-negative ints, got {self.ratio}")
        if self.dilation < 1 or self.expansion < 1 or self.heads < 1:
            raise ConfigError("dilation, expansion and heads must be positive")
        if self.registers < 0:
            raise ConfigError(f"registers must be >= 0, got {self.registers}")
        if self.register_mode not in REGISTER_MODES:
            raise ConfigError(f"register_mode must be one of {REGISTER_MODES}")
        self.branch_channels()

    def with_channels(self, channels: int) -> "IiaBlockConfig":
        return replace(self, channels=channels)

    def branch_channels(self) -> tuple[int, int, int]:
        """Channels fed to (dilated, mbconv, mhsa) after variant reallocation.

        Channels of a disabled branch go to MBConv2 when it is active,
        otherwise they are shared among the remaining branches in proportion
        to their ratio parts (any remainder to the first of them).
        """
        sizes = list(channel_sizes(self.channels, self.ratio))
        active = VARIANTS[self.variant]
        donated = sum(s for s, a in zip(sizes, active) if not a)
        sizes = [s if a else 0 for s, a in zip(sizes, active)]
        if donated:
            if active[1]:
                sizes[1] += donated
            else:
                idx = [i for i in range(3) if active[i]]
                parts = [self.ratio[i] for i in idx]
                if sum(parts) == 0:
                    parts = [1] * len(idx)
                shares = [donated * p // sum(parts) for p in parts]
                shares[0] += donated - sum(shares)
                for i, s in zip(idx, shares):
                    sizes[i] += s
        if sum(sizes) != self.channels or not any(sizes):
            raise ConfigError(f"variant {self.variant} cannot place {self.channels} channels")
        return tuple(sizes)

    def attention_heads(self) -> int:
        """Head count actually used by the attention branch.

        The branch is often narrower than the requested head count (C/8
        channels under the default ratio), so ``gcd(heads, branch width)``
        heads are used.  Projection widths do not depend on it.
        """
        c = self.branch_channels()[2]
        return gcd(self.heads, c) if c else self.heads

    def mhsa_spec(self) -> Mhsa2dSpec | None:
        c = self.branch_channels()[2]
        if not c:
            return None
        return Mhsa2dSpec(c, self.attention_heads(), self.rel_pos, self.registers, self.register_mode)


class Stem(Module):
    """Two 3x3 conv-BN-ReLU layers; the first has stride 2."""

    def __init__(self, out_channels: int, rng: np.random.Generator, mid_channels: int | None = None, in_channels: int = 3):
        super().__init__()
        mid = mid_channels or out_channels
        self.conv1 = ConvBN(Conv2dSpec(in_channels, mid, 3, 2, 1), rng)
        self.conv2 = ConvBN(Conv2dSpec(mid, out_channels, 3, 1, 1), rng)

    def forward(self, x):
        if x.ndim != 4 or x.shape[2] < 4 or x.shape[3] < 4:
            raise ConfigError(f"stem needs B x C x H x W with H, W >= 4, got {x.shape}")
        _require_even(x, "stem")
        return self.conv2(self.conv1(x))


class MBConv2(Module):
    """Inverted residual: 1x1 expand, 3x3 depthwise, 1x1 linear projection, skip add."""

    def __init__(self, channels: int, expansion: int, rng: np.random.Generator):
        super().__init__()
        hidden = channels * expansion
        self.expand = ConvBN(Conv2dSpec(channels, hidden, 1), rng)
        self.depthwise = ConvBN(Conv2dSpec(hidden, hidden, 3, 1, 1, groups=hidden), rng)
        self.project = ConvBN(Conv2dSpec(hidden, channels, 1), rng, act=False)

    def forward(self, x):
        return x + self.project(self.depthwise(self.expand(x)))


class DilatedBranch(Module):
    def __init__(self, channels: int, dilation: int, rng: np.random.Generator):
        super().__init__()
        self.conv = ConvBN(Conv2dSpec(channels, channels, 3, 1, dilation, dilation), rng)

    def forward(self, x):
        return self.conv(x)


def eca(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Channel gate ``x * sigmoid(W p + b)`` with ``p`` the per-channel spatial mean."""
    b, c = x.shape[:2]
    p = reshape(global_avg_pool(x), (b, c))
    z = sigmoid(linear(p, weight, bias))
    return mul(x, reshape(z, (b, c, 1, 1)))


class Eca(Module):
    def __init__(self, channels: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.weight = Tensor(kaiming_normal(rng, (channels, channels), channels), requires_grad=True)
        self.bias = Tensor(np.zeros(channels), requires_grad=True) if bias else None

    def forward(self, x):
        return eca(x, self.weight, self.bias)


class Downsample(Module):
    """1x1 conv with stride 2, BN and ReLU."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        super().__init__()
        self.conv = ConvBN(Conv2dSpec(in_channels, out_channels, 1, 2, 0), rng)

    def forward(self, x):
        _require_even(x, "downsample")
        return self.conv(x)


class IiaBlock(Module):
    """Parallel dilated conv, MBConv2 and global MHSA over a channel split, then concat."""

    def __init__(self, config: IiaBlockConfig, height: int, width: int, rng: np.random.Generator):
        super().__init__()
        self.config = config
        self.sizes = config.branch_channels()
        c_dil, c_mb, c_attn = self.sizes
        self.dilated = DilatedBranch(c_dil, config.dilation, rng) if c_dil else None
        self.mbconv = MBConv2(c_mb, config.expansion, rng) if c_mb else None
        self.mhsa = Mhsa2d(config.mhsa_spec(), height, width, rng) if c_attn else None

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.config.channels:
            raise DimensionError(f"iiABlock expects B x {self.config.channels} x H x W, got {x.shape}")
        live = [s for s in self.sizes if s]
        pieces = iter(split(x, live, axis=1))
        outs = []
        for size, branch in zip(self.sizes, (self.dilated, self.mbconv, self.mhsa)):
            if size:
                outs.append(branch(next(pieces)))
        return channel_concat(outs)
