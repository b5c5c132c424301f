"""Global 2D multi-head self-attention with relative positions and registers.

The whole H x W feature map is flattened into HW tokens and every query
attends to every key; there is no windowing.  Two optional extras change
the attention logits:

* relative position bias, ``q_i . (R_h[dr] + R_w[dc])`` from factorized
  per-head height and width tables indexed by the key-minus-query offset;
* register tokens, either appended as N extra learned key/value slots
  (``"appended"``) or added as dense learned maps onto the logits and the
  values (``"additive"``).  Registers are never queries, so the output
  always has HW tokens.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .module import Module
from .nn import kaiming_normal, linear
from .tensor import (
    Tensor,
    add,
    broadcast_to,
    concat,
    einsum,
    matmul,
    reshape,
    softmax,
    take,
    tsum,
    transpose,
)

REGISTER_MODES = ("appended", "additive")


@dataclass(frozen=True)
class Mhsa2dSpec:
    channels: int
    heads: int = 8
    rel_pos: bool = True
    registers: int = 0
    register_mode: str = "appended"

    def __post_init__(self):
        if self.channels < 1 or self.heads < 1:
            raise ConfigError(f"channels and heads must be positive, got {self.channels}, {self.heads}")
        if self.channels % self.heads:
            raise ConfigError(f"channels {self.channels} not divisible by heads {self.heads}")
        if self.registers < 0:
            raise ConfigError(f"register count must be >= 0, got {self.registers}")
        if self.register_mode not in REGISTER_MODES:
            raise ConfigError(f"register_mode must be one of {REGISTER_MODES}, got {self.register_mode!r}")

    @property
    def head_dim(self) -> int:
        return self.channels // self.heads


def _rel_index(n: int) -> np.ndarray:
    pos = np.arange(n)
    return pos[None, :] - pos[:, None] + n - 1


def rel_pos_bias(q: Tensor, height_table: Tensor, width_table: Tensor, height: int, width: int) -> Tensor:
    """Relative position logits for every (query, key) pair.

    ``q`` is ``(B, heads, HW, d)`` with tables ``(heads, 2H-1, d)`` and
    ``(heads, 2W-1, d)``, or ``(HW, d)`` with tables ``(2H-1, d)`` and
    ``(2W-1, d)``.  Returns ``bias[..., i, j] = q_i . (R_h[row_j - row_i + H - 1]
    + R_w[col_j - col_i + W - 1])``.
    """
    flat = q.ndim == 2
    if flat:
        q = reshape(q, (1, 1, *q.shape))
        height_table = reshape(height_table, (1, *height_table.shape))
        width_table = reshape(width_table, (1, *width_table.shape))
    b, h, n, d = q.shape
    if n != height * width:
        raise DimensionError(f"query length {n} does not match {height}x{width} grid")
    if height_table.shape != (h, 2 * height - 1, d) or width_table.shape != (h, 2 * width - 1, d):
        raise ConfigError(
            f"relative tables {height_table.shape}/{width_table.shape} do not fit "
            f"{h} heads on a {height}x{width} grid with head dim {d}"
        )
    rh = take(height_table, _rel_index(height), axis=1)  # heads, H, H, d
    rw = take(width_table, _rel_index(width), axis=1)  # heads, W, W, d
    qg = reshape(q, (b, h, height, width, d))
    bh = einsum("bhxyd,hxud->bhxyu", qg, rh)
    bw = einsum("bhxyd,hyvd->bhxyv", qg, rw)
    bias = add(reshape(bh, (b, h, height, width, height, 1)), reshape(bw, (b, h, height, width, 1, width)))
    bias = reshape(bias, (b, h, n, n))
    return reshape(bias, (n, n)) if flat else bias


def apply_registers(logits: Tensor, q: Tensor, v: Tensor, registers: dict, mode: str):
    """Fold register tokens into attention logits and values.

    ``logits`` is ``(B, heads, HW, HW)``, ``q`` and ``v`` are ``(B, heads, HW, d)``.
    ``registers`` holds ``key``/``value`` of shape ``(heads, N, d)`` for the
    appended mode, or ``qk`` ``(N, HW, HW)`` and ``v`` ``(N, d, HW)`` for the
    additive mode.  With no registers the inputs come back untouched.
    """
    if not registers:
        return logits, v
    b, h, n, d = v.shape
    if mode == "appended":
        k_reg, v_reg = registers["key"], registers["value"]
        nreg = k_reg.shape[1]
        reg_logits = matmul(q, transpose(k_reg, (0, 2, 1)))
        logits = concat([logits, reg_logits], axis=-1)
        v = concat([v, broadcast_to(reshape(v_reg, (1, h, nreg, d)), (b, h, nreg, d))], axis=2)
    elif mode == "additive":
        r_qk, r_v = registers["qk"], registers["v"]
        if r_qk.shape[1:] != (n, n) or r_v.shape[1:] != (d, n):
            raise ConfigError(
                f"additive registers {r_qk.shape}/{r_v.shape} do not match HW={n}, head dim {d}"
            )
        logits = logits + tsum(r_qk, axis=0)
        v = v + transpose(tsum(r_v, axis=0), (1, 0))
    else:
        raise ConfigError(f"unknown register mode {mode!r}")
    return logits, v


def mhsa2d_forward(x: Tensor, spec: Mhsa2dSpec, params: dict, return_weights: bool = False):
    """Global multi-head self-attention over a B x C x H x W feature map.

    ``params`` needs ``q``, ``k``, ``v``, ``o`` (C x C, stored out x in) and
    ``o_bias``; ``rel_h``/``rel_w`` when ``spec.rel_pos``; and the register
    tensors described in :func:`apply_registers` when ``spec.registers > 0``.
    """
    if x.ndim != 4 or x.shape[1] != spec.channels:
        raise DimensionError(f"mhsa2d expects B x {spec.channels} x H x W, got {x.shape}")
    b, c, hh, ww = x.shape
    n, h, d = hh * ww, spec.heads, spec.head_dim

    tokens = transpose(reshape(x, (b, c, n)), (0, 2, 1))

    def heads_first(t):
        return transpose(reshape(t, (b, n, h, d)), (0, 2, 1, 3))

    q = heads_first(linear(tokens, params["q"]))
    k = heads_first(linear(tokens, params["k"]))
    v = heads_first(linear(tokens, params["v"]))

    logits = matmul(q, transpose(k, (0, 1, 3, 2)))
    if spec.rel_pos:
        logits = logits + rel_pos_bias(q, params["rel_h"], params["rel_w"], hh, ww)
    if spec.registers:
        regs = (
            {"key": params["reg_key"], "value": params["reg_value"]}
            if spec.register_mode == "appended"
            else {"qk": params["reg_qk"], "v": params["reg_v"]}
        )
        logits, v = apply_registers(logits, q, v, regs, spec.register_mode)
    weights = softmax(logits * (1.0 / np.sqrt(d)), axis=-1)
    z = matmul(weights, v)
    z = reshape(transpose(z, (0, 2, 1, 3)), (b, n, c))
    out = linear(z, params["o"], params["o_bias"])
    out = reshape(transpose(out, (0, 2, 1)), (b, c, hh, ww))
    return (out, weights) if return_weights else out


class Mhsa2d(Module):
    """Trainable parameters for :func:`mhsa2d_forward` on a fixed grid size."""

    def __init__(self, spec: Mhsa2dSpec, height: int, width: int, rng: np.random.Generator):
        super().__init__()
        self.spec, self.height, self.width = spec, height, width
        c, h, d, nreg = spec.channels, spec.heads, spec.head_dim, spec.registers
        self.q = Tensor(kaiming_normal(rng, (c, c), c), requires_grad=True)
        self.k = Tensor(kaiming_normal(rng, (c, c), c), requires_grad=True)
        self.v = Tensor(kaiming_normal(rng, (c, c), c), requires_grad=True)
        self.o = Tensor(kaiming_normal(rng, (c, c), c), requires_grad=True)
        self.o_bias = Tensor(np.zeros(c), requires_grad=True)
        if spec.rel_pos:
            self.rel_h = Tensor(rng.standard_normal((h, 2 * height - 1, d)) * d**-0.5, requires_grad=True)
            self.rel_w = Tensor(rng.standard_normal((h, 2 * width - 1, d)) * d**-0.5, requires_grad=True)
        if nreg and spec.register_mode == "appended":
            self.reg_key = Tensor(rng.standard_normal((h, nreg, d)) * 0.02, requires_grad=True)
            self.reg_value = Tensor(rng.standard_normal((h, nreg, d)) * 0.02, requires_grad=True)
        elif nreg:
            hw = height * width
            self.reg_qk = Tensor(rng.standard_normal((nreg, hw, hw)) * 0.02, requires_grad=True)
            self.reg_v = Tensor(rng.standard_normal((nreg, d, hw)) * 0.02, requires_grad=True)

    def params(self) -> dict:
        return dict(self._params)

    def forward(self, x, return_weights=False):
        if x.ndim == 4 and (x.shape[2], x.shape[3]) != (self.height, self.width):
            if self.spec.rel_pos or (self.spec.registers and self.spec.register_mode == "additive"):
                raise ConfigError(
                    f"attention built for {self.height}x{self.width} grid, got {x.shape[2]}x{x.shape[3]}"
                )
        return mhsa2d_forward(x, self.spec, self.params(), return_weights)
