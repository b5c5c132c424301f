"""Finite-difference gradient checks for every differentiable op.

Each case reduces the op's output to a scalar with a fixed random
projection, compares tape gradients with central differences
(step ``h = 1e-5 * max(1, |x|)``) and reports

    max|analytic - numeric| / max(max|analytic|, max|numeric|, 1e-12)

per checked tensor, taking the worst tensor for the case.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .attention import Mhsa2d, Mhsa2dSpec, rel_pos_bias
from .blocks import Eca, IiaBlock, IiaBlockConfig, MBConv2
from .module import Module
from .nn import BatchNorm2d, Conv2dSpec, batch_norm, conv2d, global_avg_pool, linear
from .tensor import Tensor, make_rng, no_grad
from .training import cross_entropy

TOLERANCE = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-12)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def check_gradients(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    rng: np.random.Generator,
    max_checks: int = 64,
) -> float:
    """Worst relative error between tape and central-difference gradients.

    ``fn`` recomputes the output from ``tensors`` (which must require grad);
    at most ``max_checks`` seeded coordinates are probed per tensor.
    """
    out = fn()
    proj = rng.standard_normal(out.shape)

    def loss_value() -> float:
        with no_grad():
            return float((fn().data * proj).sum())

    loss = T.tsum(T.mul(out, proj))
    analytic = T.grad(loss, list(tensors))
    worst = 0.0
    for t, a in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= max_checks else np.sort(rng.choice(n, max_checks, replace=False))
        num = np.empty(len(coords))
        for j, i in enumerate(coords):
            orig = flat[i]
            h = 1e-5 * max(1.0, abs(orig))
            flat[i] = orig + h
            up = loss_value()
            flat[i] = orig - h
            down = loss_value()
            flat[i] = orig
            num[j] = (up - down) / (2 * h)
        worst = max(worst, relative_error(a.reshape(-1)[coords], num))
    return worst


def _leaf(rng, *shape, scale=1.0) -> Tensor:
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


def _module_case(module: Module, x: Tensor, rng, **kw) -> float:
    return check_gradients(lambda: module(x, **kw), [x, *module.parameters()], rng)


def gradcheck_suite(seed: int = 0) -> dict[str, float]:
    """Run every case; returns ``{case name: worst relative error}``."""
    rng = make_rng(seed)
    results: dict[str, float] = {}

    def run(name, fn, tensors):
        results[name] = check_gradients(fn, tensors, rng)

    a, b = _leaf(rng, 2, 3, 4), _leaf(rng, 3, 1)
    run("add_broadcast", lambda: T.add(a, b), [a, b])
    run("sub_broadcast", lambda: T.sub(a, b), [a, b])
    run("mul_broadcast", lambda: T.mul(a, b), [a, b])
    pos = Tensor(rng.uniform(0.5, 2.0, (3, 1)), requires_grad=True)
    run("div_broadcast", lambda: T.div(a, pos), [a, pos])
    run("relu", lambda: T.relu(a), [a])
    run("sigmoid", lambda: T.sigmoid(a), [a])
    run("exp", lambda: T.exp(a), [a])
    run("sum_mean", lambda: T.add(T.tsum(a, axis=2), T.mean(a, axis=(0, 2), keepdims=True).reshape(1, 3)), [a])
    m1, m2 = _leaf(rng, 3, 4), _leaf(rng, 4, 2)
    run("matmul", lambda: T.matmul(m1, m2), [m1, m2])
    bm1, bm2 = _leaf(rng, 2, 3, 3, 4), _leaf(rng, 3, 4, 2)
    run("matmul_batched", lambda: T.matmul(bm1, bm2), [bm1, bm2])
    run("softmax", lambda: T.softmax(a, axis=-1), [a])
    run("transpose_reshape", lambda: T.reshape(T.transpose(a, (2, 0, 1)), (4, 6)), [a])
    run("concat_split", lambda: T.concat(T.split(a, [1, 2], axis=1)[::-1], axis=1), [a])
    table = _leaf(rng, 5, 3)
    run("take", lambda: T.take(table, np.array([[0, 4], [2, 2]]), axis=0), [table])
    e1, e2 = _leaf(rng, 2, 3, 4), _leaf(rng, 4, 5)
    run("einsum", lambda: T.einsum("bij,jk->bik", e1, e2), [e1, e2])

    x = _leaf(rng, 2, 4, 7, 7)
    spec = Conv2dSpec(4, 6, 3, 2, 1)
    w, bias = _leaf(rng, *spec.weight_shape, scale=0.3), _leaf(rng, 6)
    run("conv2d", lambda: conv2d(x, spec, w, bias), [x, w, bias])
    dspec = Conv2dSpec(4, 4, 3, 1, 1, groups=4)
    dw = _leaf(rng, *dspec.weight_shape, scale=0.3)
    run("depthwise_conv", lambda: conv2d(x, dspec, dw), [x, dw])
    lspec = Conv2dSpec(4, 4, 3, 1, 2, 2)
    lw = _leaf(rng, *lspec.weight_shape, scale=0.3)
    run("dilated_conv", lambda: conv2d(x, lspec, lw), [x, lw])
    gspec = Conv2dSpec(4, 6, 3, 1, 1, groups=2)
    gw = _leaf(rng, *gspec.weight_shape, scale=0.3)
    run("grouped_conv", lambda: conv2d(x, gspec, gw), [x, gw])

    gamma = Tensor(rng.uniform(0.5, 1.5, 4), requires_grad=True)
    beta = _leaf(rng, 4)
    rm, rv = np.zeros(4), np.ones(4)
    run("batch_norm_train", lambda: batch_norm(x, gamma, beta, rm, rv, True), [x, gamma, beta])
    erm, erv = rng.standard_normal(4), rng.uniform(0.5, 2.0, 4)
    run("batch_norm_eval", lambda: batch_norm(x, gamma, beta, erm, erv, False), [x, gamma, beta])

    lx, lw2, lb = _leaf(rng, 5, 8), _leaf(rng, 3, 8), _leaf(rng, 3)
    run("linear", lambda: linear(lx, lw2, lb), [lx, lw2, lb])
    run("global_avg_pool", lambda: global_avg_pool(x), [x])
    labels = np.array([0, 2, 1, 2, 0])
    run("cross_entropy", lambda: cross_entropy(linear(lx, lw2, lb), labels), [lx, lw2, lb])

    q = _leaf(rng, 2, 2, 6, 3)
    th, tw = _leaf(rng, 2, 3, 3), _leaf(rng, 2, 5, 3)
    run("rel_pos_bias", lambda: rel_pos_bias(q, th, tw, 2, 3), [q, th, tw])

    ax = _leaf(rng, 2, 8, 3, 3)
    for mode in ("appended", "additive"):
        att = Mhsa2d(Mhsa2dSpec(8, 2, True, 2, mode), 3, 3, rng)
        results[f"mhsa_relpos_registers_{mode}"] = _module_case(att, ax, rng)
    plain = Mhsa2d(Mhsa2dSpec(8, 4, False, 0), 3, 3, rng)
    results["mhsa_plain"] = _module_case(plain, ax, rng)

    ex = _leaf(rng, 2, 8, 5, 5)
    results["eca"] = _module_case(Eca(8, rng), ex, rng)

    mb = MBConv2(4, 3, rng)
    mb.train()
    results["mbconv2"] = _module_case(mb, _leaf(rng, 1, 4, 5, 5), rng)

    bx = _leaf(rng, 2, 8, 9, 9)
    blk = IiaBlock(IiaBlockConfig(8, heads=8, registers=1), 9, 9, rng)
    results["iia_block"] = _module_case(blk, bx, rng)
    bn = BatchNorm2d(4)
    bn.eval()
    bn.running_mean[:] = rng.standard_normal(4)
    results["batch_norm_module_eval"] = _module_case(bn, x, rng)
    return results
