"""One test per acceptance criterion, each printing a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s``; the lines are also
collected into the terminal summary.  Criteria 6 and 7 share one seeded
200-epoch training run of the tiny model.
"""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, naive_conv
from iianet.attention import Mhsa2d, Mhsa2dSpec
from iianet.blocks import VARIANTS, IiaBlock, IiaBlockConfig
from iianet.config import ModelConfig, tiny_config
from iianet.data import bright_quadrant, quadrant_of
from iianet.errors import FormatError
from iianet.explain import grad_cam
from iianet.gradcheck import TOLERANCE, gradcheck_suite
from iianet.model import ParamStore, build, load_checkpoint, save_checkpoint
from iianet.nn import Conv2dSpec, conv2d
from iianet.profile import TARGET_FLOPS, TARGET_PARAMS, profile
from iianet.tensor import Tensor, make_rng, no_grad
from iianet.training import evaluate, train

MODEL_SEED, SHUFFLE_SEED, EPOCHS = 0, 1, 200


def report(n, name, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {name}  ({detail})"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="session")
def trained():
    store, model = build(tiny_config(4), MODEL_SEED)
    data = bright_quadrant(64, 32, seed=0)
    t0 = time.perf_counter()
    log = train(model, data, EPOCHS, batch_size=16, seed=SHUFFLE_SEED, lr=1e-4, weight_decay=0.05)
    return model, log, time.perf_counter() - t0


def test_criterion_1_gradient_suite():
    t0 = time.perf_counter()
    results = gradcheck_suite(seed=0)
    elapsed = time.perf_counter() - t0
    worst_name = max(results, key=results.get)
    ok = results[worst_name] < TOLERANCE and elapsed < 300
    report(1, "gradient suite", ok,
           f"{len(results)} cases, max rel err {results[worst_name]:.2e} in {worst_name}, {elapsed:.1f}s")


def _conv_case(r, kind):
    b = int(r.integers(1, 3))
    if kind == "depthwise":
        cin = cout = groups = int(r.integers(1, 6))
    else:
        groups = int(r.choice([1, 2]))
        cin, cout = groups * int(r.integers(1, 4)), groups * int(r.integers(1, 4))
    d = int(r.integers(2, 4)) if kind == "dilated" else 1
    k = int(r.choice([1, 3])) if kind != "dilated" else 3
    spec = Conv2dSpec(cin, cout, k, int(r.integers(1, 3)), int(r.integers(0, d + 1)), d, groups)
    size = int(r.integers(d * (k - 1) + 1, 10))
    return spec, r.standard_normal((b, cin, size, size)), r.standard_normal(spec.weight_shape), r.standard_normal(cout)


def test_criterion_2_convolution_oracle():
    worst, cases = 0.0, 0
    for kind, base in (("plain", 0), ("depthwise", 1000), ("dilated", 2000)):
        for i in range(20):
            spec, x, w, b = _conv_case(make_rng(base + i), kind)
            out = conv2d(Tensor(x), spec, Tensor(w), Tensor(b)).data
            ref = naive_conv(x, w, spec.stride, spec.padding, spec.dilation, spec.groups, b)
            worst = max(worst, np.abs(out - ref).max())
            cases += 1
    exact = True
    rng = make_rng(7)
    for d in (2, 3):
        spec = Conv2dSpec(4, 5, 3, 1, d, d)
        x, w = rng.standard_normal((2, 4, 11, 11)), rng.standard_normal(spec.weight_shape)
        big = np.zeros((5, 4, 2 * d + 1, 2 * d + 1))
        big[:, :, ::d, ::d] = w
        a = conv2d(Tensor(x), spec, Tensor(w)).data
        z = conv2d(Tensor(x), Conv2dSpec(4, 5, 2 * d + 1, 1, d), Tensor(big)).data
        exact &= np.array_equal(a, z)
    report(2, "convolution oracle", worst <= 1e-12 and exact,
           f"{cases} loop-oracle cases, max abs diff {worst:.1e}; zero-inserted dilation exact={exact}")


def test_criterion_3_attention_invariants():
    rng = make_rng(3)
    x = rng.standard_normal((2, 8, 3, 3))
    att = Mhsa2d(Mhsa2dSpec(8, 2, False, 0), 3, 3, make_rng(0))
    perm = rng.permutation(9)
    y = att(Tensor(x)).data.reshape(2, 8, 9)
    yp = att(Tensor(x.reshape(2, 8, 9)[:, :, perm].reshape(2, 8, 3, 3))).data.reshape(2, 8, 9)
    equiv = np.abs(yp - y[:, :, perm]).max()

    rel = Mhsa2d(Mhsa2dSpec(8, 2, True, 0), 3, 3, make_rng(0))
    yt = rel(Tensor(x.transpose(0, 1, 3, 2))).data.transpose(0, 1, 3, 2)
    broken = np.abs(yt - rel(Tensor(x)).data).max()

    row_err, shapes = 0.0, set()
    for mode in ("appended", "additive"):
        for n in (0, 1, 2, 4):
            m = Mhsa2d(Mhsa2dSpec(8, 2, True, n, mode), 3, 3, make_rng(n))
            out, w = m(Tensor(x), return_weights=True)
            row_err = max(row_err, np.abs(w.data.sum(-1) - 1).max())
            shapes.add(out.shape)
    a = Mhsa2d(Mhsa2dSpec(8, 2, True, 0, "appended"), 3, 3, make_rng(9))(Tensor(x)).data
    b = Mhsa2d(Mhsa2dSpec(8, 2, True, 0, "additive"), 3, 3, make_rng(9))(Tensor(x)).data
    bitwise = np.array_equal(a, b)
    ok = equiv < 1e-10 and broken > 1e-6 and row_err < 1e-12 and len(shapes) == 1 and bitwise
    report(3, "attention invariants", ok,
           f"(a) equivariance {equiv:.1e} (b) transposition gap {broken:.2e} (c) row err {row_err:.1e} "
           f"(d) shapes {sorted(shapes)} (e) N=0 bitwise={bitwise}")


def test_criterion_4_block_arithmetic():
    t0 = time.perf_counter()
    default = IiaBlockConfig(64).branch_channels()
    r242 = IiaBlockConfig(64, ratio=(2, 4, 2)).branch_channels()
    x = Tensor(make_rng(0).standard_normal((1, 64, 16, 16)))
    passed, cells = 0, 0
    for variant in "abcde":
        for n in (0, 1, 2, 4):
            for heads in (8, 16):
                cells += 1
                cfg = IiaBlockConfig(64, heads=heads, registers=n, variant=variant)
                blk = IiaBlock(cfg, 16, 16, make_rng(cells))
                blk.eval()
                with no_grad():
                    y = blk(x)
                passed += y.shape == (1, 64, 16, 16) and bool(np.all(np.isfinite(y.data)))
    elapsed = time.perf_counter() - t0
    ok = default == (8, 48, 8) and r242 == (16, 32, 16) and passed == cells == 40 and elapsed < 120
    report(4, "iiABlock arithmetic", ok,
           f"1:6:1 -> {default}, 2:4:2 -> {r242}, {passed}/{cells} cells ok, {elapsed:.1f}s")


def test_criterion_5_profiler_calibration():
    cfg = ModelConfig()
    rep = profile(cfg, 299)
    store, _ = build(cfg, 0)
    dp = rep.total_params / TARGET_PARAMS - 1
    df = rep.total_flops / TARGET_FLOPS - 1
    tiny_store, _ = build(tiny_config(), 0)
    exact = rep.total_params == store.num_trainable() and profile(tiny_config()).total_params == tiny_store.num_trainable()
    report(5, "profiler calibration", abs(dp) <= 0.10 and exact,
           f"params {rep.total_params:,} ({dp:+.1%} vs 25.2M), FLOPs {rep.total_flops / 1e9:.2f}G "
           f"({df:+.1%} vs 8.22G, informational), store match={exact}")


def test_criterion_6_learning_capacity(trained):
    _, log, elapsed = trained
    tr = [r for r in log if r["split"] == "train"]
    first = next((r["epoch"] for r in tr if r["top1"] == 1.0), None)
    losses = [r["loss"] for r in tr[:10]]
    decreasing = all(b < a for a, b in zip(losses, losses[1:]))
    ok = first is not None and decreasing and elapsed < 900
    report(6, "learning capacity", ok,
           f"100% train top-1 first at epoch {first}, loss epochs 1-10 {losses[0]:.4f} -> {losses[-1]:.4f} "
           f"strictly decreasing={decreasing}, {elapsed:.0f}s")


def test_criterion_7_grad_cam(trained):
    model, _, _ = trained
    ev = bright_quadrant(64, 32, seed=1)
    _, acc, preds = evaluate(model, ev)
    in_range, hits, correct = True, 0, 0
    for i in np.flatnonzero(preds == ev.labels):
        hm = grad_cam(model, ev.images[i], int(ev.labels[i]))
        in_range &= bool(hm.values.min() >= 0 and hm.values.max() <= 1)
        hits += quadrant_of(*hm.argmax(), *hm.shape) == ev.labels[i]
        correct += 1
    frac = hits / max(correct, 1)

    _, probe = build(tiny_config(4), 5)
    img = ev.images[0]
    probe.head.weight.data[3] = 0.0
    dead = not grad_cam(probe, img, 3).values.any()
    a = grad_cam(probe, img, 1).values
    probe.head.weight.data[1] *= 4.25
    scale_err = np.abs(grad_cam(probe, img, 1).values - a).max()

    ok = in_range and dead and scale_err < 1e-10 and correct > 0 and frac >= 0.75
    report(7, "Grad-CAM", ok,
           f"range ok={in_range}, dead class zero={dead}, scale err {scale_err:.1e}, "
           f"argmax in labeled quadrant {hits}/{correct} = {frac:.1%} (need >= 75%), eval top-1 {acc:.3f}")


def test_criterion_8_determinism_and_serialization(tmp_path):
    data = bright_quadrant(16, 32, seed=0)
    blobs, csvs = [], []
    for run in range(2):
        store, model = build(tiny_config(4), 11)
        path = tmp_path / f"m{run}.csv"
        train(model, data, 2, batch_size=8, seed=4, metrics_path=path)
        save_checkpoint(store, tmp_path / f"c{run}.ckpt")
        blobs.append((tmp_path / f"c{run}.ckpt").read_bytes())
        csvs.append(path.read_bytes())
    save_checkpoint(load_checkpoint(tmp_path / "c0.ckpt"), tmp_path / "again.ckpt")
    roundtrip = (tmp_path / "again.ckpt").read_bytes() == blobs[0]
    rejected = 0
    for bad in (b"IIAM" + blobs[0][4:], blobs[0][:-1], blobs[0][: len(blobs[0]) // 2]):
        try:
            ParamStore.from_bytes(bad)
        except FormatError:
            rejected += 1
    ok = blobs[0] == blobs[1] and csvs[0] == csvs[1] and roundtrip and rejected == 3
    report(8, "determinism and serialization", ok,
           f"checkpoints equal={blobs[0] == blobs[1]}, CSVs equal={csvs[0] == csvs[1]}, "
           f"save-load-save equal={roundtrip}, corrupt inputs rejected {rejected}/3")
