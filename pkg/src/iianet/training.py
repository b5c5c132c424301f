"""Loss, AdamW and the deterministic train/eval loops."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .data import Dataset
from .errors import ContractError
from .module import Module
from .tensor import Tensor, _record, make_rng, no_grad

CSV_HEADER = "epoch,split,loss,top1\n"


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``."""
    labels = np.asarray(labels, dtype=np.int64)
    b, k = logits.shape
    if labels.shape != (b,) or labels.min() < 0 or labels.max() >= k:
        raise ContractError(f"labels must be {b} ints in [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(b)
    loss = -logp[rows, labels].mean()

    def backward(g):
        d = np.exp(logp)
        d[rows, labels] -= 1.0
        return (d * (g / b),)

    return _record(np.asarray(loss), (logits,), backward, "cross_entropy")


@dataclass
class AdamW:
    """AdamW with decoupled weight decay, bias correction and a constant lr."""

    params: list[Tensor]
    lr: float = 1e-4
    weight_decay: float = 0.05
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.m:
            self.m = [np.zeros_like(p.data) for p in self.params]
            self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads: list[np.ndarray] | None = None) -> None:
        if grads is None:
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adamw_step(self.params, grads, self)


def adamw_step(params: list[Tensor], grads: list[np.ndarray], state: AdamW) -> None:
    """One in-place AdamW update: decay, moment update, bias-corrected step."""
    if len(params) != len(grads):
        raise ContractError(f"{len(params)} params but {len(grads)} grads")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.betas
    c1, c2 = 1.0 - b1**t, 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape or m.shape != p.shape:
            raise ContractError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        p.data *= 1.0 - state.lr * state.weight_decay
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def evaluate(model: Module, dataset: Dataset, batch_size: int = 64) -> tuple[float, float, np.ndarray]:
    """Eval-mode mean loss, top-1 accuracy and predictions."""
    was_training = model.training
    model.eval()
    total, preds = 0.0, []
    with no_grad():
        for s in range(0, len(dataset), batch_size):
            x, y = dataset.batch(slice(s, s + batch_size))
            logits = model(Tensor._wrap(x))
            total += cross_entropy(logits, y).item() * len(y)
            preds.append(logits.data.argmax(axis=1))
    model.train(was_training)
    preds = np.concatenate(preds)
    return total / len(dataset), float((preds == dataset.labels).mean()), preds


def _fmt(v: float) -> str:
    return repr(float(v))


def train(
    model: Module,
    dataset: Dataset,
    epochs: int,
    batch_size: int = 16,
    seed: int = 0,
    lr: float = 1e-4,
    weight_decay: float = 0.05,
    eval_dataset: Dataset | None = None,
    metrics_path: str | Path | None = None,
    on_epoch: Callable[[dict], None] | None = None,
    optimizer: AdamW | None = None,
) -> list[dict]:
    """Minibatch AdamW training with seeded shuffling.

    Each epoch emits a ``train`` row (mean loss/top-1 over the training
    steps, batch norm in train mode) and an ``eval`` row (eval-mode pass over
    ``eval_dataset``, or the training set when it is omitted).
    """
    if len(dataset) == 0:
        raise ContractError("training dataset is empty")
    if not 1 <= batch_size <= len(dataset):
        raise ContractError(f"batch size {batch_size} must be in [1, {len(dataset)}]")
    rng = make_rng(seed)
    opt = optimizer or AdamW(model.parameters(), lr=lr, weight_decay=weight_decay)
    params = opt.params
    eval_dataset = eval_dataset or dataset
    log: list[dict] = []
    if metrics_path is not None:
        metrics_path = Path(metrics_path)
        if not metrics_path.exists() or metrics_path.stat().st_size == 0:
            metrics_path.write_text(CSV_HEADER, encoding="utf-8")
    for epoch in range(1, epochs + 1):
        model.train()
        perm = rng.permutation(len(dataset))
        loss_sum, correct = 0.0, 0
        for s in range(0, len(perm), batch_size):
            x, y = dataset.batch(perm[s : s + batch_size])
            logits = model(Tensor._wrap(x))
            loss = cross_entropy(logits, y)
            for p in params:
                p.grad = None
            loss.backward()
            opt.step([p.grad if p.grad is not None else np.zeros_like(p.data) for p in params])
            loss_sum += loss.item() * len(y)
            correct += int((logits.data.argmax(axis=1) == y).sum())
        ev_loss, ev_acc, _ = evaluate(model, eval_dataset)
        rows = [
            {"epoch": epoch, "split": "train", "loss": loss_sum / len(dataset), "top1": correct / len(dataset)},
            {"epoch": epoch, "split": "eval", "loss": ev_loss, "top1": ev_acc},
        ]
        log.extend(rows)
        if metrics_path is not None:
            with metrics_path.open("a", encoding="utf-8") as f:
                for r in rows:
                    f.write(f"{r['epoch']},{r['split']},{_fmt(r['loss'])},{_fmt(r['top1'])}\n")
        if on_epoch is not None:
            on_epoch(rows)
    return log
