"""Train the tiny network on the bright-quadrant task, then save it.

Usage: python demos/06_train_toy.py [epochs]   (default 60; ~2.5 s per epoch)
"""
import sys

from iianet.config import tiny_config
from iianet.data import bright_quadrant
from iianet.model import build, save_checkpoint
from iianet.training import train

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 60
data = bright_quadrant(64, 32, seed=0)
store, model = build(tiny_config(4), 0)
print(f"{store.num_trainable():,} parameters, {len(data)} images")


def show(rows):
    tr, ev = rows
    print(f"epoch {tr['epoch']:3d}  train loss {tr['loss']:.4f} top1 {tr['top1']:.3f}  eval top1 {ev['top1']:.3f}")


train(model, data, epochs, batch_size=16, seed=1, on_epoch=show, metrics_path="toy_metrics.csv")
save_checkpoint(store, "toy.ckpt")
print("wrote toy.ckpt and toy_metrics.csv")
