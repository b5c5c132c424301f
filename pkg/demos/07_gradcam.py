"""Grad-CAM heatmaps from the toy checkpoint written by 06_train_toy.py.

For each eval image, prints the labeled quadrant, the quadrant of the
heatmap's peak, and writes one PGM per class for the first image.
"""
import numpy as np

from iianet.config import tiny_config
from iianet.data import bright_quadrant, quadrant_of
from iianet.explain import grad_cam, render_pgm
from iianet.model import build, load_checkpoint, load_params
from iianet.training import evaluate

_, model = build(tiny_config(4), 0)
load_params(model, load_checkpoint("toy.ckpt"))
ev = bright_quadrant(16, 32, seed=1)
_, acc, preds = evaluate(model, ev)
print(f"eval top1 {acc:.3f}")

names = ["top-left", "top-right", "bottom-left", "bottom-right"]
hits = 0
for i, (img, label) in enumerate(zip(ev.images, ev.labels)):
    hm = grad_cam(model, img, int(label))
    q = quadrant_of(*hm.argmax(), *hm.shape)
    hits += q == label
    quad_means = [hm.values[r:r + 4, c:c + 4].mean() for r in (0, 4) for c in (0, 4)]
    print(f"image {i:2d} label {names[label]:<12} predicted {names[preds[i]]:<12} "
          f"peak in {names[q]:<12} quadrant means {np.round(quad_means, 2)}")
print(f"peak in labeled quadrant: {hits}/{len(ev)}")

for c in range(4):
    render_pgm(grad_cam(model, ev.images[0], c), f"gradcam_class{c}.pgm")
print("wrote gradcam_class0..3.pgm")
