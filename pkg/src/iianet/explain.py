"""Grad-CAM heatmaps over the last iiABlock's feature map, and PGM output."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError
from .model import IiaNet, ParamStore, load_params
from .tensor import Tensor, grad


@dataclass
class Heatmap:
    values: np.ndarray  # H_f x W_f in [0, 1]
    layer: str
    class_index: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def argmax(self) -> tuple[int, int]:
        return tuple(int(i) for i in np.unravel_index(np.argmax(self.values), self.values.shape))


def normalize_map(cam: np.ndarray) -> np.ndarray:
    """Min-max scale a non-negative map to [0, 1]; an all-zero map stays zero."""
    hi, lo = cam.max(), cam.min()
    if hi <= 0:
        return np.zeros_like(cam)
    if hi == lo:
        return np.ones_like(cam)
    return (cam - lo) / (hi - lo)


def grad_cam(model: IiaNet, image: np.ndarray, class_index: int, params: ParamStore | None = None) -> Heatmap:
    """Class activation map for one 3 x H x W image (or a 1 x 3 x H x W batch).

    Channel weights are the spatial mean of d(logit)/d(feature); the map is
    the ReLU of the weighted channel sum, min-max normalized.
    """
    if not 0 <= class_index < model.config.num_classes:
        raise ContractError(f"class index {class_index} outside [0, {model.config.num_classes})")
    if params is not None:
        load_params(model, params)
    x = np.asarray(image, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[0] != 1:
        raise ContractError(f"grad_cam takes a single image, got shape {x.shape}")
    was_training = model.training
    model.eval()
    try:
        logits, feat = model(Tensor._wrap(x), return_features=True)
        (dfeat,) = grad(logits[0, class_index], [feat])
    finally:
        model.train(was_training)
    alpha = dfeat[0].mean(axis=(1, 2))
    cam = np.maximum(np.tensordot(alpha, feat.data[0], axes=1), 0.0)
    last = len(model.config.stages) - 1
    layer = f"stage{last}.eca{model.config.stages[last].blocks - 1}"
    return Heatmap(normalize_map(cam), layer, class_index)


def render_pgm(heatmap: Heatmap | np.ndarray, path: str | Path) -> None:
    """Write the map as an 8-bit binary PGM (P5), values rounded half up."""
    values = heatmap.values if isinstance(heatmap, Heatmap) else np.asarray(heatmap)
    px = np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    h, w = px.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + px.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    """Parse a P5 PGM written by :func:`render_pgm` into a uint8 array."""
    blob = Path(path).read_bytes()
    parts = blob.split(maxsplit=4)
    if len(parts) < 4 or parts[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    header_len = len(b" ".join(parts[:4])) + 1
    data = blob[header_len:]
    if maxval != 255 or len(data) != w * h:
        raise FormatError(f"{path}: expected {w * h} pixels at maxval 255")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w)
