"""Datasets: PPM image folders and a synthetic bright-quadrant generator."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, LoadError
from .tensor import make_rng

# quadrant k: 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right
QUADRANTS = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass
class Dataset:
    images: np.ndarray  # N x 3 x H x W, values in [0, 1]
    labels: np.ndarray  # N, int64
    name: str
    num_classes: int
    class_names: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ContractError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ContractError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.labels)

    def batch(self, idx) -> tuple[np.ndarray, np.ndarray]:
        return self.images[idx], self.labels[idx]


def bright_quadrant(n: int = 64, size: int = 32, seed: int = 0, boost: float = 0.5) -> Dataset:
    """Four-class toy task: class k has quadrant k brighter by ``boost``.

    Background pixels are uniform noise in [0, 0.5); labels cycle 0..3.
    """
    if size % 2:
        raise ContractError(f"bright-quadrant images need an even size, got {size}")
    rng = make_rng(seed)
    images = rng.uniform(0.0, 0.5, size=(n, 3, size, size))
    labels = np.arange(n, dtype=np.int64) % 4
    half = size // 2
    for i, k in enumerate(labels):
        r, c = QUADRANTS[k]
        images[i, :, r * half : (r + 1) * half, c * half : (c + 1) * half] += boost
    np.clip(images, 0.0, 1.0, out=images)
    return Dataset(images, labels, f"bright-quadrant-{seed}", 4, ("q0", "q1", "q2", "q3"))


def quadrant_of(row: int, col: int, height: int, width: int) -> int:
    return QUADRANTS.index((int(row >= height / 2), int(col >= width / 2)))


def _ppm_tokens(blob: bytes, path) -> tuple[int, int, int, int]:
    """Parse a P6 header; returns (width, height, maxval, data offset)."""
    pos, fields = 0, []
    while len(fields) < 4:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace() and blob[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise LoadError(f"{path}: truncated PPM header")
        fields.append(blob[start:pos])
    if fields[0] != b"P6":
        raise LoadError(f"{path}: not a binary PPM (P6), magic {fields[0]!r}")
    try:
        w, h, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise LoadError(f"{path}: non-numeric PPM header") from None
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise LoadError(f"{path}: bad PPM geometry {w}x{h} maxval {maxval}")
    return w, h, maxval, pos + 1


def read_ppm(path: str | Path) -> np.ndarray:
    """Read a P6 PPM as a 3 x H x W float array scaled to [0, 1]."""
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise LoadError(f"cannot read {path}: {e}") from e
    w, h, maxval, off = _ppm_tokens(blob, path)
    dt = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * 3 * dt.itemsize
    if len(blob) - off < need:
        raise LoadError(f"{path}: expected {need} pixel bytes, found {len(blob) - off}")
    px = np.frombuffer(blob, dtype=dt, count=w * h * 3, offset=off).reshape(h, w, 3)
    return px.transpose(2, 0, 1).astype(np.float64) / maxval


def write_ppm(path: str | Path, image: np.ndarray) -> None:
    """Write a 3 x H x W array in [0, 1] as an 8-bit P6 PPM."""
    px = np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8).transpose(1, 2, 0)
    h, w = px.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + px.tobytes())


def load_ppm_dir(root: str | Path) -> Dataset:
    """Class-named subfolders of ``*.ppm`` files, read in lexicographic order."""
    root = Path(root)
    if not root.is_dir():
        raise LoadError(f"dataset directory {root} does not exist")
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not classes:
        raise LoadError(f"{root}: no class subdirectories")
    images, labels = [], []
    for k, cls in enumerate(classes):
        files = sorted((root / cls).glob("*.ppm"))
        if not files:
            raise LoadError(f"{root / cls}: class directory has no .ppm files")
        for f in files:
            img = read_ppm(f)
            if images and img.shape != images[0].shape:
                raise LoadError(f"{f}: size {img.shape[1:]} differs from {images[0].shape[1:]}")
            images.append(img)
            labels.append(k)
    return Dataset(np.stack(images), np.array(labels, dtype=np.int64), root.name, len(classes), tuple(classes))


def load_dataset(source: str, size: int = 32, seed: int = 0, n: int = 64) -> Dataset:
    """``"synth"`` for the bright-quadrant generator, otherwise a PPM directory."""
    if source == "synth":
        return bright_quadrant(n=n, size=size, seed=seed)
    return load_ppm_dir(source)


def save_ppm_dir(dataset: Dataset, root: str | Path) -> None:
    root = Path(root)
    names = dataset.class_names or tuple(str(k) for k in range(dataset.num_classes))
    for name in names:
        (root / name).mkdir(parents=True, exist_ok=True)
    for i, (img, lab) in enumerate(zip(dataset.images, dataset.labels)):
        write_ppm(root / names[lab] / f"{i:05d}.ppm", img)
