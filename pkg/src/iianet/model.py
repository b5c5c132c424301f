"""Full network assembly, parameter store and checkpoint format."""
from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .blocks import Downsample, Eca, IiaBlock, Stem
from .config import ModelConfig
from .errors import FormatError
from .module import Module, is_buffer
from .nn import Linear, global_avg_pool
from .tensor import Tensor, make_rng, reshape

MAGIC = b"IIAN"
VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class Stage(Module):
    """``blocks`` iiABlocks, each followed by ECA, then a stride-2 downsample."""

    def __init__(self, config: ModelConfig, index: int, out_channels: int, rng):
        super().__init__()
        bc = config.block_config(index)
        res = config.stage_resolutions()[index]
        self.num_blocks = config.stages[index].blocks
        for b in range(self.num_blocks):
            self.add_module(f"block{b}", IiaBlock(bc, res, res, rng))
            self.add_module(f"eca{b}", Eca(bc.channels, rng))
        self.downsample = Downsample(bc.channels, out_channels, rng)

    def features(self, x):
        for b in range(self.num_blocks):
            x = getattr(self, f"eca{b}")(getattr(self, f"block{b}")(x))
        return x

    def forward(self, x):
        return self.downsample(self.features(x))


class IiaNet(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        st = config.stages
        self.stem = Stem(st[0].channels, rng, mid_channels=config.stem_channels)
        for i in range(len(st)):
            out = st[i + 1].channels if i + 1 < len(st) else config.head_channels
            self.add_module(f"stage{i}", Stage(config, i, out, rng))
        self.head = Linear(config.head_channels, config.num_classes, rng)

    @property
    def stages(self) -> list[Stage]:
        return [getattr(self, f"stage{i}") for i in range(len(self.config.stages))]

    def forward(self, x: Tensor, return_features: bool = False):
        """Logits for a B x 3 x S x S batch.

        With ``return_features`` also returns the last stage's final
        post-ECA feature map (before the closing downsample and pooling).
        """
        self.config.check_input_size(x.shape[2], x.shape[3])
        x = self.stem(x)
        feat = None
        for stage in self.stages:
            feat = stage.features(x)
            x = stage.downsample(feat)
        pooled = reshape(global_avg_pool(x), (x.shape[0], x.shape[1]))
        logits = self.head(pooled)
        return (logits, feat) if return_features else logits


class ParamStore(OrderedDict):
    """Ordered map from dotted parameter path to :class:`Tensor`.

    Running batch-norm statistics are stored alongside the trainable
    parameters; :meth:`num_trainable` leaves them out.
    """

    @classmethod
    def from_module(cls, module: Module) -> "ParamStore":
        store = cls()
        for name, p in module.named_parameters():
            store[name] = p
        for name, b in module.named_buffers():
            store[name] = Tensor._wrap(b)
        return store

    def num_trainable(self) -> int:
        return sum(t.size for n, t in self.items() if not is_buffer(n))

    def num_elements(self) -> int:
        return sum(t.size for t in self.values())

    def to_bytes(self, dtype: str = "f64") -> bytes:
        code = {"f32": 0, "f64": 1}[dtype]
        out = [MAGIC, struct.pack("<II", VERSION, len(self))]
        for name, t in self.items():
            raw = name.encode("utf-8")
            out.append(struct.pack("<I", len(raw)))
            out.append(raw)
            out.append(struct.pack("<BB", code, t.ndim))
            out.append(struct.pack(f"<{t.ndim}I", *t.shape))
            out.append(np.ascontiguousarray(t.data, dtype=DTYPES[code]).tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ParamStore":
        view = memoryview(blob)
        pos = 0

        def read(n: int, what: str) -> memoryview:
            nonlocal pos
            if pos + n > len(view):
                raise FormatError(f"truncated checkpoint while reading {what} at byte {pos}")
            chunk = view[pos : pos + n]
            pos += n
            return chunk

        if bytes(read(4, "magic")) != MAGIC:
            raise FormatError(f"bad magic {bytes(view[:4])!r}, expected {MAGIC!r}")
        version, count = struct.unpack("<II", read(8, "header"))
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}, expected {VERSION}")
        store = cls()
        for i in range(count):
            (nlen,) = struct.unpack("<I", read(4, f"name length of tensor {i}"))
            try:
                name = bytes(read(nlen, f"name of tensor {i}")).decode("utf-8")
            except UnicodeDecodeError:
                raise FormatError(f"tensor {i} name is not valid UTF-8") from None
            if name in store:
                raise FormatError(f"duplicate tensor name {name!r}")
            code, ndim = struct.unpack("<BB", read(2, f"dtype of {name!r}"))
            if code not in DTYPES:
                raise FormatError(f"tensor {name!r} has unknown dtype code {code}")
            dims = struct.unpack(f"<{ndim}I", read(4 * ndim, f"dims of {name!r}"))
            if any(d < 1 for d in dims):
                raise FormatError(f"tensor {name!r} has a zero dimension {dims}")
            dt = DTYPES[code]
            nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
            data = np.frombuffer(read(nbytes, f"data of {name!r}"), dtype=dt).reshape(dims)
            store[name] = Tensor._wrap(data.astype(np.float64))
        if pos != len(view):
            raise FormatError(f"{len(view) - pos} trailing bytes after {count} tensors")
        return store


def build(config: ModelConfig, rng: np.random.Generator | int = 0) -> tuple[ParamStore, IiaNet]:
    """Validate ``config`` and initialize a network from a seed or generator."""
    config.validate()
    if not isinstance(rng, np.random.Generator):
        rng = make_rng(int(rng))
    model = IiaNet(config, rng)
    return ParamStore.from_module(model), model


def load_params(model: Module, store: ParamStore, strict: bool = True) -> None:
    """Copy values from ``store`` into the model's parameters and buffers in place."""
    own = ParamStore.from_module(model)
    if strict:
        missing = set(own) - set(store)
        extra = set(store) - set(own)
        if missing or extra:
            raise FormatError(f"checkpoint mismatch: missing {sorted(missing)[:5]}, unexpected {sorted(extra)[:5]}")
    for name, t in own.items():
        if name not in store:
            continue
        src = store[name]
        if src.shape != t.shape:
            raise FormatError(f"{name}: checkpoint shape {src.shape} != model shape {t.shape}")
        t.data[...] = src.data


def save_checkpoint(store: ParamStore, path: str | Path, dtype: str = "f64") -> None:
    Path(path).write_bytes(store.to_bytes(dtype))


def load_checkpoint(path: str | Path) -> ParamStore:
    return ParamStore.from_bytes(Path(path).read_bytes())
