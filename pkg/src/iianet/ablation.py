"""Build-and-forward sweeps over block variants, ratios, heads and registers."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .errors import IianetError
from .model import build
from .profile import profile
from .tensor import Tensor, make_rng, no_grad

AXES = {"variant": "variant", "ratio": "ratio", "heads": "heads", "registers": "registers",
        "register_mode": "register_mode"}


@dataclass
class Cell:
    settings: dict
    ok: bool
    output_shape: tuple | None = None
    params: int = 0
    flops: int = 0
    d_params: int = 0
    d_flops: int = 0
    error: str = ""


def parse_axis(spec: str) -> tuple[str, list]:
    """``"registers=0,1,2,4"`` -> ("registers", [0, 1, 2, 4])."""
    name, _, values = spec.partition("=")
    name = name.strip()
    if name not in AXES or not values:
        raise IianetError(f"bad axis {spec!r}; expected one of {sorted(AXES)} as name=v1,v2")
    out = []
    for v in values.split(","):
        v = v.strip()
        if name in ("heads", "registers"):
            out.append(int(v))
        elif name == "ratio":
            out.append(tuple(int(p) for p in v.replace(".", ":").split(":")))
        else:
            out.append(v)
    return name, out


def ablation_matrix(config: ModelConfig, axes: dict[str, list], forward: bool = True,
                    batch: int = 1, seed: int = 0) -> list[Cell]:
    """Every combination of axis values applied to all blocks of ``config``.

    Cells that fail to build or run are reported, not raised.  Deltas are
    against ``config`` itself.
    """
    base = profile(config)
    names = list(axes)
    cells = []
    for combo in itertools.product(*(axes[n] for n in names)):
        settings = dict(zip(names, combo))
        cfg = config.copy()
        for n, v in settings.items():
            cfg.block[AXES[n]] = v
            for st in cfg.stages:
                st.overrides.pop(AXES[n], None)
        try:
            rep = profile(cfg)
            _, model = build(cfg, seed)
            shape = None
            if forward:
                s = cfg.input_size
                x = Tensor._wrap(make_rng(seed).random((batch, 3, s, s)))
                model.eval()
                with no_grad():
                    y = model(x)
                shape = y.shape
                if shape != (batch, cfg.num_classes) or not np.all(np.isfinite(y.data)):
                    raise IianetError(f"bad output {shape}")
            cells.append(Cell(settings, True, shape, rep.total_params, rep.total_flops,
                              rep.total_params - base.total_params, rep.total_flops - base.total_flops))
        except IianetError as e:
            cells.append(Cell(settings, False, error=str(e)))
    return cells


def format_matrix(cells: list[Cell]) -> str:
    lines = [f"{'cell':<44}{'status':<8}{'params':>12}{'dparams':>12}{'FLOPs':>16}{'dFLOPs':>16}"]
    for c in cells:
        label = " ".join(
            f"{k}={':'.join(map(str, v)) if isinstance(v, tuple) else v}" for k, v in c.settings.items()
        )
        if c.ok:
            lines.append(f"{label:<44}{'pass':<8}{c.params:>12,}{c.d_params:>+12,}{c.flops:>16,}{c.d_flops:>+16,}")
        else:
            lines.append(f"{label:<44}{'FAIL':<8}  {c.error}")
    passed = sum(c.ok for c in cells)
    lines.append(f"{passed}/{len(cells)} cells pass")
    return "\n".join(lines)
