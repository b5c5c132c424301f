"""Model configuration and the ``key = value`` config file format.

A config file is UTF-8 text with one ``key = value`` per line and ``#``
comments.  Keys::

    input_size, stem_channels, num_classes, final_channels, stages
    stage.N.blocks, stage.N.channels          (N is 1-based)
    block.variant, block.ratio, block.dilation, block.expansion
    mhsa.heads, mhsa.registers, mhsa.register_mode, mhsa.rel_pos
    stage.N.<any block.* or mhsa.* key>       (per-stage override)

``stages = K`` truncates the stage list or extends it by repeating the last
stage.  Unknown keys are rejected.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

from .blocks import IiaBlockConfig
from .errors import ConfigError
from .nn import conv_output_size

BLOCK_KEYS = {
    "block.variant": "variant",
    "block.ratio": "ratio",
    "block.dilation": "dilation",
    "block.expansion": "expansion",
    "mhsa.heads": "heads",
    "mhsa.registers": "registers",
    "mhsa.register_mode": "register_mode",
    "mhsa.rel_pos": "rel_pos",
}
TOP_KEYS = ("input_size", "stem_channels", "num_classes", "final_channels")


@dataclass
class StageConfig:
    blocks: int
    channels: int
    overrides: dict = field(default_factory=dict)


@dataclass
class ModelConfig:
    input_size: int = 299
    stem_channels: int = 64
    # calibrated so the parameter total lands near 25.2M; see README
    stages: list[StageConfig] = field(
        default_factory=lambda: [StageConfig(2, c) for c in (128, 256, 512, 1024)]
    )
    num_classes: int = 1000
    final_channels: int | None = None
    block: dict = field(default_factory=dict)

    def block_config(self, stage: int) -> IiaBlockConfig:
        st = self.stages[stage]
        kw = {**self.block, **st.overrides}
        try:
            return IiaBlockConfig(channels=st.channels, **kw)
        except ConfigError as e:
            raise ConfigError(f"stage {stage + 1}: {e}") from None
        except TypeError as e:
            raise ConfigError(f"stage {stage + 1}: bad block setting ({e})") from None

    @property
    def head_channels(self) -> int:
        return self.final_channels or self.stages[-1].channels

    def stage_resolutions(self, size: int | None = None) -> list[int]:
        """Spatial side length seen by each stage (conv arithmetic, so odd sizes round up)."""
        s = conv_output_size(size or self.input_size, 3, 2, 1)
        out = []
        for _ in self.stages:
            out.append(s)
            s = conv_output_size(s, 1, 2, 0)
        return out

    def output_resolution(self, size: int | None = None) -> int:
        return conv_output_size(self.stage_resolutions(size)[-1], 1, 2, 0)

    def validate(self) -> "ModelConfig":
        if not self.stages:
            raise ConfigError("rule 'at least one stage' violated")
        for name in ("input_size", "stem_channels", "num_classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"rule '{name} >= 1' violated")
        if self.input_size < 4:
            raise ConfigError("rule 'input_size >= 4' violated")
        if self.final_channels is not None and self.final_channels < 1:
            raise ConfigError("rule 'final_channels >= 1' violated")
        for i, st in enumerate(self.stages):
            if st.blocks < 1 or st.channels < 1:
                raise ConfigError(f"rule 'stage blocks and channels >= 1' violated at stage {i + 1}")
            self.block_config(i)
        return self

    def check_input_size(self, height: int, width: int) -> None:
        """Every halving must be exact: sides divisible by 2**(1 + stages)."""
        m = 2 ** (1 + len(self.stages))
        if height % m or width % m:
            raise ConfigError(
                f"rule 'input size divisible by 2^(1+stages)={m}' violated by {height}x{width}"
            )

    def copy(self) -> "ModelConfig":
        return copy.deepcopy(self)


def tiny_config(num_classes: int = 10, input_size: int = 32) -> ModelConfig:
    """Two stages of one block each at widths 32 and 64 with 4 heads."""
    return ModelConfig(
        input_size=input_size,
        stem_channels=32,
        stages=[StageConfig(1, 32), StageConfig(1, 64)],
        num_classes=num_classes,
        block={"heads": 4},
    )


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    field_name = BLOCK_KEYS.get(key)
    try:
        if field_name == "ratio":
            parts = raw.replace(".", ":").replace(",", ":").split(":")
            ratio = tuple(int(p) for p in parts)
            if len(ratio) != 3:
                raise ValueError
            return ratio
        if field_name in ("variant", "register_mode"):
            return raw
        if field_name == "rel_pos":
            low = raw.lower()
            if low in ("1", "true", "on", "yes"):
                return True
            if low in ("0", "false", "off", "no"):
                return False
            raise ValueError
        return int(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for key {key!r}") from None


def apply_setting(config: ModelConfig, key: str, raw: str) -> None:
    """Apply one ``key = value`` assignment in place."""
    key = key.strip()
    if key in TOP_KEYS:
        setattr(config, key, _parse_value(key, raw))
    elif key == "stages":
        n = _parse_value(key, raw)
        if n < 1:
            raise ConfigError("rule 'stages >= 1' violated")
        while len(config.stages) < n:
            config.stages.append(copy.deepcopy(config.stages[-1]))
        del config.stages[n:]
    elif key in BLOCK_KEYS:
        config.block[BLOCK_KEYS[key]] = _parse_value(key, raw)
    elif key.startswith("stage."):
        parts = key.split(".", 2)
        if len(parts) != 3 or not parts[1].isdigit():
            raise ConfigError(f"unknown config key {key!r}")
        idx = int(parts[1]) - 1
        if not 0 <= idx < len(config.stages):
            raise ConfigError(f"{key!r}: stage {idx + 1} does not exist (have {len(config.stages)})")
        sub = parts[2]
        st = config.stages[idx]
        if sub in ("blocks", "channels"):
            setattr(st, sub, _parse_value(sub, raw))
        elif sub in BLOCK_KEYS:
            st.overrides[BLOCK_KEYS[sub]] = _parse_value(sub, raw)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    else:
        raise ConfigError(f"unknown config key {key!r}")


def parse_config(text: str, base: ModelConfig | None = None) -> ModelConfig:
    config = (base or ModelConfig()).copy()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        try:
            apply_setting(config, key, value)
        except ConfigError as e:
            raise ConfigError(f"line {lineno}: {e}") from None
    return config


def load_config(path: str | Path, overrides: list[str] | None = None) -> ModelConfig:
    """Read a config file, then apply ``key=value`` overrides left to right."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise OSError(f"cannot read config {path}: {e}") from e
    config = parse_config(text)
    for ov in overrides or []:
        if "=" not in ov:
            raise ConfigError(f"override {ov!r} must be key=value")
        apply_setting(config, *ov.split("=", 1))
    return config.validate()


def format_config(config: ModelConfig) -> str:
    """Serialize a config back into the file format."""
    lines = [
        f"input_size = {config.input_size}",
        f"stem_channels = {config.stem_channels}",
        f"num_classes = {config.num_classes}",
    ]
    if config.final_channels is not None:
        lines.append(f"final_channels = {config.final_channels}")
    lines.append(f"stages = {len(config.stages)}")
    inv = {v: k for k, v in BLOCK_KEYS.items()}

    def fmt(v):
        if isinstance(v, tuple):
            return ":".join(map(str, v))
        if isinstance(v, bool):
            return "on" if v else "off"
        return str(v)

    for f, v in config.block.items():
        lines.append(f"{inv[f]} = {fmt(v)}")
    for i, st in enumerate(config.stages, 1):
        lines.append(f"stage.{i}.blocks = {st.blocks}")
        lines.append(f"stage.{i}.channels = {st.channels}")
        for f, v in st.overrides.items():
            lines.append(f"stage.{i}.{inv[f]} = {fmt(v)}")
    return "\n".join(lines) + "\n"
