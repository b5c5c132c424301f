"""Closed-form parameter and FLOP counts for an iiANET config.

FLOPs are two per multiply-accumulate.  Counted: convolutions
(``2*kh*kw*(Cin/groups)*Cout*H'*W'``), linear layers (``2*in*out``),
attention projections, logits, relative-position logits and the value mix,
batch norm (2 per element) and ECA (pooling, channel mixing, rescale).
Activations, softmax and residual adds are not counted.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .blocks import IiaBlockConfig
from .config import ModelConfig
from .nn import conv_output_size

TARGET_PARAMS = 25.2e6
TARGET_FLOPS = 8.22e9


@dataclass
class ProfileEntry:
    name: str
    params: int
    flops: int


@dataclass
class ProfileReport:
    input_size: int
    entries: list[ProfileEntry] = field(default_factory=list)

    def add(self, name: str, params: int, flops: int) -> None:
        self.entries.append(ProfileEntry(name, int(params), int(flops)))

    @property
    def total_params(self) -> int:
        return sum(e.params for e in self.entries)

    @property
    def total_flops(self) -> int:
        return sum(e.flops for e in self.entries)

    def by_group(self) -> dict[str, tuple[int, int]]:
        """Totals per top-level component (stem, stage0, ..., head)."""
        out: dict[str, tuple[int, int]] = {}
        for e in self.entries:
            key = e.name.split(".", 1)[0]
            p, f = out.get(key, (0, 0))
            out[key] = (p + e.params, f + e.flops)
        return out

    def table(self, detail: bool = False) -> str:
        rows = [f"{'module':<40}{'params':>14}{'FLOPs':>18}"]
        items = [(e.name, e.params, e.flops) for e in self.entries] if detail else [
            (k, p, f) for k, (p, f) in self.by_group().items()
        ]
        for name, p, f in items:
            rows.append(f"{name:<40}{p:>14,}{f:>18,}")
        rows.append(f"{'total':<40}{self.total_params:>14,}{self.total_flops:>18,}")
        return "\n".join(rows)

    def calibration_lines(self) -> list[str]:
        dp = (self.total_params - TARGET_PARAMS) / TARGET_PARAMS
        df = (self.total_flops - TARGET_FLOPS) / TARGET_FLOPS
        return [
            f"params {self.total_params / 1e6:.2f}M vs target 25.2M ({dp:+.1%})",
            f"FLOPs {self.total_flops / 1e9:.2f}G vs target 8.22G ({df:+.1%}) at {self.input_size}x{self.input_size}",
        ]


def conv_cost(cin: int, cout: int, k: int, h: int, w: int, stride: int = 1, pad: int = 0,
              dilation: int = 1, groups: int = 1, bias: bool = False) -> tuple[int, int, int, int]:
    """Returns (params, flops, out_h, out_w)."""
    ho = conv_output_size(h, k, stride, pad, dilation)
    wo = conv_output_size(w, k, stride, pad, dilation)
    params = cout * (cin // groups) * k * k + (cout if bias else 0)
    flops = 2 * k * k * (cin // groups) * cout * ho * wo
    return params, flops, ho, wo


def bn_cost(c: int, h: int, w: int) -> tuple[int, int]:
    return 2 * c, 2 * c * h * w


def linear_cost(fin: int, fout: int, bias: bool = True) -> tuple[int, int]:
    return fin * fout + (fout if bias else 0), 2 * fin * fout


def _conv_bn(report, name, cin, cout, k, h, w, **kw):
    p, f, ho, wo = conv_cost(cin, cout, k, h, w, **kw)
    bp, bf = bn_cost(cout, ho, wo)
    report.add(name, p + bp, f + bf)
    return ho, wo


def attention_cost(c: int, heads: int, h: int, w: int, rel_pos: bool, registers: int, mode: str) -> tuple[int, int]:
    n, d = h * w, c // heads
    params = 4 * c * c + c
    flops = 4 * 2 * n * c * c
    keys = n + (registers if mode == "appended" else 0)
    flops += 2 * (2 * n * keys * c)  # logits and value mix, summed over heads
    if rel_pos:
        params += heads * (2 * h - 1 + 2 * w - 1) * d
        flops += 2 * n * (h + w) * c
    if registers:
        if mode == "appended":
            params += 2 * heads * registers * d
        else:
            params += registers * n * n + registers * d * n
    return params, flops


def eca_cost(c: int, h: int, w: int) -> tuple[int, int]:
    return c * c + c, c * h * w + 2 * c * c + c * h * w


def block_cost(report: ProfileReport, prefix: str, bc: IiaBlockConfig, h: int, w: int) -> None:
    c_dil, c_mb, c_attn = bc.branch_channels()
    if c_dil:
        _conv_bn(report, f"{prefix}.dilated", c_dil, c_dil, 3, h, w, pad=bc.dilation, dilation=bc.dilation)
    if c_mb:
        hid = c_mb * bc.expansion
        _conv_bn(report, f"{prefix}.mbconv.expand", c_mb, hid, 1, h, w)
        _conv_bn(report, f"{prefix}.mbconv.depthwise", hid, hid, 3, h, w, pad=1, groups=hid)
        _conv_bn(report, f"{prefix}.mbconv.project", hid, c_mb, 1, h, w)
    if c_attn:
        p, f = attention_cost(c_attn, bc.attention_heads(), h, w, bc.rel_pos, bc.registers, bc.register_mode)
        report.add(f"{prefix}.mhsa", p, f)


def profile(config: ModelConfig, input_size: int | None = None) -> ProfileReport:
    """Parameter and FLOP counts for one image at ``input_size`` (default: the config's).

    Parameter counts cover trainable tensors only; relative-position tables
    and additive registers are sized for the config's own input size.
    """
    config.validate()
    size = input_size or config.input_size
    report = ProfileReport(size)
    build_res = config.stage_resolutions()
    run_res = config.stage_resolutions(size)
    stages = config.stages
    ho, wo = _conv_bn(report, "stem.conv1", 3, config.stem_channels, 3, size, size, stride=2, pad=1)
    _conv_bn(report, "stem.conv2", config.stem_channels, stages[0].channels, 3, ho, wo, pad=1)
    for i, st in enumerate(stages):
        bc = config.block_config(i)
        r, br = run_res[i], build_res[i]
        for b in range(st.blocks):
            before = len(report.entries)
            block_cost(report, f"stage{i}.block{b}", bc, r, r)
            if bc.rel_pos or (bc.registers and bc.register_mode == "additive"):
                # parameters are fixed at build size even when profiling another size
                for e in report.entries[before:]:
                    if e.name.endswith(".mhsa"):
                        c_attn = bc.branch_channels()[2]
                        e.params = attention_cost(
                            c_attn, bc.attention_heads(), br, br, bc.rel_pos, bc.registers, bc.register_mode
                        )[0]
            p, f = eca_cost(st.channels, r, r)
            report.add(f"stage{i}.eca{b}", p, f)
        out = stages[i + 1].channels if i + 1 < len(stages) else config.head_channels
        _conv_bn(report, f"stage{i}.downsample", st.channels, out, 1, r, r, stride=2)
    p, f = linear_cost(config.head_channels, config.num_classes)
    report.add("head", p, f)
    return report
