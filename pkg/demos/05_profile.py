"""Parameter and FLOP counts of the default 299x299 network."""
from iianet.config import ModelConfig
from iianet.model import build
from iianet.profile import profile

cfg = ModelConfig()
rep = profile(cfg)
print(rep.table())
print("\n".join(rep.calibration_lines()))
print("stage resolutions at 299:", cfg.stage_resolutions())

store, _ = build(cfg, 0)
print("ParamStore trainable elements:", f"{store.num_trainable():,}", "== profile:", store.num_trainable() == rep.total_params)

# where the FLOPs go: attention at stride-2 resolution dominates
detail = profile(cfg)
attn = sum(e.flops for e in detail.entries if e.name.endswith("mhsa"))
print(f"attention share of FLOPs: {attn / detail.total_flops:.1%}")
