"""Branch widths and costs of the iiABlock variants at 64 channels."""
from iianet.ablation import ablation_matrix, format_matrix
from iianet.blocks import IiaBlockConfig
from iianet.config import ModelConfig, StageConfig

for variant in "abcde":
    cfg = IiaBlockConfig(64, variant=variant)
    print(f"variant {variant} ({cfg.variant:<14}) dilated/mbconv/mhsa = {cfg.branch_channels()}")
print("ratio 2:4:2 ->", IiaBlockConfig(64, ratio=(2, 4, 2)).branch_channels())
print("heads 16 on an 8-channel branch use", IiaBlockConfig(64, heads=16).attention_heads(), "heads")

# a one-stage network at 64 channels, swept over variants and register counts
small = ModelConfig(input_size=16, stem_channels=32, stages=[StageConfig(1, 64)], num_classes=4)
print(format_matrix(ablation_matrix(small, {"variant": list("abcde"), "registers": [0, 1, 2, 4]})))
