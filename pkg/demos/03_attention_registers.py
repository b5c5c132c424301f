"""Global 2D self-attention with relative positions and register tokens.

Registers take a share of every query's attention mass without changing the
output shape.  The two register modes agree exactly when there are none.
"""
import numpy as np

from iianet.attention import Mhsa2d, Mhsa2dSpec
from iianet.tensor import Tensor, make_rng

x = Tensor(make_rng(0).standard_normal((1, 16, 4, 4)))

for mode in ("appended", "additive"):
    for n in (0, 1, 2, 4):
        att = Mhsa2d(Mhsa2dSpec(16, 4, rel_pos=True, registers=n, register_mode=mode), 4, 4, make_rng(1))
        out, w = att(x, return_weights=True)
        line = f"{mode:<9} N={n}  out {out.shape}  weights {w.shape}  row sums {w.data.sum(-1).min():.15f}"
        if mode == "appended":
            # appended registers are extra key slots; additive ones bias the logits instead
            line += f"  mass on registers {w.data[..., 16:].sum(-1).mean():.4f}"
        print(line)

a = Mhsa2d(Mhsa2dSpec(16, 4, True, 0, "appended"), 4, 4, make_rng(2))(x).data
b = Mhsa2d(Mhsa2dSpec(16, 4, True, 0, "additive"), 4, 4, make_rng(2))(x).data
print("N=0 modes bitwise equal:", np.array_equal(a, b))

# relative positions make the layer sensitive to spatial layout
plain = Mhsa2d(Mhsa2dSpec(16, 4, rel_pos=False), 4, 4, make_rng(3))
rel = Mhsa2d(Mhsa2dSpec(16, 4, rel_pos=True), 4, 4, make_rng(3))
xt = Tensor(x.data.transpose(0, 1, 3, 2))
for name, m in (("no rel-pos", plain), ("rel-pos", rel)):
    gap = np.abs(m(xt).data.transpose(0, 1, 3, 2) - m(x).data).max()
    print(f"{name:<11} transpose-then-attend vs attend-then-transpose: {gap:.2e}")
