"""Standard, depthwise and dilated convolution on one feature map.

Shows output shapes, the receptive field of a dilated 3x3 kernel, and that a
dilated kernel matches a zero-inserted dense kernel exactly.
"""
import numpy as np

from iianet.nn import Conv2dSpec, conv2d, depthwise_conv, dilated_conv
from iianet.tensor import Tensor, make_rng

rng = make_rng(0)
x = Tensor(rng.standard_normal((1, 4, 9, 9)))

plain = Conv2dSpec(4, 8, 3, stride=2, padding=1)
depth = Conv2dSpec(4, 4, 3, padding=1, groups=4)
dil = Conv2dSpec(4, 4, 3, padding=2, dilation=2)
for name, spec, fn in (("plain", plain, conv2d), ("depthwise", depth, depthwise_conv), ("dilated", dil, dilated_conv)):
    w = Tensor(rng.standard_normal(spec.weight_shape))
    print(f"{name:<10} weight {spec.weight_shape} -> output {fn(x, spec, w).shape}")

# an impulse shows which outputs one input pixel reaches
impulse = np.zeros((1, 1, 9, 9))
impulse[0, 0, 4, 4] = 1.0
spec = Conv2dSpec(1, 1, 3, padding=2, dilation=2)
hit = conv2d(Tensor(impulse), spec, Tensor(np.ones(spec.weight_shape))).data[0, 0]
print("dilation-2 footprint of one pixel:")
print((hit != 0).astype(int))

w = rng.standard_normal((4, 4, 3, 3))
dense = np.zeros((4, 4, 5, 5))
dense[:, :, ::2, ::2] = w
a = conv2d(x, dil, Tensor(w)).data
b = conv2d(x, Conv2dSpec(4, 4, 5, padding=2), Tensor(dense)).data
print("dilated == zero-inserted 5x5:", np.array_equal(a, b))
