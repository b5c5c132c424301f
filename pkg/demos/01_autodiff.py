"""Reverse-mode autodiff on the tape, checked against central differences.

Builds a small expression, reads gradients off the tape, then runs the full
finite-difference suite that covers every op with a backward rule.
"""
import numpy as np

from iianet import tensor as T
from iianet.gradcheck import TOLERANCE, gradcheck_suite
from iianet.tensor import Tensor, grad

x = Tensor(np.array([0.5, -1.0, 2.0]), requires_grad=True)
w = Tensor(np.array([[1.0, 2.0, -1.0]]), requires_grad=True)

# loss = sum(sigmoid(w @ x) * x)
loss = T.tsum(T.mul(T.sigmoid(T.matmul(w, T.reshape(x, (3, 1)))), x))
gx, gw = grad(loss, [x, w])
print("loss", loss.item())
print("dloss/dx", gx)
print("dloss/dw", gw)

results = gradcheck_suite(seed=0)
for name, err in results.items():
    print(f"  {name:<36} {err:.2e}")
print(f"worst {max(results.values()):.2e}, tolerance {TOLERANCE}")
