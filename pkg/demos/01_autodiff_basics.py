"""Tour of the tensor engine: build a graph, run backward, check it.

Run from the repository root:  python3 demos/01_autodiff_basics.py
"""

import numpy as np

from empdial import autodiff as ad
from empdial.autodiff import Graph, tensor
from empdial.gradcheck import check_gradients

print("== tensors and forward arithmetic ==")
a = tensor([[1.0, 2.0], [3.0, 4.0]])
b = tensor(np.eye(2))
print("a @ I =\n", ad.matmul(a, b).data)
print("softmax([0, 0]) =", ad.softmax(tensor([0.0, 0.0])).data)
print("softmax([ln 1, ln 3]) =", ad.softmax(tensor(np.log([1.0, 3.0]))).data)

print("\n== a gradient through matmul -> tanh -> sum ==")
rng = np.random.default_rng(0)
x = ad.param((2, 3), rng, scale=0.5)
w = ad.param((3, 3), rng, scale=0.5)
with Graph() as g:
    loss = ad.tsum(ad.tanh(ad.matmul(x, w)))
    g.backward(loss)
print("loss =", loss.item())
print("x.grad =\n", x.grad)

print("\n== repeated backward accumulates; zeroing resets ==")
x.zero_grad()
with Graph() as g:
    loss = ad.tsum(x)
    g.backward(loss)
    once = x.grad.copy()
    g.backward(loss)
print("after two passes grad is doubled:", np.allclose(x.grad, 2 * once))

print("\n== finite differences agree with the tape ==")
x.zero_grad(); w.zero_grad()
mix = tensor(rng.standard_normal((2, 3)))
result = check_gradients(
    lambda: ad.tsum(ad.mul(ad.tanh(ad.matmul(x, w)), mix)),
    {"x": x, "w": w}, name="demo")
print(f"max rel err {result.max_rel_err:.2e} over {result.n_elements} elements "
      f"-> {'ok' if result.passed else 'FAIL'}")
