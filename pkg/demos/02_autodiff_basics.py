"""
The reverse-mode tensor engine
==============================

Everything the models train with runs on a small dense-tensor autodiff
engine: build a computation from Tensors, call backward() on a scalar,
and read gradients off the leaves. Central finite differences double-check
the chain rule end to end.
"""

import numpy as np

from qdscale import tensor as T
from qdscale.tensor import Tensor, finite_diff_check

rng = np.random.default_rng(7)

# gradients of a tiny convolution + nonlinearity + reduction pipeline
x = Tensor(rng.normal(size=(1, 2, 6, 6)), requires_grad=True)
kernel = Tensor(0.3 * rng.normal(size=(3, 2, 3, 3)), requires_grad=True)
target = Tensor(rng.normal(size=(1, 3, 6, 6)))

loss = T.mse(T.silu(T.conv2d(x, kernel)), target)
loss.backward()
print("loss %.4f, kernel grad norm %.4f" % (loss.item(), np.linalg.norm(kernel.grad)))

# the analytic gradients agree with central differences to ~1e-6
err = finite_diff_check(
    lambda: T.mse(T.silu(T.conv2d(x, kernel)), target), [x, kernel]
)
print("max relative error vs finite differences: %.2e" % err)

# gradient descent on the kernel alone drives the loss down
for step in range(1, 201):
    x.grad = kernel.grad = None
    loss = T.mse(T.silu(T.conv2d(x, kernel)), target)
    loss.backward()
    kernel.data -= 0.5 * kernel.grad
    if step % 50 == 0:
        print("step %3d  loss %.5f" % (step, loss.item()))

# no_grad() turns off graph building for inference-style code
with T.no_grad():
    out = T.conv2d(x, kernel)
print("inference output tracks no parents:", out._parents == ())
