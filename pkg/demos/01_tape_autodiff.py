"""Tour of the reverse-mode tape: build expressions, pull gradients, check one by hand."""

import numpy as np

from mptdeblur import Tape, no_grad
from mptdeblur import tensor as T

rng = np.random.default_rng(0)

# leaf tensors; requires_grad marks them for the tape
x = T.tensor(rng.standard_normal((4, 5)), requires_grad=True)
w = T.tensor(rng.standard_normal((5, 3)) * 0.3, requires_grad=True)
b = T.tensor(np.zeros(3), requires_grad=True)

# ops only record while a tape is open; one step owns one tape
with Tape():
    y = T.linear(x, w, b)
    z = T.gelu(y)
    loss = T.reduce_mean(T.mul(z, z))
    print("loss =", float(loss.data))
    T.backward(loss)
print("x.grad shape", x.grad.shape, " w.grad shape", w.grad.shape)

# finite-difference spot check on one coordinate of w
i, j = 2, 1
h = 1e-6
w64 = w.data.astype(np.float64)


def loss_at(wval):
    xv = x.data.astype(np.float64)
    yv = xv @ wval + b.data
    # same gelu the library uses (tanh form)
    c = np.sqrt(2.0 / np.pi)
    zv = 0.5 * yv * (1.0 + np.tanh(c * (yv + 0.044715 * yv**3)))
    return np.mean(zv * zv)


wp = w64.copy(); wp[i, j] += h
wm = w64.copy(); wm[i, j] -= h
fd = (loss_at(wp) - loss_at(wm)) / (2 * h)
print(f"w.grad[{i},{j}] = {w.grad[i, j]:.8f}   finite diff = {fd:.8f}")

# broadcasting folds gradients back to the leaf shape
a = T.tensor(rng.standard_normal((2, 3, 4)), requires_grad=True)
s = T.tensor(rng.standard_normal((1, 1, 4)), requires_grad=True)
with Tape():
    out = T.reduce_sum(T.mul(a, s))
    T.backward(out)
print("broadcast leaf grad shape:", s.grad.shape, "(matches the leaf, not the product)")

# no_grad suppresses taping even inside an open tape
with Tape(), no_grad():
    q = T.mul(x, x)
print("inside no_grad, result requires_grad =", q.requires_grad)

# grads accumulate across tapes until cleared, like any sgd loop wants
x.grad = None
with Tape():
    T.backward(T.reduce_sum(x))
g_first = x.grad.copy()
with Tape():
    T.backward(T.reduce_sum(T.mul(x, T.tensor(2.0 * np.ones_like(x.data)))))
print("accumulated grad uniform?", np.allclose(x.grad, g_first + 2.0))
