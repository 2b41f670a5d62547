# Reverse-mode autodiff on numpy: build a loss, read gradients off the tape,
# compare one against a finite difference, then fit a tiny regression with Adam.
import numpy as np

from jointslu.autodiff import Adam, Graph, Params, ops

rng = np.random.default_rng(0)
params = Params()
w = params.new("w", rng.normal(size=(3, 1)))
b = params.new("b", np.zeros(1))
x = rng.normal(size=(64, 3))
y = x @ np.array([[1.5], [-2.0], [0.5]]) + 0.3


def loss(g):
    pred = ops.add(ops.matmul(g.constant(x), g.param(w)), g.param(b))
    err = ops.sub(pred, g.constant(y))
    return ops.mean(ops.mul(err, err))


# %% gradient versus a central difference on one coordinate
params.zero_grad()
g = Graph()
g.backward(loss(g))
eps = 1e-6
w.value[0, 0] += eps
up = loss(Graph(grad_enabled=False)).item()
w.value[0, 0] -= 2 * eps
down = loss(Graph(grad_enabled=False)).item()
w.value[0, 0] += eps
print("tape", w.grad[0, 0], "numeric", (up - down) / (2 * eps))

# %% fit
opt = Adam(list(params), lr=0.05)
for step in range(300):
    params.zero_grad()
    g = Graph()
    value = loss(g)
    g.backward(value)
    opt.step()
print("loss", value.item())
print("w", w.value.ravel().round(3), "b", b.value.round(3))
