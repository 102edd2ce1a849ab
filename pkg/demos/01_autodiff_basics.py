"""Tour of the tensor engine: build a graph, read gradients off the tape,
then fit a tiny regression model with minibatch SGD.

Run with: python3 demos/01_autodiff_basics.py
"""

import numpy as np

from replaycl import SGD, Encoder, TaskHead, Tensor, task_loss, zero_grads

# ----------------------------------------------------------------------
# 1. scalars: d/dx of x^2 * tanh(x) at x = 0.8
# ----------------------------------------------------------------------
x = Tensor(np.array(0.8), requires_grad=True)
y = x.square() * x.tanh()
y.backward()

x_val = 0.8
closed_form = 2 * x_val * np.tanh(x_val) + x_val**2 * (1 - np.tanh(x_val) ** 2)
print("f(x) = x^2 tanh(x) at x=0.8")
print(f"  autodiff gradient: {float(x.grad):.10f}")
print(f"  closed form:       {closed_form:.10f}")

# ----------------------------------------------------------------------
# 2. broadcasting: gradients fold back to the parameter's shape
# ----------------------------------------------------------------------
w = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
batch = Tensor(np.random.default_rng(0).normal(size=(4, 3)))
loss = (batch * w).square().mean()
loss.backward()
print("\nbroadcast parameter of shape", w.data.shape, "gets grad of shape", w.grad.shape)

# ----------------------------------------------------------------------
# 3. a real model: encoder + head trained on noisy linear data
# ----------------------------------------------------------------------
rng = np.random.default_rng(1)
true_map = rng.normal(size=(5, 2))
train_x = rng.normal(size=(200, 5))
train_y = train_x @ true_map + 0.05 * rng.normal(size=(200, 2))

encoder = Encoder(5, [16], (8,), rng=np.random.default_rng(2))
head = TaskHead(8, 2, task_index=1, rng=np.random.default_rng(3))
params = encoder.parameters() + head.parameters()
opt = SGD(params, lr=0.05)

print("\ntraining 2-layer regression, 30 epochs of minibatch SGD")
for epoch in range(30):
    order = rng.permutation(200)
    for start in range(0, 200, 20):
        idx = order[start : start + 20]
        loss = task_loss(encoder, head, train_x[idx], train_y[idx], "mse")
        loss.backward()
        opt.step()
        zero_grads(params)
    if epoch % 10 == 0 or epoch == 29:
        full = task_loss(encoder, head, train_x, train_y, "mse")
        print(f"  epoch {epoch:2d}  mse {float(full.data):.5f}")
