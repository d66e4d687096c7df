# %% [markdown]
# # Tape autodiff and Adam on a tiny regression
#
# Every op the LSTM uses is a method on `Tape`. Recording a forward pass and
# calling `backward` gives gradients keyed by parameter name.

# %%
import numpy as np

from liferec.numcore import AdamState, Tape, adam_step, backward, finite_difference_grad

rng = np.random.default_rng(0)
X = rng.normal(size=(64, 3))
w_true = np.array([[1.5], [-2.0], [0.5]])
y = X @ w_true

params = {"w": np.zeros((3, 1))}


def loss_and_grad(p):
    tape = Tape()
    w = tape.param(p["w"], "w")
    err = tape.sub(tape.matmul(tape.const(X), w), tape.const(y))
    loss = tape.scale(tape.sum(tape.mul(err, err)), 1 / len(X))
    return loss.value.item(), backward(tape, loss)


# %% gradients agree with central differences
loss, grads = loss_and_grad(params)
fd = finite_difference_grad(lambda: loss_and_grad(params)[0], params["w"])
print("tape:", grads["w"].ravel())
print("fd:  ", fd.ravel())

# %% a few hundred Adam steps recover the weights
state = AdamState(lr=0.05)
for step in range(300):
    loss, grads = loss_and_grad(params)
    adam_step(params, grads, state)
print(f"loss {loss:.2e}, w = {params['w'].ravel().round(4)}")
