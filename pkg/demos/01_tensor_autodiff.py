"""A walk through the tensor engine: forward ops, the tape, and gradients.

Everything in this package runs on 2-d float64 tensors with reverse-mode
differentiation. This script builds a small expression, differentiates it,
and cross-checks one gradient against central finite differences.
"""

import numpy as np

from gatemabsa import autodiff as ad
from gatemabsa.autodiff import Tensor

rng = np.random.default_rng(0)

# Leaves that want gradients are marked requires_grad.
w = Tensor(rng.uniform(-1, 1, (3, 4)), requires_grad=True)
x = Tensor(rng.uniform(-1, 1, (4, 2)))

# Ops compose like numpy; each call records the tape.
hidden = ad.tanh(w @ x)                      # (3, 2)
score = ad.sum_all(ad.mul(hidden, hidden))   # scalar, shape (1, 1)
print("score:", score.item())

# One backward call accumulates d(score)/d(leaf) into every leaf.
score.backward()
print("gradient shape:", w.grad.shape)

# Cross-check a single entry with central differences.
h = 1e-5
orig = w.data[1, 2]
w.data[1, 2] = orig + h
up = ad.sum_all(ad.mul(ad.tanh(w @ x), ad.tanh(w @ x))).item()
w.data[1, 2] = orig - h
down = ad.sum_all(ad.mul(ad.tanh(w @ x), ad.tanh(w @ x))).item()
w.data[1, 2] = orig
fd = (up - down) / (2 * h)
print(f"analytic {w.grad[1, 2]:+.8f} vs finite difference {fd:+.8f}")

# The stable log-sigmoid never underflows to -inf for finite input.
extreme = Tensor([[-1000.0, 0.0, 1000.0]])
print("log_sigmoid at extremes:", ad.log_sigmoid(extreme).data)

# Cosine similarity guards zero vectors instead of dividing by zero.
print("cos(0, v) =", ad.cosine_sim(Tensor([[0.0, 0.0]]), Tensor([[3.0, 4.0]])).item())
