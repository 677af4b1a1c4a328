"""Inside one recurrent block: the log-domain decay pipeline, stage by stage.

Each block turns per-step forget gates into a causal cumulative matrix in
log space, adds scalar gate pre-activations column-wise, stabilizes by
row-max subtraction, multiplies with scaled query-key products, and
normalizes rows by their signed sum.
"""

import numpy as np

from gatemabsa.autodiff import Tensor
from gatemabsa.decay import (HeadConfig, combination, combine_decay,
                             cumulative_log_forget, stabilize)

np.set_printoptions(precision=3, suppress=True)
rng = np.random.default_rng(4)
cfg = HeadConfig(model_dim=4, n_heads=1, eps=1e-6)
n = 5
pad = np.array([1.0, 1.0, 1.0, 1.0, 0.0])  # last position is padding

f_gate = Tensor(rng.uniform(-1, 1, (n, 1)))
log_forget = cumulative_log_forget(f_gate, pad)
print("cumulative log-forget (note -inf above the diagonal and at padding):")
print(log_forget.data)

i_gate = Tensor(rng.uniform(-1, 1, (n, 1)))
extra = Tensor(rng.uniform(-1, 1, (n, 1)))  # e.g. an aspect gate column
log_decay = combine_decay(log_forget, i_gate, [extra])

decay = stabilize(log_decay)
print("\nstabilized decay (every valid row has max exactly 1):")
print(decay.data)
print("row maxima:", decay.data.max(axis=1))

q = Tensor(rng.uniform(-1, 1, (n, cfg.head_dim)) * pad[:, None])
k = Tensor(rng.uniform(-1, 1, (n, cfg.head_dim)) * pad[:, None])
combo, combo_norm, near_zero = combination(q, k, decay, cfg, pad)
print("\nnormalized combination (rows sum to about 1 on valid rows):")
print(combo_norm.data)
print("row sums:", combo_norm.data.sum(axis=1))
print("rows with near-zero denominators:", near_zero)

# Shift invariance: adding any per-row constant before stabilization
# leaves the normalized combination unchanged.
shifts = Tensor(rng.uniform(-5, 5, (n, 1)))
from gatemabsa import autodiff as ad
shifted = stabilize(ad.add(log_decay, shifts))
_, shifted_norm, _ = combination(q, k, shifted, cfg, pad)
print("\nmax change after per-row shifts:",
      np.abs(shifted_norm.data - combo_norm.data).max())
