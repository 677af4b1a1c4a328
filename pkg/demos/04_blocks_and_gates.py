"""The three blocks and what their gates respond to.

The fusion block gates on aspect and image alignment, the syntax block on
dependency-graph neighbourhood similarity, and the semantic block on
aspect similarity minus a positional distance penalty. This script runs
all three on one record and probes two gate semantics: the shared blend
scalar and the distance penalty.
"""

import numpy as np

from gatemabsa.adapter import build_inputs, init_image_proj
from gatemabsa.blocks import (distance_to_aspect, fuse_forward, init_fuse,
                              init_sem, init_syn, sem_forward, syn_forward)
from gatemabsa.decay import HeadConfig
from gatemabsa.records import synthesize_records

np.set_printoptions(precision=3, suppress=True)
rng = np.random.default_rng(11)
cfg = HeadConfig(model_dim=8, n_heads=2, eps=1e-6)
record = synthesize_records(seed=11, n_examples=1, n_tokens=6, separation=2.0)[0]

proj = init_image_proj(cfg.model_dim, rng)
inputs = build_inputs(record, proj, 6, cfg.model_dim)
fuse = init_fuse(cfg, rng)
syn = init_syn(cfg, rng)
sem = init_sem(cfg, rng)

h_fuse, fuse_core = fuse_forward(inputs, fuse, cfg, collect_decay=True)
h_syn, _ = syn_forward(h_fuse, inputs, syn, cfg)
h_sem, _ = sem_forward(h_syn, inputs, sem, cfg)
print("hidden state shapes:", h_fuse.shape, h_syn.shape, h_sem.shape)
print("fusion decay matrix, head 0:")
print(fuse_core.decay[0].decay)

# The blend scalar controls how much the cosine terms move the gates.
# With blend = 0 and zero gate weights, swapping the aspect vector cannot
# change the fusion output at all.
fuse.blend.data = np.zeros((1, 1))
fuse.aspect_gate.weight.data[:] = 0.0
before, _ = fuse_forward(inputs, fuse, cfg)
record.aspect_feats = rng.standard_normal(record.aspect_feats.shape)
swapped_inputs = build_inputs(record, proj, 6, cfg.model_dim)
after, _ = fuse_forward(swapped_inputs, fuse, cfg)
print("\nblend 0: max output change after aspect swap:",
      np.abs(before.data - after.data).max())

# The distance penalty is zero at the aspect itself and grows linearly,
# normalized by the valid length.
print("\ndistances to aspect", record.aspect_positions, ":",
      distance_to_aspect(swapped_inputs.aspect_mask,
                         swapped_inputs.pad_mask).reshape(-1))
