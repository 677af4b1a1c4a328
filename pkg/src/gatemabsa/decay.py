"""Shared gated-decay machinery used by all three recurrent blocks.

The pipeline per head: project queries/keys/values, form scalar input and
forget gate pre-activations per step, accumulate the forget gates in the
log domain into a causal n x n matrix, add the input gate and any extra
gate pre-activations column-wise, stabilize by subtracting the row-wise
maximum before exponentiation, combine with scaled query-key products,
normalize rows by their signed sum plus a small epsilon, and retrieve
hidden states against the values.

Entries above the diagonal and at padded positions are -inf in the log
domain, so they exponentiate to exactly zero; valid rows always keep a
finite diagonal, which guarantees one entry of exactly 1 per row after
stabilization. Everything here is a pure function of its inputs; heads
and batch elements can be evaluated in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

NEAR_ZERO_DENOM = 1e-4


@dataclass
class HeadConfig:
    """Width, head count, and normalizer epsilon shared by all blocks."""

    model_dim: int = 768
    n_heads: int = 6
    eps: float = 1e-6

    def __post_init__(self):
        if self.model_dim % self.n_heads != 0:
            raise ValueError(
                f"model_dim {self.model_dim} not divisible by n_heads {self.n_heads}")
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.n_heads


@dataclass
class QKVProjParams:
    """Projection weights plus per-head scalar input/forget gate weights."""

    w_q: Tensor  # (model_dim, model_dim)
    b_q: Tensor  # (1, model_dim)
    w_k: Tensor
    b_k: Tensor
    w_v: Tensor
    b_v: Tensor
    w_i: Tensor  # (n_heads, 3 * head_dim)
    b_i: Tensor  # (n_heads, 1)
    w_f: Tensor
    b_f: Tensor


def init_qkv(cfg: HeadConfig, rng: np.random.Generator,
             forget_bias: float = 1.0) -> QKVProjParams:
    """Fan-in uniform weights, zero biases, positive initial forget bias."""
    d = cfg.model_dim
    bound = 1.0 / np.sqrt(d)
    gate_bound = 1.0 / np.sqrt(3 * cfg.head_dim)

    def w():
        return Tensor(rng.uniform(-bound, bound, size=(d, d)), requires_grad=True)

    def b():
        return Tensor(np.zeros((1, d)), requires_grad=True)

    return QKVProjParams(
        w_q=w(), b_q=b(), w_k=w(), b_k=b(), w_v=w(), b_v=b(),
        w_i=Tensor(rng.uniform(-gate_bound, gate_bound,
                               size=(cfg.n_heads, 3 * cfg.head_dim)), requires_grad=True),
        b_i=Tensor(np.zeros((cfg.n_heads, 1)), requires_grad=True),
        w_f=Tensor(rng.uniform(-gate_bound, gate_bound,
                               size=(cfg.n_heads, 3 * cfg.head_dim)), requires_grad=True),
        b_f=Tensor(np.full((cfg.n_heads, 1), forget_bias), requires_grad=True),
    )


@dataclass
class DecayMatrices:
    """Snapshot of one head's intermediate matrices (detached copies)."""

    log_forget: np.ndarray   # cumulative log forget, -inf above diagonal
    log_decay: np.ndarray    # log forget plus gate pre-activations
    decay: np.ndarray        # stabilized exponential, in [0, 1]
    combo: np.ndarray        # scaled qk products times decay
    combo_norm: np.ndarray   # row-normalized combination


@dataclass
class CoreResult:
    """Per-head hidden states plus diagnostics from one core run."""

    hidden: list[Tensor] = field(default_factory=list)   # (n, head_dim) per head
    decay: list[DecayMatrices] = field(default_factory=list)
    near_zero_rows: int = 0


def split_heads(x: Tensor, cfg: HeadConfig) -> list[Tensor]:
    """Contiguous column slices of a (n, model_dim) tensor, one per head."""
    hd = cfg.head_dim
    return [ad.narrow(x, 1, h * hd, hd) for h in range(cfg.n_heads)]


def merge_heads(heads: list[Tensor]) -> Tensor:
    return ad.concat(heads, axis=1)


def qkv_project(q_src: Tensor, k_src: Tensor, v_src: Tensor,
                params: QKVProjParams, cfg: HeadConfig
                ) -> list[tuple[Tensor, Tensor, Tensor]]:
    """Per-head query/key/value projections; keys carry the 1/sqrt(head_dim)
    scale so every later consumer (gates included) sees scaled keys."""
    q = ad.matmul(q_src, params.w_q) + params.b_q
    k = ad.scale(ad.matmul(k_src, params.w_k), 1.0 / np.sqrt(cfg.head_dim)) + params.b_k
    v = ad.matmul(v_src, params.w_v) + params.b_v
    qs, ks, vs = split_heads(q, cfg), split_heads(k, cfg), split_heads(v, cfg)
    return list(zip(qs, ks, vs))


def linear_gate(q: Tensor, k: Tensor, v: Tensor, weight_row: Tensor,
                bias: Tensor) -> Tensor:
    """Scalar gate pre-activation per step: w . [q_t | k_t | v_t] + b, (n, 1)."""
    stacked = ad.concat([q, k, v], axis=1)
    return ad.matmul(stacked, ad.transpose(weight_row)) + bias


def gate_preacts(heads: list[tuple[Tensor, Tensor, Tensor]],
                 params: QKVProjParams) -> list[tuple[Tensor, Tensor]]:
    """Input and forget gate pre-activation columns for every head."""
    out = []
    for h, (q, k, v) in enumerate(heads):
        w_i = ad.narrow(params.w_i, 0, h, 1)
        b_i = ad.narrow(params.b_i, 0, h, 1)
        w_f = ad.narrow(params.w_f, 0, h, 1)
        b_f = ad.narrow(params.b_f, 0, h, 1)
        out.append((linear_gate(q, k, v, w_i, b_i), linear_gate(q, k, v, w_f, b_f)))
    return out


def cumulative_log_forget(f: Tensor, pad_mask: np.ndarray) -> Tensor:
    """Causal cumulative log-sigmoid forget matrix from per-step gates.

    Entry (i, j) holds the sum of log sigmoid(f_k) for k from j through i
    inclusive when i >= j and both positions are valid; -inf elsewhere.
    Built from an O(n) prefix array, not a double loop.
    """
    n = f.shape[0]
    ls = ad.log_sigmoid(f)                      # (n, 1)
    prefix = ad.cumsum_rows(ls)                 # (n, 1)
    core = prefix - ad.transpose(prefix) + ad.transpose(ls)
    valid = np.asarray(pad_mask, dtype=bool).reshape(-1)
    keep = np.tril(np.ones((n, n), dtype=bool)) & valid[:, None] & valid[None, :]
    return ad.masked_fill(core, keep, -np.inf)


def combine_decay(log_forget: Tensor, i_gate: Tensor,
                  extra_gates: list[Tensor]) -> Tensor:
    """Add the input gate and extra gate pre-activation columns: entry (i, j)
    gains the gates evaluated at step j. -inf entries stay -inf."""
    total = i_gate
    for extra in extra_gates:
        total = total + extra
    return log_forget + ad.transpose(total)


def stabilize(log_decay: Tensor) -> Tensor:
    """Exponentiate after subtracting each row's finite maximum.

    Valid rows get a maximum entry of exactly 1; fully masked rows (all
    -inf) exponentiate to all zeros.
    """
    return ad.exp(log_decay - ad.row_max_finite(log_decay))


def combination(q: Tensor, k: Tensor, decay: Tensor, cfg: HeadConfig,
                pad_mask: np.ndarray) -> tuple[Tensor, Tensor, int]:
    """Scaled query-key products gated by the decay matrix, then row-wise
    signed-sum normalization.

    Returns (combo, combo_norm, near_zero_rows) where near_zero_rows counts
    valid rows whose denominator magnitude fell below 1e-4; the signed sum
    can approach zero, which is surfaced rather than clamped.
    """
    combo = ad.mul(ad.scale(ad.matmul(q, ad.transpose(k)),
                            1.0 / np.sqrt(cfg.head_dim)), decay)
    row_sums = ad.sum_rows(combo)
    denom = row_sums + cfg.eps
    combo_norm = ad.div(combo, denom)
    valid = np.asarray(pad_mask, dtype=bool).reshape(-1)
    near_zero = int((np.abs(denom.data.reshape(-1)[valid]) < NEAR_ZERO_DENOM).sum())
    return combo, combo_norm, near_zero


def retrieve(combo_norm: Tensor, v: Tensor) -> Tensor:
    """Hidden states: the normalized combination applied to the values."""
    return ad.matmul(combo_norm, v)


def run_core(heads: list[tuple[Tensor, Tensor, Tensor]],
             gates: list[tuple[Tensor, Tensor]],
             extras_per_head: list[list[Tensor]],
             pad_mask: np.ndarray, cfg: HeadConfig,
             collect_decay: bool = False) -> CoreResult:
    """Run the decay pipeline for every head and gather diagnostics."""
    result = CoreResult()
    for (q, k, v), (i_gate, f_gate), extras in zip(heads, gates, extras_per_head):
        log_forget = cumulative_log_forget(f_gate, pad_mask)
        log_decay = combine_decay(log_forget, i_gate, extras)
        decay = stabilize(log_decay)
        combo, combo_norm, near_zero = combination(q, k, decay, cfg, pad_mask)
        result.hidden.append(retrieve(combo_norm, v))
        result.near_zero_rows += near_zero
        if collect_decay:
            result.decay.append(DecayMatrices(
                log_forget=log_forget.data.copy(),
                log_decay=log_decay.data.copy(),
                decay=decay.data.copy(),
                combo=combo.data.copy(),
                combo_norm=combo_norm.data.copy(),
            ))
    return result
