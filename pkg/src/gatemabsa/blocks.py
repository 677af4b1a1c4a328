"""The three stacked blocks: multimodal fusion, syntax, and semantics.

Each block runs the shared decay pipeline with its own extra gate
pre-activations added in the log domain:

* the fusion block gates on the pooled aspect vector and the pooled
  projected image vector, each combining a constant linear term with a
  per-step cosine alignment against the queries, sharing one blend scalar;
* the syntax block gates on a dependency-graph signal derived from
  adjacency-masked query similarities plus a graph-smoothed aspect
  embedding;
* the semantic block gates on a pooled query-side aspect embedding with a
  cosine alignment term and a learnable positional-distance penalty.

All extra gates are raw pre-activations, added as-is before stabilization.
Every gate is computed per head from that head's slices. Each block
finishes with dynamic-tanh normalization of the merged heads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .adapter import ModelInputs
from .decay import (CoreResult, HeadConfig, QKVProjParams, gate_preacts,
                    init_qkv, merge_heads, qkv_project, run_core)

GRAPH_MODES = ("row_aggregate", "literal_diag")


@dataclass
class DyTParams:
    """Dynamic-tanh normalizer: scale inside tanh, affine outside."""

    alpha: Tensor  # (1, 1)
    gamma: Tensor  # (1, model_dim)
    beta: Tensor   # (1, model_dim)


def init_dyt(model_dim: int) -> DyTParams:
    return DyTParams(alpha=Tensor(np.full((1, 1), 0.5), requires_grad=True),
                     gamma=Tensor(np.ones((1, model_dim)), requires_grad=True),
                     beta=Tensor(np.zeros((1, model_dim)), requires_grad=True))


@dataclass
class HeadGateParams:
    """Per-head linear weights for one scalar gate family."""

    weight: Tensor  # (n_heads, 3 * head_dim)
    bias: Tensor    # (n_heads, 1)


def init_head_gate(cfg: HeadConfig, rng: np.random.Generator) -> HeadGateParams:
    bound = 1.0 / np.sqrt(3 * cfg.head_dim)
    return HeadGateParams(
        weight=Tensor(rng.uniform(-bound, bound, size=(cfg.n_heads, 3 * cfg.head_dim)),
                      requires_grad=True),
        bias=Tensor(np.zeros((cfg.n_heads, 1)), requires_grad=True))


@dataclass
class FuseParams:
    qkv: QKVProjParams
    aspect_gate: HeadGateParams
    image_gate: HeadGateParams
    blend: Tensor           # shared cosine scale for aspect and image gates
    dyt: DyTParams


@dataclass
class SynParams:
    qkv: QKVProjParams
    graph_gate: HeadGateParams
    graph_scale: Tensor     # scale on the graph signal
    graph_mode: str
    dyt: DyTParams


@dataclass
class SemParams:
    qkv: QKVProjParams
    semantic_gate: HeadGateParams
    blend: Tensor           # cosine scale
    distance_scale: Tensor  # positional penalty scale
    dyt: DyTParams


def init_fuse(cfg: HeadConfig, rng: np.random.Generator) -> FuseParams:
    return FuseParams(qkv=init_qkv(cfg, rng),
                      aspect_gate=init_head_gate(cfg, rng),
                      image_gate=init_head_gate(cfg, rng),
                      blend=Tensor(np.ones((1, 1)), requires_grad=True),
                      dyt=init_dyt(cfg.model_dim))


def init_syn(cfg: HeadConfig, rng: np.random.Generator,
             graph_mode: str = "row_aggregate") -> SynParams:
    if graph_mode not in GRAPH_MODES:
        raise ValueError(f"graph_mode must be one of {GRAPH_MODES}, got {graph_mode!r}")
    return SynParams(qkv=init_qkv(cfg, rng),
                     graph_gate=init_head_gate(cfg, rng),
                     graph_scale=Tensor(np.ones((1, 1)), requires_grad=True),
                     graph_mode=graph_mode,
                     dyt=init_dyt(cfg.model_dim))


def init_sem(cfg: HeadConfig, rng: np.random.Generator) -> SemParams:
    return SemParams(qkv=init_qkv(cfg, rng),
                     semantic_gate=init_head_gate(cfg, rng),
                     blend=Tensor(np.ones((1, 1)), requires_grad=True),
                     distance_scale=Tensor(np.full((1, 1), 0.1), requires_grad=True),
                     dyt=init_dyt(cfg.model_dim))


# -- gate constructions --------------------------------------------------------

def broadcast_vector_gate(q: Tensor, pooled: Tensor, gate: HeadGateParams,
                          head: int, blend: Tensor) -> Tensor:
    """Gate column from a broadcast vector: a constant linear term on the
    tripled vector plus a blend-scaled cosine between each query row and the
    vector. Serves both the aspect and the image gate of the fusion block."""
    w = ad.narrow(gate.weight, 0, head, 1)
    b = ad.narrow(gate.bias, 0, head, 1)
    const = ad.matmul(ad.concat([pooled, pooled, pooled], axis=1), ad.transpose(w)) + b
    return const + blend * ad.rowwise_cosine(q, pooled)


def graph_signal(q: Tensor, adjacency: np.ndarray, pad_mask: np.ndarray,
                 mode: str) -> Tensor:
    """Per-step dependency-graph signal, shape (n, 1).

    row_aggregate (default): the degree-normalized sum over graph neighbours
    of the cosine between the step's query and the neighbour's query,
    restricted to valid positions. literal_diag: the adjacency diagonal
    times the self-cosine, which is constant 1 on valid positions and kept
    only for fidelity.
    """
    valid = np.asarray(pad_mask, dtype=float).reshape(-1)
    if mode == "literal_diag":
        norms = np.sqrt((q.data * q.data).sum(axis=1))
        self_cos = (norms > 1e-8).astype(float)
        return Tensor((np.diag(adjacency) * self_cos * valid).reshape(-1, 1))
    if mode != "row_aggregate":
        raise ValueError(f"unknown graph mode {mode!r}")
    adj_valid = adjacency * np.outer(valid, valid)
    degrees = adj_valid.sum(axis=1)
    inv_deg = np.where(degrees > 0, 1.0 / np.maximum(degrees, 1.0), 0.0)
    norms = ad.safe_row_norms(q)
    cos_pairs = ad.div(ad.matmul(q, ad.transpose(q)),
                       ad.matmul(norms, ad.transpose(norms)))
    weighted = ad.mul(cos_pairs, Tensor(adj_valid))
    return ad.mul(ad.sum_rows(weighted), Tensor(inv_deg.reshape(-1, 1)))


def syn_aspect_embed(q: Tensor, adjacency: np.ndarray, aspect_mask: np.ndarray,
                     pad_mask: np.ndarray) -> Tensor:
    """Aspect embedding for the syntax gate: queries smoothed one step by the
    degree-normalized adjacency, then mean-pooled over the aspect positions
    (over all valid positions when the aspect is implicit)."""
    valid = np.asarray(pad_mask, dtype=float).reshape(-1)
    adj_valid = adjacency * np.outer(valid, valid)
    degrees = adj_valid.sum(axis=1)
    smoother = adj_valid / np.maximum(degrees, 1.0)[:, None]
    smoothed = ad.matmul(Tensor(smoother), q)
    pool_mask = aspect_mask if aspect_mask.sum() > 0 else pad_mask
    return ad.masked_mean_pool(smoothed, pool_mask)


def graph_gate(q: Tensor, a_syn: Tensor, diag_signal: Tensor,
               gate: HeadGateParams, head: int, graph_scale: Tensor) -> Tensor:
    w = ad.narrow(gate.weight, 0, head, 1)
    b = ad.narrow(gate.bias, 0, head, 1)
    const = ad.matmul(ad.concat([a_syn, a_syn, a_syn], axis=1), ad.transpose(w)) + b
    return const + graph_scale * diag_signal


def distance_to_aspect(aspect_mask: np.ndarray, pad_mask: np.ndarray) -> np.ndarray:
    """Normalized token distance to the nearest aspect position, shape (n, 1).

    The minimum absolute index distance is divided by the valid length so
    the penalty scale is length-independent. Implicit aspects (empty mask)
    yield zero everywhere.
    """
    n = len(pad_mask)
    positions = np.nonzero(np.asarray(aspect_mask).reshape(-1) > 0)[0]
    if len(positions) == 0:
        return np.zeros((n, 1))
    n_valid = int(np.asarray(pad_mask).sum())
    idx = np.arange(n)
    dist = np.abs(idx[:, None] - positions[None, :]).min(axis=1) / max(n_valid, 1)
    dist = dist * np.asarray(pad_mask).reshape(-1)
    return dist.reshape(-1, 1)


def semantic_gate(q: Tensor, a_sem: Tensor, distances: np.ndarray,
                  gate: HeadGateParams, head: int, blend: Tensor,
                  distance_scale: Tensor) -> Tensor:
    w = ad.narrow(gate.weight, 0, head, 1)
    b = ad.narrow(gate.bias, 0, head, 1)
    const = ad.matmul(ad.concat([a_sem, a_sem, a_sem], axis=1), ad.transpose(w)) + b
    return (const + blend * ad.rowwise_cosine(q, a_sem)
            - distance_scale * Tensor(distances))


# -- block forwards -------------------------------------------------------------

def _pooled_row(bcast: Tensor) -> Tensor:
    """First row of a broadcast matrix as the pooled 1 x d vector."""
    return ad.narrow(bcast, 0, 0, 1)


def _head_slice(row: Tensor, head: int, head_dim: int) -> Tensor:
    return ad.narrow(row, 1, head * head_dim, head_dim)


def _finish(core: CoreResult, dyt: DyTParams) -> tuple[Tensor, CoreResult]:
    merged = merge_heads(core.hidden)
    return ad.dyt(merged, dyt.alpha, dyt.gamma, dyt.beta), core


def fuse_forward(inputs: ModelInputs, params: FuseParams, cfg: HeadConfig,
                 collect_decay: bool = False) -> tuple[Tensor, CoreResult]:
    """Fusion block: queries and values from the sentence stream, keys from
    the broadcast image stream, aspect and image gates as extras."""
    heads = qkv_project(inputs.sentence, inputs.image_bcast, inputs.sentence,
                        params.qkv, cfg)
    gates = gate_preacts(heads, params.qkv)
    aspect_row = _pooled_row(inputs.aspect_bcast)
    image_row = _pooled_row(inputs.image_bcast)
    extras = []
    for h, (q, _, _) in enumerate(heads):
        a_h = _head_slice(aspect_row, h, cfg.head_dim)
        i_h = _head_slice(image_row, h, cfg.head_dim)
        extras.append([
            broadcast_vector_gate(q, a_h, params.aspect_gate, h, params.blend),
            broadcast_vector_gate(q, i_h, params.image_gate, h, params.blend),
        ])
    core = run_core(heads, gates, extras, inputs.pad_mask, cfg, collect_decay)
    return _finish(core, params.dyt)


def syn_forward(h_fuse: Tensor, inputs: ModelInputs, params: SynParams,
                cfg: HeadConfig, collect_decay: bool = False
                ) -> tuple[Tensor, CoreResult]:
    """Syntax block: all projections from the fused hidden states, one graph
    gate as extra."""
    heads = qkv_project(h_fuse, h_fuse, h_fuse, params.qkv, cfg)
    gates = gate_preacts(heads, params.qkv)
    extras = []
    for h, (q, _, _) in enumerate(heads):
        signal = graph_signal(q, inputs.adjacency, inputs.pad_mask, params.graph_mode)
        a_syn = syn_aspect_embed(q, inputs.adjacency, inputs.aspect_mask,
                                 inputs.pad_mask)
        extras.append([graph_gate(q, a_syn, signal, params.graph_gate, h,
                                  params.graph_scale)])
    core = run_core(heads, gates, extras, inputs.pad_mask, cfg, collect_decay)
    return _finish(core, params.dyt)


def sem_forward(h_syn: Tensor, inputs: ModelInputs, params: SemParams,
                cfg: HeadConfig, collect_decay: bool = False
                ) -> tuple[Tensor, CoreResult]:
    """Semantic block: projections from the syntax hidden states, one
    semantic gate as extra."""
    heads = qkv_project(h_syn, h_syn, h_syn, params.qkv, cfg)
    gates = gate_preacts(heads, params.qkv)
    distances = distance_to_aspect(inputs.aspect_mask, inputs.pad_mask)
    pool_mask = (inputs.aspect_mask if inputs.aspect_mask.sum() > 0
                 else inputs.pad_mask)
    extras = []
    for h, (q, _, _) in enumerate(heads):
        a_sem = ad.masked_mean_pool(q, pool_mask)
        extras.append([semantic_gate(q, a_sem, distances, params.semantic_gate, h,
                                     params.blend, params.distance_scale)])
    core = run_core(heads, gates, extras, inputs.pad_mask, cfg, collect_decay)
    return _finish(core, params.dyt)
