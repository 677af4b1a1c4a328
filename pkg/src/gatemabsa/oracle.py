"""Slow reference implementation used only by tests.

Every block forward and the end-to-end forward are recomputed here with
explicit per-step, per-head, per-element Python loops over plain floats:
the cumulative log-forget matrix by literal triple summation, gates by
per-step dot products, normalization row by row. No vectorized kernels,
prefix sums, or intermediates are shared with the main path, so agreement
between the two is evidence of correctness rather than a tautology.

No differentiation is supported and dropout is never applied; comparisons
run in eval mode.
"""

from __future__ import annotations

import math

import numpy as np

from .adapter import ModelInputs
from .blocks import FuseParams, SemParams, SynParams
from .decay import HeadConfig
from .model import GateMabsaModel
from .records import FeatureRecord

_NORM_FLOOR = 1e-8


def _log_sigmoid(x: float) -> float:
    if x < 0:
        return x - math.log1p(math.exp(x))
    return -math.log1p(math.exp(-x))


def _dot(a, b) -> float:
    return sum(x * y for x, y in zip(a, b))


def _norm(a) -> float:
    return math.sqrt(sum(x * x for x in a))


def _cos(a, b) -> float:
    return _dot(a, b) / (max(_norm(a), _NORM_FLOOR) * max(_norm(b), _NORM_FLOOR))


def _mat_vec_cols(x, w, bias):
    """Rows of x times weight matrix w (as nested row lists) plus bias."""
    cols = list(zip(*w))
    return [[_dot(row, col) + bias[j] for j, col in enumerate(cols)] for row in x]


def _head_cols(row, head, head_dim):
    return row[head * head_dim:(head + 1) * head_dim]


def _project(x, params, cfg: HeadConfig):
    """Per-head q, k, v lists; keys carry the 1/sqrt(head_dim) scale."""
    w_q, b_q = params.w_q.data.tolist(), params.b_q.data.reshape(-1).tolist()
    w_k, b_k = params.w_k.data.tolist(), params.b_k.data.reshape(-1).tolist()
    w_v, b_v = params.w_v.data.tolist(), params.b_v.data.reshape(-1).tolist()
    q_full = _mat_vec_cols(x, w_q, b_q)
    k_raw = _mat_vec_cols(x, w_k, [0.0] * cfg.model_dim)
    inv = 1.0 / math.sqrt(cfg.head_dim)
    k_full = [[inv * val + b_k[j] for j, val in enumerate(row)] for row in k_raw]
    v_full = _mat_vec_cols(x, w_v, b_v)
    heads = []
    for h in range(cfg.n_heads):
        heads.append((
            [_head_cols(r, h, cfg.head_dim) for r in q_full],
            [_head_cols(r, h, cfg.head_dim) for r in k_full],
            [_head_cols(r, h, cfg.head_dim) for r in v_full],
        ))
    return heads


def _scalar_gates(q, k, v, weight_row, bias):
    return [_dot(weight_row, q[t] + k[t] + v[t]) + bias for t in range(len(q))]


def _core_head(q, k, v, i_gate, f_gate, extras, pad, cfg: HeadConfig):
    """Literal decay pipeline for one head with triple-loop log forgets."""
    n = len(q)
    neg_inf = float("-inf")
    log_decay = [[neg_inf] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if j <= i and pad[i] > 0 and pad[j] > 0:
                acc = 0.0
                for t in range(j, i + 1):
                    acc += _log_sigmoid(f_gate[t])
                total = acc + i_gate[j]
                for extra in extras:
                    total += extra[j]
                log_decay[i][j] = total
    hidden = [[0.0] * cfg.head_dim for _ in range(n)]
    inv = 1.0 / math.sqrt(cfg.head_dim)
    for i in range(n):
        finite = [x for x in log_decay[i] if x != neg_inf]
        row_max = max(finite) if finite else 0.0
        combo = []
        for j in range(n):
            d = math.exp(log_decay[i][j] - row_max)
            combo.append(_dot(q[i], k[j]) * inv * d)
        denom = sum(combo) + cfg.eps
        for j in range(n):
            c_hat = combo[j] / denom
            for dim in range(cfg.head_dim):
                hidden[i][dim] += c_hat * v[j][dim]
    return hidden


def _dyt_rows(rows, dyt):
    alpha = float(dyt.alpha.data[0, 0])
    gamma = dyt.gamma.data.reshape(-1).tolist()
    beta = dyt.beta.data.reshape(-1).tolist()
    return [[gamma[j] * math.tanh(alpha * val) + beta[j]
             for j, val in enumerate(row)] for row in rows]


def _finish(per_head, dyt):
    merged = [sum((head[t] for head in per_head), []) for t in range(len(per_head[0]))]
    return np.array(_dyt_rows(merged, dyt))


def _gate_const(vector, weight_row, bias):
    return _dot(weight_row, vector + vector + vector) + bias


def naive_fuse(inputs: ModelInputs, params: FuseParams, cfg: HeadConfig) -> np.ndarray:
    sent = inputs.sentence.data.tolist()
    image = inputs.image_bcast.data.tolist()
    aspect_row = inputs.aspect_bcast.data[0].tolist()
    image_row = inputs.image_bcast.data[0].tolist()
    pad = inputs.pad_mask.tolist()
    blend = float(params.blend.data[0, 0])
    heads = _project_mixed(sent, image, sent, params.qkv, cfg)
    out_heads = []
    for h, (q, k, v) in enumerate(heads):
        i_gate = _scalar_gates(q, k, v, params.qkv.w_i.data[h].tolist(),
                               float(params.qkv.b_i.data[h, 0]))
        f_gate = _scalar_gates(q, k, v, params.qkv.w_f.data[h].tolist(),
                               float(params.qkv.b_f.data[h, 0]))
        a_head = _head_cols(aspect_row, h, cfg.head_dim)
        i_head = _head_cols(image_row, h, cfg.head_dim)
        a_const = _gate_const(a_head, params.aspect_gate.weight.data[h].tolist(),
                              float(params.aspect_gate.bias.data[h, 0]))
        im_const = _gate_const(i_head, params.image_gate.weight.data[h].tolist(),
                               float(params.image_gate.bias.data[h, 0]))
        a_gate = [a_const + blend * _cos(q[t], a_head) for t in range(len(q))]
        im_gate = [im_const + blend * _cos(q[t], i_head) for t in range(len(q))]
        out_heads.append(_core_head(q, k, v, i_gate, f_gate, [a_gate, im_gate],
                                    pad, cfg))
    return _finish(out_heads, params.dyt)


def _project_mixed(q_src, k_src, v_src, params, cfg: HeadConfig):
    """Like _project but with distinct source streams per projection."""
    w_q, b_q = params.w_q.data.tolist(), params.b_q.data.reshape(-1).tolist()
    w_k, b_k = params.w_k.data.tolist(), params.b_k.data.reshape(-1).tolist()
    w_v, b_v = params.w_v.data.tolist(), params.b_v.data.reshape(-1).tolist()
    q_full = _mat_vec_cols(q_src, w_q, b_q)
    k_raw = _mat_vec_cols(k_src, w_k, [0.0] * cfg.model_dim)
    inv = 1.0 / math.sqrt(cfg.head_dim)
    k_full = [[inv * val + b_k[j] for j, val in enumerate(row)] for row in k_raw]
    v_full = _mat_vec_cols(v_src, w_v, b_v)
    heads = []
    for h in range(cfg.n_heads):
        heads.append((
            [_head_cols(r, h, cfg.head_dim) for r in q_full],
            [_head_cols(r, h, cfg.head_dim) for r in k_full],
            [_head_cols(r, h, cfg.head_dim) for r in v_full],
        ))
    return heads


def _masked_rows_mean(rows, mask):
    picked = [rows[t] for t in range(len(rows)) if mask[t] > 0]
    count = len(picked)
    return [sum(col) / count for col in zip(*picked)]


def naive_syn(h_fuse: np.ndarray, inputs: ModelInputs, params: SynParams,
              cfg: HeadConfig) -> np.ndarray:
    x = np.asarray(h_fuse).tolist()
    pad = inputs.pad_mask.tolist()
    adj = inputs.adjacency.tolist()
    n = len(x)
    aspect = inputs.aspect_mask.tolist()
    pool_mask = aspect if sum(aspect) > 0 else pad
    scale = float(params.graph_scale.data[0, 0])
    heads = _project(x, params.qkv, cfg)
    out_heads = []
    for h, (q, k, v) in enumerate(heads):
        i_gate = _scalar_gates(q, k, v, params.qkv.w_i.data[h].tolist(),
                               float(params.qkv.b_i.data[h, 0]))
        f_gate = _scalar_gates(q, k, v, params.qkv.w_f.data[h].tolist(),
                               float(params.qkv.b_f.data[h, 0]))
        signal = []
        for t in range(n):
            if pad[t] == 0:
                signal.append(0.0)
            elif params.graph_mode == "literal_diag":
                self_cos = 1.0 if _norm(q[t]) > _NORM_FLOOR else 0.0
                signal.append(adj[t][t] * self_cos)
            else:
                num, deg = 0.0, 0.0
                for j in range(n):
                    if pad[j] > 0 and adj[t][j] > 0:
                        num += adj[t][j] * _cos(q[t], q[j])
                        deg += adj[t][j]
                signal.append(num / deg if deg > 0 else 0.0)
        smoothed = []
        for t in range(n):
            deg = sum(adj[t][j] for j in range(n) if pad[j] > 0) if pad[t] > 0 else 0.0
            row = [0.0] * cfg.head_dim
            if deg > 0:
                for j in range(n):
                    if pad[j] > 0 and adj[t][j] > 0:
                        for dim in range(cfg.head_dim):
                            row[dim] += adj[t][j] * q[j][dim] / deg
            smoothed.append(row)
        a_syn = _masked_rows_mean(smoothed, pool_mask)
        const = _gate_const(a_syn, params.graph_gate.weight.data[h].tolist(),
                            float(params.graph_gate.bias.data[h, 0]))
        g_gate = [const + scale * signal[t] for t in range(n)]
        out_heads.append(_core_head(q, k, v, i_gate, f_gate, [g_gate], pad, cfg))
    return _finish(out_heads, params.dyt)


def naive_sem(h_syn: np.ndarray, inputs: ModelInputs, params: SemParams,
              cfg: HeadConfig) -> np.ndarray:
    x = np.asarray(h_syn).tolist()
    pad = inputs.pad_mask.tolist()
    aspect = inputs.aspect_mask.tolist()
    pool_mask = aspect if sum(aspect) > 0 else pad
    n = len(x)
    n_valid = int(sum(pad))
    positions = [t for t in range(n) if aspect[t] > 0]
    dist = []
    for t in range(n):
        if not positions or pad[t] == 0:
            dist.append(0.0)
        else:
            dist.append(min(abs(t - p) for p in positions) / max(n_valid, 1))
    blend = float(params.blend.data[0, 0])
    alpha = float(params.distance_scale.data[0, 0])
    heads = _project(x, params.qkv, cfg)
    out_heads = []
    for h, (q, k, v) in enumerate(heads):
        i_gate = _scalar_gates(q, k, v, params.qkv.w_i.data[h].tolist(),
                               float(params.qkv.b_i.data[h, 0]))
        f_gate = _scalar_gates(q, k, v, params.qkv.w_f.data[h].tolist(),
                               float(params.qkv.b_f.data[h, 0]))
        a_sem = _masked_rows_mean(q, pool_mask)
        const = _gate_const(a_sem, params.semantic_gate.weight.data[h].tolist(),
                            float(params.semantic_gate.bias.data[h, 0]))
        s_gate = [const + blend * _cos(q[t], a_sem) - alpha * dist[t]
                  for t in range(n)]
        out_heads.append(_core_head(q, k, v, i_gate, f_gate, [s_gate], pad, cfg))
    return _finish(out_heads, params.dyt)


def naive_model(record: FeatureRecord, model: GateMabsaModel,
                n_max: int | None = None) -> np.ndarray:
    """Eval-mode end-to-end logits recomputed with loops from the raw record."""
    cfg = model.cfg
    d = cfg.model_dim
    if n_max is None:
        n_max = record.n_tokens
    n_valid = min(record.n_tokens, n_max)
    sent = [[0.0] * d for _ in range(n_max)]
    for t in range(n_valid):
        for j in range(d):
            sent[t][j] = float(record.token_feats[t, j])
    pad = [1.0 if t < n_valid else 0.0 for t in range(n_max)]
    kept = [p for p in record.aspect_positions if p < n_valid]
    aspect_mask = [1.0 if t in kept else 0.0 for t in range(n_max)]
    adjacency = [[float(record.adjacency[i, j]) if i < n_valid and j < n_valid else 0.0
                  for j in range(n_max)] for i in range(n_max)]

    a_rows = record.aspect_feats.shape[0]
    aspect_row = [sum(float(record.aspect_feats[r, j]) for r in range(a_rows)) / a_rows
                  for j in range(d)]

    w_img = model.image_proj.weight.data.tolist()
    b_img = model.image_proj.bias.data.reshape(-1).tolist()
    img_cols = list(zip(*w_img))
    cells = record.image_grid.tolist()
    projected = [[_dot(cell, img_cols[j]) + b_img[j] for j in range(d)]
                 for cell in cells]
    image_row = [sum(cell[j] for cell in projected) / len(projected) for j in range(d)]

    class _Plain:
        pass

    inputs = _Plain()
    inputs.sentence = _Wrap(np.array(sent))
    inputs.aspect_bcast = _Wrap(np.array([aspect_row] * n_max))
    inputs.image_bcast = _Wrap(np.array([image_row] * n_max))
    inputs.pad_mask = np.array(pad)
    inputs.aspect_mask = np.array(aspect_mask)
    inputs.adjacency = np.array(adjacency)

    h_fuse = naive_fuse(inputs, model.fuse, cfg)
    h_syn = naive_syn(h_fuse, inputs, model.syn, cfg)
    h_sem = naive_sem(h_syn, inputs, model.sem, cfg)

    rows = h_sem.tolist()
    pooled = _masked_rows_mean(rows, pad)
    w_p = model.classifier.weight.data.tolist()
    b_p = model.classifier.bias.data.reshape(-1).tolist()
    p_cols = list(zip(*w_p))
    return np.array([_dot(pooled, p_cols[c]) + b_p[c] for c in range(len(b_p))])


class _Wrap:
    """Bare container exposing ``data`` like the main path's tensors."""

    def __init__(self, data: np.ndarray):
        self.data = data
