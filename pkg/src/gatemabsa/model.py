"""End-to-end classifier: adapters, the three blocks, pooling, and the head.

A forward pass builds the input streams for one record, runs the fusion,
syntax, and semantic blocks in order, mean-pools the final hidden states
over valid positions, and maps the pooled vector to three class logits.
Dropout is applied at exactly two kinds of sites in train mode: each
block's normalized output and the pooled vector.

Checkpoints use the GMWT binary format: magic "GMWT", version, the head
configuration (model_dim, n_heads, eps), then every tensor as
(name length, name, rank, dims, float64 little-endian data) in the fixed
order produced by ``named_parameters``, followed by one non-trainable
"syn.graph_mode" entry encoding the graph-gate mode. The dropout rate is a
training-time setting and is not stored.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .adapter import ImageProjParams, build_inputs, init_image_proj
from .blocks import (GRAPH_MODES, FuseParams, SemParams, SynParams, fuse_forward,
                     init_fuse, init_sem, init_syn, sem_forward, syn_forward)
from .decay import HeadConfig
from .records import NUM_CLASSES, FeatureRecord

CHECKPOINT_MAGIC = b"GMWT"
CHECKPOINT_VERSION = 1


@dataclass
class ClassifierParams:
    weight: Tensor  # (model_dim, 3)
    bias: Tensor    # (1, 3)


@dataclass
class GateMabsaModel:
    image_proj: ImageProjParams
    fuse: FuseParams
    syn: SynParams
    sem: SemParams
    classifier: ClassifierParams
    cfg: HeadConfig
    dropout_p: float = 0.5


@dataclass
class ForwardDiagnostics:
    near_zero_rows: int = 0
    aspect_truncated: bool = False
    decay: dict[str, list] = field(default_factory=dict)  # block name -> per-head DecayMatrices


def init_model(cfg: HeadConfig, seed: int, dropout_p: float = 0.5,
               graph_mode: str = "row_aggregate") -> GateMabsaModel:
    """Deterministic initialization; the generator is consumed in a fixed
    order, so a seed fully determines every weight."""
    if not 0.0 <= dropout_p < 1.0:
        raise ValueError(f"dropout_p must be in [0, 1), got {dropout_p}")
    rng = np.random.default_rng(seed)
    image_proj = init_image_proj(cfg.model_dim, rng)
    fuse = init_fuse(cfg, rng)
    syn = init_syn(cfg, rng, graph_mode=graph_mode)
    sem = init_sem(cfg, rng)
    bound = 1.0 / np.sqrt(cfg.model_dim)
    classifier = ClassifierParams(
        weight=Tensor(rng.uniform(-bound, bound, size=(cfg.model_dim, NUM_CLASSES)),
                      requires_grad=True),
        bias=Tensor(np.zeros((1, NUM_CLASSES)), requires_grad=True))
    return GateMabsaModel(image_proj=image_proj, fuse=fuse, syn=syn, sem=sem,
                          classifier=classifier, cfg=cfg, dropout_p=dropout_p)


def _qkv_entries(prefix: str, qkv) -> list[tuple[str, Tensor]]:
    return [(f"{prefix}.w_q", qkv.w_q), (f"{prefix}.b_q", qkv.b_q),
            (f"{prefix}.w_k", qkv.w_k), (f"{prefix}.b_k", qkv.b_k),
            (f"{prefix}.w_v", qkv.w_v), (f"{prefix}.b_v", qkv.b_v),
            (f"{prefix}.w_i", qkv.w_i), (f"{prefix}.b_i", qkv.b_i),
            (f"{prefix}.w_f", qkv.w_f), (f"{prefix}.b_f", qkv.b_f)]


def _dyt_entries(prefix: str, dyt) -> list[tuple[str, Tensor]]:
    return [(f"{prefix}.alpha", dyt.alpha), (f"{prefix}.gamma", dyt.gamma),
            (f"{prefix}.beta", dyt.beta)]


def named_parameters(model: GateMabsaModel) -> list[tuple[str, Tensor]]:
    """Every trainable tensor in a fixed, documented order."""
    entries: list[tuple[str, Tensor]] = [
        ("image_proj.weight", model.image_proj.weight),
        ("image_proj.bias", model.image_proj.bias),
    ]
    entries += _qkv_entries("fuse.qkv", model.fuse.qkv)
    entries += [("fuse.aspect_gate.weight", model.fuse.aspect_gate.weight),
                ("fuse.aspect_gate.bias", model.fuse.aspect_gate.bias),
                ("fuse.image_gate.weight", model.fuse.image_gate.weight),
                ("fuse.image_gate.bias", model.fuse.image_gate.bias),
                ("fuse.blend", model.fuse.blend)]
    entries += _dyt_entries("fuse.dyt", model.fuse.dyt)
    entries += _qkv_entries("syn.qkv", model.syn.qkv)
    entries += [("syn.graph_gate.weight", model.syn.graph_gate.weight),
                ("syn.graph_gate.bias", model.syn.graph_gate.bias),
                ("syn.graph_scale", model.syn.graph_scale)]
    entries += _dyt_entries("syn.dyt", model.syn.dyt)
    entries += _qkv_entries("sem.qkv", model.sem.qkv)
    entries += [("sem.semantic_gate.weight", model.sem.semantic_gate.weight),
                ("sem.semantic_gate.bias", model.sem.semantic_gate.bias),
                ("sem.blend", model.sem.blend),
                ("sem.distance_scale", model.sem.distance_scale)]
    entries += _dyt_entries("sem.dyt", model.sem.dyt)
    entries += [("classifier.weight", model.classifier.weight),
                ("classifier.bias", model.classifier.bias)]
    return entries


def zero_grads(model: GateMabsaModel) -> None:
    for _, p in named_parameters(model):
        p.zero_grad()


def forward(model: GateMabsaModel, record: FeatureRecord, mode: str = "eval",
            rng_seed: int = 0, n_max: int | None = None,
            collect_decay: bool = False) -> tuple[Tensor, ForwardDiagnostics]:
    """Run the full network on one record; returns (logits 1x3, diagnostics).

    ``n_max`` pads or truncates to a fixed length (defaults to the record's
    own length; padded positions never influence the logits). Train mode
    applies dropout driven by ``rng_seed``; eval mode is deterministic.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if record.n_tokens < 1:
        raise ValueError("record has no tokens")
    train = mode == "train"
    rng = np.random.default_rng(rng_seed) if train else None
    if n_max is None:
        n_max = record.n_tokens
    inputs = build_inputs(record, model.image_proj, n_max, model.cfg.model_dim)
    diag = ForwardDiagnostics(aspect_truncated=inputs.aspect_truncated)

    def run_block(fn, x, params, name):
        h, core = (fn(inputs, params, model.cfg, collect_decay) if x is None
                   else fn(x, inputs, params, model.cfg, collect_decay))
        diag.near_zero_rows += core.near_zero_rows
        if collect_decay:
            diag.decay[name] = core.decay
        return ad.dropout(h, model.dropout_p, rng, train)

    h_fuse = run_block(fuse_forward, None, model.fuse, "fuse")
    h_syn = run_block(syn_forward, h_fuse, model.syn, "syn")
    h_sem = run_block(sem_forward, h_syn, model.sem, "sem")

    pooled = ad.masked_mean_pool(h_sem, inputs.pad_mask)
    pooled = ad.dropout(pooled, model.dropout_p, rng, train)
    logits = ad.matmul(pooled, model.classifier.weight) + model.classifier.bias
    return logits, diag


def loss_for_record(model: GateMabsaModel, record: FeatureRecord,
                    mode: str = "eval", rng_seed: int = 0,
                    n_max: int | None = None) -> tuple[Tensor, ForwardDiagnostics]:
    logits, diag = forward(model, record, mode, rng_seed, n_max)
    return ad.softmax_cross_entropy(logits, record.label), diag


def predict(model: GateMabsaModel, record: FeatureRecord,
            n_max: int | None = None) -> tuple[int, np.ndarray]:
    """Class index and probability triple; ties break to the lowest index."""
    logits, _ = forward(model, record, mode="eval", n_max=n_max)
    probs = ad.softmax_probs(logits.data)
    return int(np.argmax(probs)), probs


# -- checkpoints ----------------------------------------------------------------

def _checkpoint_entries(model: GateMabsaModel) -> list[tuple[str, np.ndarray]]:
    entries = [(name, p.data) for name, p in named_parameters(model)]
    mode_flag = float(GRAPH_MODES.index(model.syn.graph_mode))
    entries.append(("syn.graph_mode", np.array([[mode_flag]])))
    return entries


def checkpoint_bytes(model: GateMabsaModel) -> bytes:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<III", CHECKPOINT_VERSION, model.cfg.model_dim,
                          model.cfg.n_heads))
    buf.write(struct.pack("<d", model.cfg.eps))
    entries = _checkpoint_entries(model)
    buf.write(struct.pack("<I", len(entries)))
    for name, data in entries:
        name_bytes = name.encode("utf-8")
        buf.write(struct.pack("<I", len(name_bytes)))
        buf.write(name_bytes)
        buf.write(struct.pack("<I", data.ndim))
        buf.write(struct.pack(f"<{data.ndim}I", *data.shape))
        buf.write(data.astype("<f8").tobytes())
    return buf.getvalue()


def save_checkpoint(model: GateMabsaModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(model))


def model_from_checkpoint_bytes(blob: bytes, dropout_p: float = 0.5) -> GateMabsaModel:
    buf = io.BytesIO(blob)
    magic = buf.read(4)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic {magic!r}")
    version, model_dim, n_heads = struct.unpack("<III", buf.read(12))
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (eps,) = struct.unpack("<d", buf.read(8))
    (n_entries,) = struct.unpack("<I", buf.read(4))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_entries):
        (name_len,) = struct.unpack("<I", buf.read(4))
        name = buf.read(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", buf.read(4))
        dims = struct.unpack(f"<{rank}I", buf.read(4 * rank))
        count = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(buf.read(8 * count), dtype="<f8").reshape(dims)
        tensors[name] = data.astype(np.float64)
    graph_mode = GRAPH_MODES[int(tensors.pop("syn.graph_mode")[0, 0])]
    cfg = HeadConfig(model_dim=model_dim, n_heads=n_heads, eps=eps)
    model = init_model(cfg, seed=0, dropout_p=dropout_p, graph_mode=graph_mode)
    for name, param in named_parameters(model):
        if name not in tensors:
            raise ValueError(f"checkpoint is missing tensor {name!r}")
        stored = tensors[name]
        if stored.shape != param.data.shape:
            raise ValueError(
                f"checkpoint tensor {name!r} has shape {stored.shape}, "
                f"expected {param.data.shape}")
        param.data = np.ascontiguousarray(stored)
    return model


def load_checkpoint(path, dropout_p: float = 0.5) -> GateMabsaModel:
    with open(path, "rb") as fh:
        return model_from_checkpoint_bytes(fh.read(), dropout_p=dropout_p)
