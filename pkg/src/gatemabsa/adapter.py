"""Turns raw feature records into the padded input streams the blocks consume.

Three streams come out, all of length ``n_max``: the per-token sentence
features, the pooled aspect vector broadcast to every row, and the pooled
projected image vector broadcast to every row, together with padding and
aspect masks and the padded adjacency.

Records always carry 768-dim token features and a 49 x 2048 image grid
(fixed by the file format). When the model runs at a smaller width, the
adapter consumes the first ``model_dim`` feature columns and the image
projection maps 2048 directly to ``model_dim``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .records import IMAGE_DIM, TOKEN_DIM, FeatureRecord


@dataclass
class ImageProjParams:
    """Learnable linear map from raw 2048-dim image cells to the model width."""

    weight: Tensor  # (2048, model_dim)
    bias: Tensor    # (1, model_dim)


def init_image_proj(model_dim: int, rng: np.random.Generator) -> ImageProjParams:
    bound = 1.0 / np.sqrt(IMAGE_DIM)
    weight = Tensor(rng.uniform(-bound, bound, size=(IMAGE_DIM, model_dim)),
                    requires_grad=True)
    bias = Tensor(np.zeros((1, model_dim)), requires_grad=True)
    return ImageProjParams(weight=weight, bias=bias)


@dataclass
class PaddedText:
    """Sentence features and masks after padding or truncation."""

    sentence: np.ndarray       # (n_max, feat_dim)
    pad_mask: np.ndarray       # (n_max,), 1 = real token, all leading
    aspect_mask: np.ndarray    # (n_max,)
    adjacency: np.ndarray      # (n_max, n_max), padded region all zero
    n_valid: int
    aspect_truncated: bool     # record had positions but none survived


@dataclass
class ModelInputs:
    """The three aligned streams plus masks for one example."""

    sentence: Tensor           # (n_max, feat_dim)
    aspect_bcast: Tensor       # (n_max, feat_dim), identical rows
    image_bcast: Tensor        # (n_max, feat_dim), identical rows
    pad_mask: np.ndarray       # (n_max,)
    aspect_mask: np.ndarray    # (n_max,)
    adjacency: np.ndarray      # (n_max, n_max)
    n_valid: int
    aspect_truncated: bool


def pad_or_truncate(record: FeatureRecord, n_max: int,
                    feat_dim: int = TOKEN_DIM) -> PaddedText:
    """Zero-pad or truncate a record's text side to exactly ``n_max`` tokens.

    Truncation keeps the leading tokens. The padded adjacency region is all
    zero, including its diagonal. Aspect positions that fall beyond the
    truncation point are dropped; if that removes every position the result
    is flagged and downstream code falls back to the implicit-aspect
    convention.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    n_valid = min(record.n_tokens, n_max)
    sentence = np.zeros((n_max, feat_dim))
    sentence[:n_valid] = record.token_feats[:n_valid, :feat_dim]
    pad_mask = np.zeros(n_max)
    pad_mask[:n_valid] = 1.0
    kept = [p for p in record.aspect_positions if p < n_valid]
    aspect_mask = np.zeros(n_max)
    aspect_mask[kept] = 1.0
    adjacency = np.zeros((n_max, n_max))
    adjacency[:n_valid, :n_valid] = record.adjacency[:n_valid, :n_valid]
    truncated = bool(record.aspect_positions) and not kept
    return PaddedText(sentence=sentence, pad_mask=pad_mask, aspect_mask=aspect_mask,
                      adjacency=adjacency, n_valid=n_valid, aspect_truncated=truncated)


def pool_and_broadcast_aspect(aspect_feats: Tensor, n_max: int) -> Tensor:
    """Mean-pool aspect token features and repeat the result n_max times."""
    a = aspect_feats.shape[0]
    if a < 1:
        raise ValueError("aspect_feats must contain at least one row")
    pooled = ad.masked_mean_pool(aspect_feats, np.ones(a))
    return ad.repeat_rows(pooled, n_max)


def project_image(image_grid: Tensor, params: ImageProjParams, n_max: int) -> Tensor:
    """Project each image cell to the model width, mean-pool, and broadcast."""
    projected = ad.matmul(image_grid, params.weight) + params.bias
    pooled = ad.masked_mean_pool(projected, np.ones(projected.shape[0]))
    return ad.repeat_rows(pooled, n_max)


def build_inputs(record: FeatureRecord, image_params: ImageProjParams,
                 n_max: int, feat_dim: int) -> ModelInputs:
    """Assemble the full input bundle for one record."""
    padded = pad_or_truncate(record, n_max, feat_dim)
    aspect = Tensor(record.aspect_feats[:, :feat_dim])
    image = Tensor(record.image_grid)
    return ModelInputs(
        sentence=Tensor(padded.sentence),
        aspect_bcast=pool_and_broadcast_aspect(aspect, n_max),
        image_bcast=project_image(image, image_params, n_max),
        pad_mask=padded.pad_mask,
        aspect_mask=padded.aspect_mask,
        adjacency=padded.adjacency,
        n_valid=padded.n_valid,
        aspect_truncated=padded.aspect_truncated,
    )
