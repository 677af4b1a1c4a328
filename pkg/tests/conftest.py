"""Shared test helpers: finite differences, tolerance rules, tiny fixtures."""

import numpy as np
import pytest

from gatemabsa.records import (IMAGE_CELLS, IMAGE_DIM, TOKEN_DIM, FeatureRecord)

FD_STEP = 1e-5


def central_diff(fn, tensor, h: float = FD_STEP) -> np.ndarray:
    """Central finite differences of a scalar-valued fn w.r.t. one tensor."""
    grad = np.zeros_like(tensor.data)
    it = np.nditer(tensor.data, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = tensor.data[idx]
        tensor.data[idx] = orig + h
        up = fn()
        tensor.data[idx] = orig - h
        down = fn()
        tensor.data[idx] = orig
        grad[idx] = (up - down) / (2 * h)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray,
                  abs_floor: float = 0.0) -> float:
    """Largest relative error; differences under the absolute floor count
    as zero (covers entries whose true gradient is structurally zero)."""
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    rel = np.where(diff <= abs_floor, 0.0, diff / np.maximum(scale, 1e-300))
    return float(rel.max()) if rel.size else 0.0


def assert_grad_close(tensor, fn, tol: float = 1e-6, abs_floor: float = 0.0):
    """Compare a tensor's accumulated gradient against central differences."""
    assert tensor.grad is not None, "no gradient accumulated"
    numeric = central_diff(fn, tensor)
    err = max_rel_error(tensor.grad, numeric, abs_floor=abs_floor)
    assert err < tol, f"gradient mismatch: rel error {err:.3e} >= {tol}"


def make_record(rng: np.random.Generator, n_tokens: int = 5,
                aspect_positions=None, n_aspect_rows: int = 1,
                label: int | None = None) -> FeatureRecord:
    """Random valid record; features are float32-quantized like real ones."""
    if aspect_positions is None:
        aspect_positions = (int(rng.integers(n_tokens)),)
    adjacency = np.eye(n_tokens)
    order = rng.permutation(n_tokens)
    for i in range(n_tokens - 1):
        adjacency[order[i], order[i + 1]] = 1.0
        adjacency[order[i + 1], order[i]] = 1.0

    def q32(x):
        return x.astype(np.float32).astype(np.float64)

    return FeatureRecord(
        id=f"test-{rng.integers(1 << 30)}",
        n_tokens=n_tokens,
        token_feats=q32(rng.standard_normal((n_tokens, TOKEN_DIM))),
        aspect_positions=tuple(sorted(set(aspect_positions))),
        aspect_feats=q32(rng.standard_normal((n_aspect_rows, TOKEN_DIM))),
        image_grid=q32(rng.standard_normal((IMAGE_CELLS, IMAGE_DIM))),
        adjacency=adjacency,
        label=int(rng.integers(3)) if label is None else label,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
