"""Input adapters: pooling, broadcasting, image projection, padding."""

import numpy as np
import pytest

from gatemabsa import autodiff as ad
from gatemabsa.autodiff import Tensor
from gatemabsa.adapter import (ImageProjParams, build_inputs, init_image_proj,
                               pad_or_truncate, pool_and_broadcast_aspect,
                               project_image)
from gatemabsa.records import IMAGE_CELLS, IMAGE_DIM

from conftest import assert_grad_close, make_record


class TestPoolAndBroadcast:
    def test_single_row_repeats(self, rng):
        v = rng.standard_normal((1, 6))
        out = pool_and_broadcast_aspect(Tensor(v), 3)
        np.testing.assert_array_equal(out.data, np.tile(v, (3, 1)))

    def test_two_rows_mean(self):
        feats = Tensor([[0.0] * 4, [2.0] * 4])
        out = pool_and_broadcast_aspect(feats, 2)
        np.testing.assert_array_equal(out.data, np.ones((2, 4)))

    def test_constant_rows_idempotent(self):
        feats = Tensor(np.full((3, 4), 0.7))
        out = pool_and_broadcast_aspect(feats, 5)
        np.testing.assert_array_equal(out.data, np.full((5, 4), 0.7))

    def test_rows_exactly_identical(self, rng):
        out = pool_and_broadcast_aspect(Tensor(rng.standard_normal((3, 8))), 6)
        diffs = np.abs(out.data - out.data[0]).max()
        assert diffs == 0.0


class TestProjectImage:
    def test_zero_grid_zero_bias(self):
        params = ImageProjParams(weight=Tensor(np.zeros((IMAGE_DIM, 4)), requires_grad=True),
                                 bias=Tensor(np.zeros((1, 4)), requires_grad=True))
        out = project_image(Tensor(np.zeros((IMAGE_CELLS, IMAGE_DIM))), params, 3)
        np.testing.assert_array_equal(out.data, np.zeros((3, 4)))

    def test_constructed_identity_block(self):
        weight = np.zeros((IMAGE_DIM, 4))
        weight[:4, :4] = np.eye(4)
        params = ImageProjParams(weight=Tensor(weight), bias=Tensor(np.zeros((1, 4))))
        grid = np.zeros((IMAGE_CELLS, IMAGE_DIM))
        grid[:, :4] = 2.5
        out = project_image(Tensor(grid), params, 2)
        np.testing.assert_allclose(out.data, np.full((2, 4), 2.5))

    def test_rows_exactly_identical(self, rng):
        params = init_image_proj(6, rng)
        out = project_image(Tensor(rng.standard_normal((IMAGE_CELLS, IMAGE_DIM))),
                            params, 4)
        assert np.abs(out.data - out.data[0]).max() == 0.0

    def test_gradient_through_weight(self, rng):
        params = init_image_proj(3, rng)
        grid = Tensor(rng.uniform(-1, 1, (IMAGE_CELLS, IMAGE_DIM)))
        mixer = Tensor(rng.uniform(-1, 1, (2, 3)))

        def loss():
            return ad.sum_all(ad.mul(project_image(grid, params, 2), mixer)).item()

        ad.sum_all(ad.mul(project_image(grid, params, 2), mixer)).backward()
        # sample a sub-block; the full 2048-row check is impractically slow
        numeric_rows = []
        for i in range(5):
            row = np.zeros(3)
            for j in range(3):
                orig = params.weight.data[i, j]
                params.weight.data[i, j] = orig + 1e-5
                up = loss()
                params.weight.data[i, j] = orig - 1e-5
                down = loss()
                params.weight.data[i, j] = orig
                row[j] = (up - down) / 2e-5
            numeric_rows.append(row)
        numeric = np.array(numeric_rows)
        analytic = params.weight.grad[:5, :]
        rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-8)
        assert rel.max() < 1e-5
        assert_grad_close(params.bias, loss, tol=1e-5)


class TestPadOrTruncate:
    def test_padding_masks(self, rng):
        r = make_record(rng, n_tokens=2, aspect_positions=(1,))
        out = pad_or_truncate(r, 4)
        np.testing.assert_array_equal(out.pad_mask, [1, 1, 0, 0])
        np.testing.assert_array_equal(out.aspect_mask, [0, 1, 0, 0])
        assert out.n_valid == 2 and not out.aspect_truncated

    def test_truncation_keeps_leading_tokens(self, rng):
        r = make_record(rng, n_tokens=5, aspect_positions=(0,))
        out = pad_or_truncate(r, 4)
        np.testing.assert_array_equal(out.sentence, r.token_feats[:4])
        assert out.n_valid == 4

    def test_truncated_aspect_flag(self, rng):
        r = make_record(rng, n_tokens=6, aspect_positions=(5,))
        out = pad_or_truncate(r, 4)
        assert out.aspect_truncated
        assert out.aspect_mask.sum() == 0

    def test_pad_adjacency_region_zero_including_diagonal(self, rng):
        r = make_record(rng, n_tokens=2)
        out = pad_or_truncate(r, 5)
        assert out.adjacency[2:, :].sum() == 0
        assert out.adjacency[:, 2:].sum() == 0
        np.testing.assert_array_equal(np.diag(out.adjacency)[2:], [0, 0, 0])

    def test_feature_column_slicing(self, rng):
        r = make_record(rng, n_tokens=3)
        out = pad_or_truncate(r, 3, feat_dim=16)
        np.testing.assert_array_equal(out.sentence, r.token_feats[:, :16])

    def test_bad_n_max(self, rng):
        with pytest.raises(ValueError):
            pad_or_truncate(make_record(rng), 0)


class TestBuildInputs:
    def test_shapes_and_masks(self, rng):
        r = make_record(rng, n_tokens=3, aspect_positions=(1, 2))
        params = init_image_proj(8, rng)
        inputs = build_inputs(r, params, 5, 8)
        assert inputs.sentence.shape == (5, 8)
        assert inputs.aspect_bcast.shape == (5, 8)
        assert inputs.image_bcast.shape == (5, 8)
        assert inputs.pad_mask.tolist() == [1, 1, 1, 0, 0]
        assert inputs.adjacency.shape == (5, 5)

    def test_broadcast_rows_identical(self, rng):
        r = make_record(rng, n_tokens=4, n_aspect_rows=3)
        inputs = build_inputs(r, init_image_proj(8, rng), 4, 8)
        assert np.abs(inputs.aspect_bcast.data - inputs.aspect_bcast.data[0]).max() == 0.0
        assert np.abs(inputs.image_bcast.data - inputs.image_bcast.data[0]).max() == 0.0
