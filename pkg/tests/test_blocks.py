"""Block gates and forwards: hand cases, invariances, oracle agreement."""

import numpy as np
import pytest

from gatemabsa import autodiff as ad
from gatemabsa import oracle
from gatemabsa.autodiff import Tensor
from gatemabsa.adapter import build_inputs, init_image_proj
from gatemabsa.blocks import (broadcast_vector_gate, distance_to_aspect,
                              fuse_forward, graph_gate, graph_signal,
                              init_fuse, init_sem, init_syn, sem_forward,
                              semantic_gate, syn_aspect_embed, syn_forward)
from gatemabsa.decay import HeadConfig

from conftest import make_record


def tiny_cfg():
    return HeadConfig(model_dim=8, n_heads=2, eps=1e-6)


def build_tiny(rng, n_tokens=5, n_max=None, aspect_positions=None):
    record = make_record(rng, n_tokens=n_tokens, aspect_positions=aspect_positions)
    cfg = tiny_cfg()
    proj = init_image_proj(cfg.model_dim, rng)
    inputs = build_inputs(record, proj, n_max or n_tokens, cfg.model_dim)
    return record, cfg, proj, inputs


class TestBroadcastVectorGate:
    def test_zero_blend_is_constant_in_steps(self, rng):
        cfg = tiny_cfg()
        params = init_fuse(cfg, rng)
        q = Tensor(rng.standard_normal((6, cfg.head_dim)))
        pooled = Tensor(rng.standard_normal((1, cfg.head_dim)))
        out = broadcast_vector_gate(q, pooled, params.aspect_gate, 0,
                                    Tensor([[0.0]]))
        assert np.abs(out.data - out.data[0]).max() == 0.0

    def test_parallel_query_gives_blend(self, rng):
        cfg = tiny_cfg()
        params = init_fuse(cfg, rng)
        params.aspect_gate.weight.data = np.zeros_like(params.aspect_gate.weight.data)
        params.aspect_gate.bias.data = np.zeros_like(params.aspect_gate.bias.data)
        pooled = Tensor(rng.standard_normal((1, cfg.head_dim)))
        q = Tensor(np.vstack([3.0 * pooled.data, 0.5 * pooled.data]))
        out = broadcast_vector_gate(q, pooled, params.aspect_gate, 0,
                                    Tensor([[2.0]]))
        np.testing.assert_allclose(out.data, np.full((2, 1), 2.0), atol=1e-12)

    def test_zero_vector_guard(self, rng):
        cfg = tiny_cfg()
        params = init_fuse(cfg, rng)
        params.image_gate.weight.data = np.zeros_like(params.image_gate.weight.data)
        params.image_gate.bias.data = np.full_like(params.image_gate.bias.data, 0.4)
        q = Tensor(rng.standard_normal((3, cfg.head_dim)))
        out = broadcast_vector_gate(q, Tensor(np.zeros((1, cfg.head_dim))),
                                    params.image_gate, 1, Tensor([[2.0]]))
        np.testing.assert_allclose(out.data, np.full((3, 1), 0.4), atol=1e-12)

    def test_matches_naive_per_step(self, rng):
        cfg = tiny_cfg()
        params = init_fuse(cfg, rng)
        q = Tensor(rng.standard_normal((5, cfg.head_dim)))
        pooled = Tensor(rng.standard_normal((1, cfg.head_dim)))
        out = broadcast_vector_gate(q, pooled, params.aspect_gate, 1, params.blend)
        w = params.aspect_gate.weight.data[1].tolist()
        b = float(params.aspect_gate.bias.data[1, 0])
        blend = float(params.blend.data[0, 0])
        vec = pooled.data[0].tolist()
        for t in range(5):
            expected = (oracle._dot(w, vec + vec + vec) + b
                        + blend * oracle._cos(q.data[t].tolist(), vec))
            assert abs(out.data[t, 0] - expected) < 1e-12


class TestGraphSignal:
    def test_literal_diag_all_ones(self, rng):
        q = Tensor(rng.standard_normal((4, 3)))
        adj = np.eye(4)
        out = graph_signal(q, adj, np.ones(4), "literal_diag")
        np.testing.assert_array_equal(out.data, np.ones((4, 1)))

    def test_row_aggregate_identity_adjacency(self, rng):
        q = Tensor(rng.standard_normal((4, 3)))
        out = graph_signal(q, np.eye(4), np.ones(4), "row_aggregate")
        np.testing.assert_allclose(out.data, np.ones((4, 1)), atol=1e-12)

    def test_row_aggregate_chain_hand_case(self):
        q = Tensor(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
        adj = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]])
        out = graph_signal(q, adj, np.ones(3), "row_aggregate")
        s = 1.0 / np.sqrt(2.0)
        expected = np.array([(1 + 0) / 2, (0 + 1 + s) / 3, (s + 1) / 2])
        np.testing.assert_allclose(out.data.reshape(-1), expected, atol=1e-12)

    def test_bad_mode_rejected(self, rng):
        with pytest.raises(ValueError):
            graph_signal(Tensor(np.ones((2, 2))), np.eye(2), np.ones(2), "nope")


class TestSynAspectEmbed:
    def test_identity_adjacency_reduces_to_masked_mean(self, rng):
        q = Tensor(rng.standard_normal((4, 3)))
        mask = np.array([1.0, 0.0, 1.0, 0.0])
        out = syn_aspect_embed(q, np.eye(4), mask, np.ones(4))
        expected = q.data[[0, 2]].mean(axis=0)
        np.testing.assert_allclose(out.data.reshape(-1), expected, atol=1e-12)

    def test_single_aspect_token_identity_graph(self, rng):
        q = Tensor(rng.standard_normal((3, 2)))
        mask = np.array([0.0, 1.0, 0.0])
        out = syn_aspect_embed(q, np.eye(3), mask, np.ones(3))
        np.testing.assert_allclose(out.data.reshape(-1), q.data[1], atol=1e-12)

    def test_chain_smoothing_hand_case(self):
        q = Tensor(np.array([[2.0], [4.0], [8.0]]))
        adj = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]])
        mask = np.array([1.0, 0.0, 0.0])
        out = syn_aspect_embed(q, adj, mask, np.ones(3))
        assert abs(out.data[0, 0] - (2.0 + 4.0) / 2) < 1e-12

    def test_implicit_aspect_falls_back_to_valid(self, rng):
        q = Tensor(rng.standard_normal((3, 2)))
        out = syn_aspect_embed(q, np.eye(3), np.zeros(3), np.ones(3))
        np.testing.assert_allclose(out.data.reshape(-1), q.data.mean(axis=0),
                                   atol=1e-12)


class TestGraphGate:
    def test_zero_scale_constant(self, rng):
        cfg = tiny_cfg()
        params = init_syn(cfg, rng)
        q = Tensor(rng.standard_normal((4, cfg.head_dim)))
        a_syn = Tensor(rng.standard_normal((1, cfg.head_dim)))
        signal = Tensor(rng.standard_normal((4, 1)))
        out = graph_gate(q, a_syn, signal, params.graph_gate, 0, Tensor([[0.0]]))
        assert np.abs(out.data - out.data[0]).max() == 0.0

    def test_zero_weight_literal_gives_scale(self, rng):
        cfg = tiny_cfg()
        params = init_syn(cfg, rng)
        params.graph_gate.weight.data = np.zeros_like(params.graph_gate.weight.data)
        params.graph_gate.bias.data = np.zeros_like(params.graph_gate.bias.data)
        q = Tensor(rng.standard_normal((4, cfg.head_dim)))
        signal = Tensor(np.ones((4, 1)))  # literal diag on valid rows
        out = graph_gate(q, Tensor(np.zeros((1, cfg.head_dim))), signal,
                         params.graph_gate, 0, Tensor([[1.7]]))
        np.testing.assert_allclose(out.data, np.full((4, 1), 1.7), atol=1e-12)


class TestDistance:
    def test_zero_at_aspect_positions(self):
        mask = np.array([0.0, 1.0, 0.0, 1.0])
        out = distance_to_aspect(mask, np.ones(4))
        assert out[1, 0] == 0.0 and out[3, 0] == 0.0

    def test_direct_formula(self):
        mask = np.array([1.0, 0.0, 0.0, 0.0])
        out = distance_to_aspect(mask, np.ones(4))
        np.testing.assert_allclose(out.reshape(-1), [0.0, 0.25, 0.5, 0.75])

    def test_empty_mask_all_zero(self):
        out = distance_to_aspect(np.zeros(4), np.ones(4))
        np.testing.assert_array_equal(out, np.zeros((4, 1)))

    def test_padded_positions_zero(self):
        mask = np.array([1.0, 0.0, 0.0, 0.0])
        pad = np.array([1.0, 1.0, 0.0, 0.0])
        out = distance_to_aspect(mask, pad)
        assert out[2, 0] == 0.0 and out[3, 0] == 0.0
        assert out[1, 0] == 0.5  # normalized by the two valid tokens


class TestSemanticGate:
    def test_constant_when_blend_and_distance_zero(self, rng):
        cfg = tiny_cfg()
        params = init_sem(cfg, rng)
        q = Tensor(rng.standard_normal((4, cfg.head_dim)))
        a_sem = Tensor(rng.standard_normal((1, cfg.head_dim)))
        out = semantic_gate(q, a_sem, np.zeros((4, 1)), params.semantic_gate, 0,
                            Tensor([[0.0]]), Tensor([[0.0]]))
        assert np.abs(out.data - out.data[0]).max() == 0.0

    def test_matches_naive_per_step(self, rng):
        cfg = tiny_cfg()
        params = init_sem(cfg, rng)
        q = Tensor(rng.standard_normal((5, cfg.head_dim)))
        a_sem = Tensor(rng.standard_normal((1, cfg.head_dim)))
        distances = rng.uniform(0, 1, (5, 1))
        out = semantic_gate(q, a_sem, distances, params.semantic_gate, 1,
                            params.blend, params.distance_scale)
        w = params.semantic_gate.weight.data[1].tolist()
        b = float(params.semantic_gate.bias.data[1, 0])
        blend = float(params.blend.data[0, 0])
        alpha = float(params.distance_scale.data[0, 0])
        vec = a_sem.data[0].tolist()
        for t in range(5):
            expected = (oracle._dot(w, vec + vec + vec) + b
                        + blend * oracle._cos(q.data[t].tolist(), vec)
                        - alpha * distances[t, 0])
            assert abs(out.data[t, 0] - expected) < 1e-12


def zero_all_params(*param_groups):
    for group in param_groups:
        for attr in vars(group).values():
            if isinstance(attr, Tensor):
                attr.data = np.zeros_like(attr.data)
            elif hasattr(attr, "__dict__"):
                zero_all_params(attr)


class TestBlockForwards:
    def test_fuse_zero_everything_gives_zero(self, rng):
        record, cfg, proj, _ = build_tiny(rng, n_tokens=1, n_max=1)
        params = init_fuse(cfg, rng)
        zero_all_params(params, proj)
        record.token_feats[:] = 0.0
        record.aspect_feats[:] = 0.0
        record.image_grid[:] = 0.0
        inputs = build_inputs(record, proj, 1, cfg.model_dim)
        h, _ = fuse_forward(inputs, params, cfg)
        np.testing.assert_array_equal(h.data, np.zeros((1, cfg.model_dim)))

    def _padding_opacity(self, rng, forward_one):
        record, cfg, proj, inputs = build_tiny(rng, n_tokens=3, n_max=3)
        padded_inputs = build_inputs(record, proj, 5, cfg.model_dim)
        h_plain = forward_one(cfg, rng, inputs)
        h_padded = forward_one(cfg, rng, padded_inputs)
        assert np.abs(h_padded[:3] - h_plain).max() < 1e-12

    def test_fuse_padding_opacity(self, rng):
        params = {}
        def run(cfg, r, inputs):
            if "p" not in params:
                params["p"] = init_fuse(cfg, r)
            return fuse_forward(inputs, params["p"], cfg)[0].data
        self._padding_opacity(rng, run)

    def test_syn_padding_opacity(self, rng):
        params = {}
        def run(cfg, r, inputs):
            if "p" not in params:
                params["p"] = (init_fuse(cfg, r), init_syn(cfg, r))
            h_fuse, _ = fuse_forward(inputs, params["p"][0], cfg)
            return syn_forward(h_fuse, inputs, params["p"][1], cfg)[0].data
        self._padding_opacity(rng, run)

    def test_sem_padding_opacity(self, rng):
        params = {}
        def run(cfg, r, inputs):
            if "p" not in params:
                params["p"] = (init_fuse(cfg, r), init_sem(cfg, r))
            h_fuse, _ = fuse_forward(inputs, params["p"][0], cfg)
            return sem_forward(h_fuse, inputs, params["p"][1], cfg)[0].data
        self._padding_opacity(rng, run)

    def test_each_block_matches_oracle(self, rng):
        for _ in range(10):
            record, cfg, proj, inputs = build_tiny(rng, n_tokens=4, n_max=6)
            fuse = init_fuse(cfg, rng)
            syn = init_syn(cfg, rng)
            sem = init_sem(cfg, rng)
            h_fuse, _ = fuse_forward(inputs, fuse, cfg)
            assert np.abs(h_fuse.data - oracle.naive_fuse(inputs, fuse, cfg)).max() < 1e-10
            h_syn, _ = syn_forward(h_fuse, inputs, syn, cfg)
            assert np.abs(h_syn.data - oracle.naive_syn(h_fuse.data, inputs, syn,
                                                        cfg)).max() < 1e-10
            h_sem, _ = sem_forward(h_syn, inputs, sem, cfg)
            assert np.abs(h_sem.data - oracle.naive_sem(h_syn.data, inputs, sem,
                                                        cfg)).max() < 1e-10

    def test_literal_diag_mode_matches_oracle(self, rng):
        record, cfg, proj, inputs = build_tiny(rng, n_tokens=4)
        fuse = init_fuse(cfg, rng)
        syn = init_syn(cfg, rng, graph_mode="literal_diag")
        h_fuse, _ = fuse_forward(inputs, fuse, cfg)
        h_syn, _ = syn_forward(h_fuse, inputs, syn, cfg)
        assert np.abs(h_syn.data - oracle.naive_syn(h_fuse.data, inputs, syn,
                                                    cfg)).max() < 1e-10


class TestGateSemantics:
    def test_blend_zero_makes_fuse_invariant_to_aspect_swap(self, rng):
        record, cfg, proj, _ = build_tiny(rng, n_tokens=4)
        params = init_fuse(cfg, rng)
        params.blend.data = np.zeros((1, 1))
        params.aspect_gate.weight.data = np.zeros_like(params.aspect_gate.weight.data)
        inputs_a = build_inputs(record, proj, 4, cfg.model_dim)
        record.aspect_feats = rng.standard_normal(record.aspect_feats.shape)
        inputs_b = build_inputs(record, proj, 4, cfg.model_dim)
        h_a, _ = fuse_forward(inputs_a, params, cfg)
        h_b, _ = fuse_forward(inputs_b, params, cfg)
        np.testing.assert_array_equal(h_a.data, h_b.data)

    def test_distance_scale_zero_invariant_to_position_shuffle(self, rng):
        # identical token features make the pooled gate terms position-free,
        # so with a zero distance scale the output cannot see the positions
        record, cfg, proj, _ = build_tiny(rng, n_tokens=5, aspect_positions=(1,))
        record.token_feats[:] = record.token_feats[0]
        record.adjacency = np.ones((5, 5))
        params = init_sem(cfg, rng)
        params.distance_scale.data = np.zeros((1, 1))
        h_in = Tensor(rng.standard_normal((5, cfg.model_dim)))
        h_in.data[:] = h_in.data[0]

        inputs_a = build_inputs(record, proj, 5, cfg.model_dim)
        record.aspect_positions = (3,)
        inputs_b = build_inputs(record, proj, 5, cfg.model_dim)
        out_a, _ = sem_forward(h_in, inputs_a, params, cfg)
        out_b, _ = sem_forward(h_in, inputs_b, params, cfg)
        np.testing.assert_array_equal(out_a.data, out_b.data)

    def test_monotonicity_ratio_is_exp_delta(self, rng):
        from gatemabsa.decay import (combine_decay, cumulative_log_forget,
                                     stabilize)
        cfg = HeadConfig(model_dim=4, n_heads=1, eps=1e-6)
        n = 5
        f = Tensor(rng.uniform(-1, 1, (n, 1)))
        i_gate = Tensor(rng.uniform(-1, 1, (n, 1)))
        extra = rng.uniform(-1, 1, (n, 1))
        delta = 0.8
        log_forget = cumulative_log_forget(f, np.ones(n))

        def decay_for(extra_vec):
            return stabilize(combine_decay(log_forget, i_gate,
                                           [Tensor(extra_vec)])).data

        base = decay_for(extra)
        bumped_vec = extra.copy()
        j = 1
        bumped_vec[j, 0] += delta
        bumped = decay_for(bumped_vec)
        j_other = 0
        for i in range(2, n):
            ratio_before = base[i, j] / base[i, j_other]
            ratio_after = bumped[i, j] / bumped[i, j_other]
            assert abs(ratio_after / ratio_before - np.exp(delta)) < 1e-9

    def test_forward_deterministic(self, rng):
        record, cfg, proj, inputs = build_tiny(rng, n_tokens=4)
        params = init_fuse(cfg, rng)
        h1, _ = fuse_forward(inputs, params, cfg)
        h2, _ = fuse_forward(inputs, params, cfg)
        np.testing.assert_array_equal(h1.data, h2.data)
