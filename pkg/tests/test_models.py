"""
Tests for the pairwise regressor and the set-wise transformer.
"""
import numpy as np
import pytest

from kernkit.errors import CapacityError, DataValidationError, ShapeError
from kernkit.models.pairwise import (
    init_pairwise,
    pairwise_forward,
    pairwise_graph,
    pairwise_inputs,
    predict_table_pairwise,
)
from kernkit.models.setwise import (
    build_pair_tokens,
    check_capacity,
    init_setwise,
    pair_indices,
    setwise_forward,
    setwise_graph,
)
from kernkit.numerics.gradcheck import grad_check
from kernkit.numerics.tensor import Graph, mean_abs, sub
from kernkit.schemas import PairwiseConfig, SetwiseConfig

N, D = 5, 6


@pytest.fixture
def features():
    return np.random.default_rng(21).normal(size=(N, D))


@pytest.fixture
def setwise_cfg():
    return SetwiseConfig(feature_dim=D, d_model=8, n_heads=2, ffn_dim=16, n_layers=2)


class TestPairwise:
    def test_input_layout(self, features):
        rows = pairwise_inputs(features, [1], [3], N)
        assert rows.shape == (1, 2 * D + 2 * N)
        np.testing.assert_array_equal(rows[0, :D], features[1])
        np.testing.assert_array_equal(rows[0, D:2 * D], features[3])
        assert rows[0, 2 * D + 1] == 1.0 and rows[0, 2 * D:2 * D + N].sum() == 1.0
        assert rows[0, 2 * D + N + 3] == 1.0 and rows[0, 2 * D + N:].sum() == 1.0

    def test_category_out_of_range(self, features):
        with pytest.raises(DataValidationError):
            pairwise_inputs(features, [0], [N], N)

    def test_table_equals_per_pair_loop(self, float64, features):
        params = init_pairwise(PairwiseConfig(feature_dim=D, n_categories=N, hidden=(16, 8)), seed=2)
        table = predict_table_pairwise(params, features).values
        for i in range(N):
            for j in range(N):
                assert table[i, j] == pytest.approx(pairwise_forward(params, features[i], features[j], i, j),
                                                    rel=1e-12, abs=1e-12)

    def test_order_matters(self, features):
        params = init_pairwise(PairwiseConfig(feature_dim=D, n_categories=N, hidden=(16, 8)), seed=2)
        assert pairwise_forward(params, features[0], features[1], 0, 1) != pytest.approx(
            pairwise_forward(params, features[1], features[0], 1, 0)
        )

    def test_feature_length_mismatch(self):
        params = init_pairwise(PairwiseConfig(feature_dim=D, n_categories=N, hidden=(4, 4)))
        with pytest.raises(ShapeError):
            pairwise_forward(params, np.zeros(D), np.zeros(D + 1), 0, 1)
        with pytest.raises(ShapeError):
            pairwise_forward(params, np.zeros(11), np.zeros(11), 0, 1)
        with pytest.raises(ShapeError):
            pairwise_graph(Graph(params), np.zeros((2, 3)))

    def test_gradients_match_finite_differences(self):
        params = init_pairwise(PairwiseConfig(feature_dim=D, n_categories=N, hidden=(8, 8)), seed=3)
        rng = np.random.default_rng(4)
        first, second = pair_indices(N)
        inputs = pairwise_inputs(rng.normal(size=(N, D)), first, second, N)
        targets = 3.0 * rng.normal(size=N * N)

        def loss(graph):
            return mean_abs(sub(pairwise_graph(graph, inputs), graph.constant(targets)))

        assert grad_check(loss, params, sample_count=32) <= 1e-5


class TestSetwise:
    def test_pair_indices_row_major(self):
        first, second = pair_indices(3)
        assert first.tolist() == [0, 0, 0, 1, 1, 1, 2, 2, 2]
        assert second.tolist() == [0, 1, 2, 0, 1, 2, 0, 1, 2]

    def test_token_order(self, float64, features, setwise_cfg):
        params = init_setwise(setwise_cfg, seed=1)
        tokens = build_pair_tokens(Graph(params), features, setwise_cfg).data
        assert tokens.shape == (1, N * N, 8)
        for i in range(N):
            for j in range(N):
                expected = np.concatenate([features[i], features[j]]) @ params["proj.w"] + params["proj.b"]
                np.testing.assert_allclose(tokens[0, i * N + j], expected, rtol=1e-12, atol=1e-12)

    def test_batched_tokens(self, features, setwise_cfg):
        params = init_setwise(setwise_cfg)
        batch = np.stack([features, features[::-1]])
        assert build_pair_tokens(Graph(params), batch, setwise_cfg).shape == (2, N * N, 8)

    def test_permutation_equivariance(self, float64, features, setwise_cfg):
        params = init_setwise(setwise_cfg, seed=5)
        table = setwise_forward(params, features, setwise_cfg).values
        rng = np.random.default_rng(8)
        for _ in range(20):
            perm = rng.permutation(N)
            permuted = setwise_forward(params, features[perm], setwise_cfg).values
            np.testing.assert_allclose(permuted, table[np.ix_(perm, perm)], rtol=1e-9, atol=1e-9)

    def test_batch_matches_single_fonts(self, float64, features, setwise_cfg):
        params = init_setwise(setwise_cfg, seed=5)
        other = features * 0.5 + 1.0
        batched = setwise_graph(Graph(params), np.stack([features, other]), setwise_cfg).data
        np.testing.assert_allclose(batched[1], setwise_forward(params, other, setwise_cfg).values, atol=1e-12)

    def test_pairs_see_the_rest_of_the_font(self, float64, features, setwise_cfg):
        setwise = init_setwise(setwise_cfg, seed=6)
        pairwise = init_pairwise(PairwiseConfig(feature_dim=D, n_categories=N, hidden=(16, 8)), seed=6)
        rng = np.random.default_rng(9)
        for k in range(N):
            changed = features.copy()
            changed[k] += 3.0 * rng.normal(size=D)
            others = np.ix_(np.delete(np.arange(N), k), np.delete(np.arange(N), k))
            set_before = setwise_forward(setwise, features, setwise_cfg).values[others]
            set_after = setwise_forward(setwise, changed, setwise_cfg).values[others]
            assert np.all(np.abs(set_after - set_before) > 1e-12)
            pair_before = predict_table_pairwise(pairwise, features).values[others]
            pair_after = predict_table_pairwise(pairwise, changed).values[others]
            np.testing.assert_array_equal(pair_after, pair_before)

    def test_table_labels(self, features, setwise_cfg):
        params = init_setwise(setwise_cfg)
        table = setwise_forward(params, features, setwise_cfg, labels=tuple("abcde"))
        assert table.labels == tuple("abcde")
        assert table.values.shape == (N, N)

    def test_capacity_limit(self, setwise_cfg):
        small = setwise_cfg.model_copy(update={"max_tokens": 16})
        with pytest.raises(CapacityError):
            check_capacity(N, small)
        with pytest.raises(CapacityError):
            setwise_forward(init_setwise(small), np.zeros((N, D)), small)

    def test_rejects_single_glyph(self, setwise_cfg):
        with pytest.raises(ShapeError):
            setwise_forward(init_setwise(setwise_cfg), np.zeros((1, D)), setwise_cfg)

    def test_rejects_wrong_feature_length(self, setwise_cfg):
        with pytest.raises(ShapeError):
            setwise_forward(init_setwise(setwise_cfg), np.zeros((N, D + 2)), setwise_cfg)

    def test_heads_must_divide_width(self):
        with pytest.raises(ValueError):
            SetwiseConfig(feature_dim=D, d_model=9, n_heads=2)

    def test_gradients_match_finite_differences(self):
        cfg = SetwiseConfig(feature_dim=4, d_model=8, n_heads=2, ffn_dim=16, n_layers=1)
        params = init_setwise(cfg, seed=6)
        rng = np.random.default_rng(7)
        feats = rng.normal(size=(2, 3, 4))
        targets = 3.0 * rng.normal(size=(2, 3, 3))

        def loss(graph):
            return mean_abs(sub(setwise_graph(graph, feats, cfg), graph.constant(targets)))

        assert grad_check(loss, params, sample_count=48, seed=2) <= 1e-5
