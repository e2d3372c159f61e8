"""Feature-extraction strategy tests with hand-computed examples."""

from __future__ import annotations

import numpy as np
import pytest

from tweetslots.encoder import EncoderConfig, forward_batch, init_params
from tweetslots.features import (
    FeatureError,
    FeatureStrategy,
    Proj4Params,
    StrategyKind,
    extract,
    extract_backward_batch,
    extract_batch,
    feature_dim,
    init_strategy,
)

H = 4


def hidden_stack(rows_per_layer):
    """Build L single-sequence layer states (T, H) with marker row 0 set."""
    layers = []
    for row in rows_per_layer:
        x = np.zeros((3, len(row)))
        x[0] = row
        layers.append(x)
    return layers


def hidden_batch(rows_per_layer):
    """Batch-of-one variant: (1, T, H) per layer."""
    return [x[None] for x in hidden_stack(rows_per_layer)]


def strat(kind, h=H, seed=0):
    return init_strategy(kind, h, np.random.default_rng(seed))


class TestKinds:
    def test_parse(self):
        assert StrategyKind.parse("last") is StrategyKind.LAST
        assert StrategyKind.parse("sum4") is StrategyKind.SUM4
        assert StrategyKind.parse("concat4") is StrategyKind.CONCAT4
        assert StrategyKind.parse("proj4") is StrategyKind.PROJ4

    def test_parse_rejects_unknown(self):
        with pytest.raises(FeatureError):
            StrategyKind.parse("sum3")

    def test_feature_dims(self):
        assert feature_dim(StrategyKind.LAST, 32) == 32
        assert feature_dim(StrategyKind.SUM4, 32) == 32
        assert feature_dim(StrategyKind.CONCAT4, 32) == 128
        assert feature_dim(StrategyKind.PROJ4, 32) == 32

    def test_proj4_requires_params(self):
        with pytest.raises(FeatureError):
            FeatureStrategy(kind=StrategyKind.PROJ4, proj=None)

    def test_non_proj4_rejects_params(self):
        p = strat(StrategyKind.PROJ4).proj
        with pytest.raises(FeatureError):
            FeatureStrategy(kind=StrategyKind.LAST, proj=p)


class TestHandExamples:
    # Last four marker rows, oldest first.
    ROWS = ([1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 2.0])

    def test_sum4(self):
        hidden = hidden_stack(self.ROWS)
        out = extract(strat(StrategyKind.SUM4, 2), hidden, 0)
        assert np.array_equal(out, [4.0, 4.0])

    def test_concat4_oldest_first(self):
        hidden = hidden_stack(self.ROWS)
        out = extract(strat(StrategyKind.CONCAT4, 2), hidden, 0)
        assert np.array_equal(out, [1, 0, 0, 1, 1, 1, 2, 2])

    def test_last(self):
        hidden = hidden_stack(self.ROWS)
        out = extract(strat(StrategyKind.LAST, 2), hidden, 0)
        assert np.array_equal(out, [2.0, 2.0])

    def test_proj4_all_ones_dot(self):
        # H=4 -> each piece is H/4 = 1 wide; all-ones weights, zero bias:
        # the newest row [1,2,3,4] contributes the piece [10].
        proj = Proj4Params(w=np.ones((4, 4, 1)), b=np.zeros((4, 1)))
        strategy = FeatureStrategy(kind=StrategyKind.PROJ4, proj=proj)
        hidden = hidden_stack(
            ([0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [1.0, 2.0, 3.0, 4.0])
        )
        out = extract(strategy, hidden, 0)
        assert np.array_equal(out, [0.0, 0.0, 0.0, 10.0])

    def test_uses_e_open_position_only(self):
        # Rewriting other time steps must not change the feature.
        hidden = hidden_stack(self.ROWS)
        for x in hidden:
            x[1] = 99.0
            x[2] = -99.0
        out = extract(strat(StrategyKind.SUM4, 2), hidden, 0)
        assert np.array_equal(out, [4.0, 4.0])

    def test_last_four_of_deeper_stack(self):
        rows = ([9.0, 9.0], [8.0, 8.0]) + self.ROWS
        hidden = hidden_stack(rows)
        out = extract(strat(StrategyKind.SUM4, 2), hidden, 0)
        assert np.array_equal(out, [4.0, 4.0])


class TestInvariants:
    def test_sum4_layer_permutation_invariant(self):
        rows = ([1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 2.0])
        out_a = extract(strat(StrategyKind.SUM4, 2), hidden_stack(rows), 0)
        out_b = extract(strat(StrategyKind.SUM4, 2), hidden_stack(rows[::-1]), 0)
        assert np.array_equal(out_a, out_b)

    def test_concat4_layer_permutation_sensitive(self):
        rows = ([1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 2.0])
        out_a = extract(strat(StrategyKind.CONCAT4, 2), hidden_stack(rows), 0)
        out_b = extract(strat(StrategyKind.CONCAT4, 2), hidden_stack(rows[::-1]), 0)
        assert not np.array_equal(out_a, out_b)

    def test_linear_in_hidden(self):
        rng = np.random.default_rng(0)
        h1 = [rng.standard_normal((3, H)) for _ in range(4)]
        h2 = [rng.standard_normal((3, H)) for _ in range(4)]
        for kind in (StrategyKind.LAST, StrategyKind.SUM4, StrategyKind.CONCAT4):
            s = strat(kind)
            a = extract(s, h1, 1) + extract(s, h2, 1)
            b = extract(s, [x + y for x, y in zip(h1, h2)], 1)
            np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_proj4_affine_in_hidden(self):
        s = strat(StrategyKind.PROJ4)
        rng = np.random.default_rng(1)
        h1 = [rng.standard_normal((3, H)) for _ in range(4)]
        h2 = [rng.standard_normal((3, H)) for _ in range(4)]
        zero = [np.zeros((3, H)) for _ in range(4)]
        bias = extract(s, zero, 0)
        a = extract(s, h1, 0) + extract(s, h2, 0) - bias
        b = extract(s, [x + y for x, y in zip(h1, h2)], 0)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


class TestBatch:
    def test_batch_matches_single(self):
        cfg = EncoderConfig(num_layers=5, hidden_size=8, vocab_size=32, max_len=8, seed=0)
        params = init_params(cfg)
        ids = np.array([[3, 4, 5, 6], [7, 8, 9, 10]], dtype=np.int64)
        cache = forward_batch(params, ids)
        marker = np.array([1, 2])
        for kind in StrategyKind:
            s = strat(kind, 8)
            batch = extract_batch(s, cache.hidden, marker)
            for i in range(2):
                single = extract(s, [x[i] for x in cache.hidden], int(marker[i]))
                np.testing.assert_allclose(batch[i], single, rtol=1e-14)

    def test_too_few_layers(self):
        hidden = [np.zeros((1, 3, H)) for _ in range(3)]
        with pytest.raises(FeatureError):
            extract_batch(strat(StrategyKind.SUM4), hidden, np.array([0]))

    def test_marker_out_of_range(self):
        hidden = [np.zeros((1, 3, H)) for _ in range(4)]
        with pytest.raises(FeatureError):
            extract_batch(strat(StrategyKind.LAST), hidden, np.array([3]))


class TestBackward:
    def fd_feature_loss(self, s, hidden, marker, u):
        return float((extract_batch(s, hidden, marker) * u).sum())

    def test_sum4_adjoint_copies_gradient(self):
        s = strat(StrategyKind.SUM4, 2)
        hidden = hidden_batch(([1.0, 0], [0, 1.0], [1.0, 1.0], [2.0, 2.0]))
        g = np.array([[3.0, 5.0]])
        rows, proj = extract_backward_batch(s, hidden, np.array([0]), g)
        assert proj is None
        assert rows.shape == (4, 1, 2)
        for j in range(4):
            assert np.array_equal(rows[j, 0], [3.0, 5.0])

    def test_concat4_adjoint_slices_gradient(self):
        s = strat(StrategyKind.CONCAT4, 2)
        hidden = hidden_batch(([1.0, 0], [0, 1.0], [1.0, 1.0], [2.0, 2.0]))
        g = np.arange(8, dtype=float)[None, :]
        rows, _ = extract_backward_batch(s, hidden, np.array([0]), g)
        for j in range(4):
            assert np.array_equal(rows[j, 0], g[0, 2 * j:2 * j + 2])

    def test_last_adjoint(self):
        s = strat(StrategyKind.LAST, 2)
        hidden = hidden_batch(([1.0, 0], [0, 1.0], [1.0, 1.0], [2.0, 2.0]))
        g = np.array([[2.0, 7.0]])
        rows, _ = extract_backward_batch(s, hidden, np.array([0]), g)
        assert np.array_equal(rows[3, 0], [2.0, 7.0])
        for j in range(3):
            assert np.array_equal(rows[j, 0], [0.0, 0.0])

    @pytest.mark.parametrize("kind", list(StrategyKind))
    def test_finite_difference_rows(self, kind):
        rng = np.random.default_rng(11)
        s = strat(kind)
        hidden = [rng.standard_normal((2, 3, H)) for _ in range(4)]
        marker = np.array([0, 2])
        u = rng.standard_normal((2, feature_dim(kind, H)))
        rows, _ = extract_backward_batch(s, hidden, marker, u)
        eps = 1e-6
        for j in range(4):
            for bi in range(2):
                for hi in range(H):
                    orig = hidden[j][bi, marker[bi], hi]
                    hidden[j][bi, marker[bi], hi] = orig + eps
                    up = self.fd_feature_loss(s, hidden, marker, u)
                    hidden[j][bi, marker[bi], hi] = orig - eps
                    down = self.fd_feature_loss(s, hidden, marker, u)
                    hidden[j][bi, marker[bi], hi] = orig
                    fd = (up - down) / (2 * eps)
                    assert abs(rows[j, bi, hi] - fd) < 1e-6

    def test_finite_difference_proj_params(self):
        rng = np.random.default_rng(13)
        s = strat(StrategyKind.PROJ4)
        hidden = [rng.standard_normal((2, 3, H)) for _ in range(4)]
        marker = np.array([1, 0])
        u = rng.standard_normal((2, H))
        _, proj_g = extract_backward_batch(s, hidden, marker, u)
        eps = 1e-6
        for arr, garr in ((s.proj.w, proj_g.w), (s.proj.b, proj_g.b)):
            flat, gflat = arr.reshape(-1), garr.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up = self.fd_feature_loss(s, hidden, marker, u)
                flat[i] = orig - eps
                down = self.fd_feature_loss(s, hidden, marker, u)
                flat[i] = orig
                fd = (up - down) / (2 * eps)
                assert abs(gflat[i] - fd) < 1e-5

    def test_dimension_mismatch(self):
        s = strat(StrategyKind.LAST)
        hidden = [np.zeros((1, 3, H)) for _ in range(4)]
        with pytest.raises(FeatureError):
            extract_backward_batch(s, hidden, np.array([0]), np.zeros((1, H + 1)))
