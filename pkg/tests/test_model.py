import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obkm.model import (
    Hyperparams,
    assign,
    balance_weights_for,
    fit_stream,
    from_snapshot,
    init_model,
    point_loss,
    step,
    to_snapshot,
    update_balance_weights,
    update_centroid,
)

from conftest import brute_nearest, make_model


class TestHyperparams:
    @pytest.mark.parametrize("kw", [
        {"k": 0}, {"k": -3}, {"k": 2.5}, {"alpha": 0.0}, {"alpha": 1.5},
        {"alpha": -0.1}, {"distance_mode": "manhattan"}, {"balance_rule": "other"},
        {"beta": float("nan")},
    ])
    def test_rejects_invalid(self, kw):
        with pytest.raises(ValueError):
            Hyperparams(**kw)

    def test_defaults_are_the_reported_best(self):
        hp = Hyperparams()
        assert (hp.k, hp.alpha, hp.beta) == (300, 0.6, 0.07)

    def test_alpha_one_allowed(self):
        assert Hyperparams(alpha=1.0).alpha == 1.0


class TestInitModel:
    def test_single_cluster(self):
        m = init_model(Hyperparams(k=1), [(0, 0)])
        np.testing.assert_array_equal(m.centroids, [[0, 0]])
        assert m.counts.tolist() == [1]
        assert m.balance_weights.tolist() == [0.0]

    def test_uniform_counts_zero_weights(self):
        m = init_model(Hyperparams(k=2), [(0, 0), (1, 1)])
        assert m.counts.tolist() == [1, 1]
        assert m.mean_count == 1.0 and m.var_count == 0.0
        assert m.balance_weights.tolist() == [0.0, 0.0]

    def test_seeds_from_stream_bit_exact(self):
        stream = np.random.default_rng(7).uniform(-1, 1, (50, 2))
        replay = np.random.default_rng(7).uniform(-1, 1, (50, 2))
        m = init_model(Hyperparams(k=3), stream[:3])
        assert m.centroids.tobytes() == replay[:3].tobytes()

    def test_does_not_alias_input(self):
        pts = np.zeros((2, 2))
        m = init_model(Hyperparams(k=2), pts)
        m.centroids[0, 0] = 5
        assert pts[0, 0] == 0

    def test_too_few_seed_points(self):
        with pytest.raises(ValueError, match="need 3"):
            init_model(Hyperparams(k=3), [(0, 0), (1, 1)])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            init_model(Hyperparams(k=2), [(0, 0), (1, 1, 1)])

    def test_dimension_at_least_two(self):
        with pytest.raises(ValueError):
            init_model(Hyperparams(k=2), [(0,), (1,)])


class TestAssign:
    def test_single_candidate(self):
        m = make_model([(4, 4)])
        assert assign(m, (-100, 3)).cluster_index == 0

    def test_nearest(self):
        m = make_model([(0, 0), (10, 10)])
        assert assign(m, (1, 1)).cluster_index == 0

    def test_literal_penalty_flips_choice(self):
        # d - w: 0.5 - (-5) = 5.5 vs 1.5 - 0 = 1.5
        m = make_model([(0, 0), (2, 0)], weights=[-5, 0], balance_rule="literal")
        r = assign(m, (0.5, 0))
        assert r.cluster_index == 1
        assert r.raw_distance == pytest.approx(1.5)

    def test_zscore_penalty_flips_choice(self):
        # d + w: 0.5 + 5 = 5.5 vs 1.5 + 0 = 1.5
        m = make_model([(0, 0), (2, 0)], weights=[5, 0])
        assert assign(m, (0.5, 0)).cluster_index == 1

    def test_penalized_distance_relation(self):
        lit = make_model([(0, 0), (3, 0)], weights=[0.2, -0.2], balance_rule="literal")
        r = assign(lit, (1, 0))
        assert r.penalized_distance == r.raw_distance - lit.balance_weights[r.cluster_index]
        zs = make_model([(0, 0), (3, 0)], weights=[0.2, -0.2])
        r = assign(zs, (1, 0))
        assert r.penalized_distance == r.raw_distance + zs.balance_weights[r.cluster_index]

    def test_tie_goes_to_lowest_index(self):
        m = make_model([(1, 0), (-1, 0), (0, 1)])
        assert assign(m, (0, 0)).cluster_index == 0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            assign(make_model([(0, 0)]), (1, 2, 3))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from(["euclidean", "squared_euclidean"]))
    def test_zero_beta_matches_brute_force(self, seed, mode):
        rng = np.random.default_rng(seed)
        k, d = int(rng.integers(1, 12)), int(rng.integers(2, 5))
        m = make_model(rng.normal(size=(k, d)), distance_mode=mode)
        for x in rng.normal(size=(20, d)):
            assert assign(m, x).cluster_index == brute_nearest(m.centroids.tolist(), x.tolist())


class TestUpdateCentroid:
    @pytest.mark.parametrize("alpha, mu, x, expected", [
        (1.0, (5, 5), (2, 2), (2, 2)),
        (0.5, (0, 0), (2, 4), (1, 2)),
        (0.6, (1, 0), (0, 1), (0.4, 0.6)),
    ])
    def test_examples(self, alpha, mu, x, expected):
        m = make_model([mu, (9, 9)])
        update_centroid(m, 0, x, alpha)
        np.testing.assert_allclose(m.centroids[0], expected, rtol=0, atol=1e-15)
        assert m.counts.tolist() == [2, 1]

    def test_other_clusters_bit_identical(self, rng):
        c = rng.normal(size=(6, 3))
        m = make_model(c.copy())
        update_centroid(m, 2, rng.normal(size=3), 0.37)
        keep = [0, 1, 3, 4, 5]
        assert m.centroids[keep].tobytes() == c[keep].tobytes()
        assert m.centroids.shape == (6, 3)

    @pytest.mark.parametrize("i", [-1, 2])
    def test_index_out_of_range(self, i):
        with pytest.raises(IndexError):
            update_centroid(make_model([(0, 0), (1, 1)]), i, (0, 0), 0.5)


class TestBalanceWeights:
    def test_equal_counts(self):
        m = make_model([(0, 0)] * 3, counts=[5, 5, 5])
        update_balance_weights(m, 3.0)
        assert m.balance_weights.tolist() == [0, 0, 0]

    @pytest.mark.parametrize("rule", ["literal", "zscore"])
    def test_hand_computed(self, rule):
        # mean 2, population variance 1, std 1 -> both rules agree
        m = make_model([(0, 0), (1, 1)], counts=[1, 3], balance_rule=rule)
        update_balance_weights(m, 1.0)
        assert (m.mean_count, m.var_count) == (2.0, 1.0)
        np.testing.assert_allclose(m.balance_weights, [-1, 1], atol=1e-15)
        update_balance_weights(m, 0.07)
        np.testing.assert_allclose(m.balance_weights, [-0.07, 0.07], atol=1e-15)

    def test_literal_divides_by_variance(self):
        w, mean, var = balance_weights_for([1, 1, 7], 1.0, "literal")
        assert mean == 3.0 and var == 8.0
        np.testing.assert_allclose(w, [-0.25, -0.25, 0.5])

    def test_zscore_divides_by_std(self):
        w, _, var = balance_weights_for([1, 1, 7], 1.0, "zscore")
        np.testing.assert_allclose(w, np.array([-2, -2, 4]) / math.sqrt(var))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(1, 10_000), min_size=2, max_size=40),
           st.floats(-5, 5, allow_nan=False), st.sampled_from(["literal", "zscore"]))
    def test_sum_to_zero_and_linear_in_beta(self, counts, beta, rule):
        w, _, var = balance_weights_for(counts, beta, rule)
        if var > 1e-12:
            assert abs(w.sum()) <= 1e-9 * max(1.0, np.abs(w).max())
        w3, _, _ = balance_weights_for(counts, 3.0 * beta, rule)
        np.testing.assert_allclose(w3, 3.0 * w, rtol=1e-12, atol=1e-300)

    def test_population_variance(self, rng):
        counts = rng.integers(1, 100, 17)
        _, mean, var = balance_weights_for(counts, 1.0)
        assert mean == pytest.approx(sum(counts) / 17)
        assert var == pytest.approx(sum((c - mean) ** 2 for c in counts) / 17)


class TestStep:
    def test_single_cluster(self):
        hp = Hyperparams(k=1, alpha=0.25)
        m = init_model(hp, [(0, 0)])
        _, r = step(m, (4, -8), hp)
        assert r.cluster_index == 0
        np.testing.assert_allclose(m.centroids[0], (1, -2))

    def test_model_invariants_after_stream(self, rng):
        hp = Hyperparams(k=7, alpha=0.3, beta=0.5)
        m = fit_stream(hp, rng.normal(size=(500, 3)))
        assert len(m.centroids) == len(m.counts) == len(m.balance_weights) == 7
        assert m.counts.sum() == 500
        assert m.mean_count == pytest.approx(m.counts.mean())
        assert m.var_count == pytest.approx(m.counts.var())
        w, _, _ = balance_weights_for(m.counts, hp.beta, hp.balance_rule)
        np.testing.assert_array_equal(m.balance_weights, w)

    def test_determinism(self):
        hp = Hyperparams(k=5, alpha=0.6, beta=0.07)
        a = fit_stream(hp, np.random.default_rng(3).normal(size=(400, 2)))
        b = fit_stream(hp, np.random.default_rng(3).normal(size=(400, 2)))
        assert a.centroids.tobytes() == b.centroids.tobytes()
        assert a.counts.tobytes() == b.counts.tobytes()
        assert a.balance_weights.tobytes() == b.balance_weights.tobytes()

    def test_full_size_stream(self):
        hp = Hyperparams(k=300, alpha=0.6, beta=0.07)
        m = fit_stream(hp, np.random.default_rng(0).uniform(-1, 1, (10_000, 2)))
        assert m.counts.min() >= 1
        assert m.counts.sum() == 10_000

    def test_balance_lowers_count_variance(self):
        data = np.random.default_rng(11)
        pts = np.vstack([data.normal(0, 1, (5000, 2)), data.normal(6, 1, (5000, 2))])
        data.shuffle(pts)
        plain = fit_stream(Hyperparams(k=10, beta=0.0), pts)
        balanced = fit_stream(Hyperparams(k=10, beta=0.07), pts)
        assert balanced.counts.var() < plain.counts.var()


class TestPointLoss:
    def test_at_centroid(self):
        assert point_loss(make_model([(1, 2), (3, 4)]), (3, 4)) == 0.0

    def test_euclidean(self):
        assert point_loss(make_model([(0, 0), (3, 4)]), (3, 0)) == pytest.approx(3.0)

    def test_squared(self):
        m = make_model([(0, 0)], distance_mode="squared_euclidean")
        assert point_loss(m, (3, 4)) == 25.0

    def test_ignores_penalty(self):
        m = make_model([(0, 0), (3, 4)], weights=[100, -100])
        assert point_loss(m, (3, 0)) == pytest.approx(3.0)


class TestSnapshot:
    def test_round_trip(self, rng):
        hp = Hyperparams(k=4, alpha=0.3, beta=-0.21, distance_mode="squared_euclidean")
        m = fit_stream(hp, rng.normal(size=(200, 3)))
        snap = json.loads(json.dumps(to_snapshot(m, hp, overall_mean=0.5)))
        assert set(snap) >= {"dim", "k", "alpha", "beta", "centroids", "counts", "weights"}
        assert len(snap["centroids"]) == 4 * 3
        m2, hp2 = from_snapshot(snap)
        assert hp2 == hp
        assert m2.counts.tolist() == m.counts.tolist()
        np.testing.assert_allclose(m2.centroids, m.centroids, rtol=1e-15, atol=0)
        np.testing.assert_allclose(m2.balance_weights, m.balance_weights, rtol=1e-15, atol=0)
        assert snap["overall_mean"] == 0.5

    def test_row_major(self):
        m = make_model([(1, 2), (3, 4)])
        assert to_snapshot(m, Hyperparams(k=2))["centroids"] == [1, 2, 3, 4]

    def test_malformed(self):
        with pytest.raises(ValueError):
            from_snapshot({"dim": 2})
