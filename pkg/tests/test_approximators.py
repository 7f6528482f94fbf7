import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metric_ucrl import (ContractViolation, DiscreteMetric, KeyValueSet, LinearSpanEvaluator,
                         NearestNeighborEvaluator, ProductL1Metric, TabularEvaluator,
                         check_oracle_properties, linear_evaluate, nn_evaluate)

L1 = ProductL1Metric(1.0)


def onehot(d):
    def phi(s, a):
        v = np.zeros(d)
        v[int(s)] = 1.0
        return v
    return phi


def coords(s, a):
    return np.asarray(s, dtype=float)


class TestNearestNeighbor:
    def test_single_key(self):
        kv = KeyValueSet.from_pairs([(0.0, 0.0)], [2.0])
        assert nn_evaluate(kv, L1, 1.0, (0.5, 0.0), cap=10) == pytest.approx(2.5)

    def test_minimum_over_keys(self):
        kv = KeyValueSet.from_pairs([(1.0, 0.0), (0.2, 0.0)], [0.0, 10.0])
        assert nn_evaluate(kv, L1, 1.0, (0.0, 0.0), cap=100) == pytest.approx(1.0)

    def test_interpolates_keys_exactly(self):
        kv = KeyValueSet.from_pairs([(0.3, 0.1), (0.7, -0.1)], [0.123, 0.456])
        assert nn_evaluate(kv, L1, 3.0, (0.3, 0.1), cap=5) == 0.123

    def test_empty_returns_cap(self):
        assert nn_evaluate(KeyValueSet.empty(), L1, 1.0, (0.1, 0.1), cap=3.0) == 3.0

    def test_cap_applies(self):
        kv = KeyValueSet.from_pairs([(0.0, 0.0)], [0.5])
        assert nn_evaluate(kv, L1, 10.0, (1.0, 0.0), cap=2.0) == 2.0

    def test_nan_distance_is_rejected(self):
        kv = KeyValueSet.from_pairs([(0.0, 0.0)], [0.5])
        with pytest.raises(ContractViolation):
            nn_evaluate(kv, L1, 1.0, (float("nan"), 0.0), cap=2.0)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ContractViolation):
            NearestNeighborEvaluator(KeyValueSet.empty(), L1, -1.0, 1.0)
        with pytest.raises(ContractViolation):
            NearestNeighborEvaluator(KeyValueSet.empty(), L1, 1.0, 0.0)
        with pytest.raises(ContractViolation):
            KeyValueSet.from_pairs([(0, 0)], [np.inf])

    def test_separable_grid_matches_pairwise_route(self):
        rng = np.random.default_rng(4)
        actions = [-0.25, 0.0, 0.25]
        kv = KeyValueSet(tuple(rng.uniform(0, 1, 40)), tuple(rng.choice(actions, 40)),
                         rng.uniform(0, 2, 40))
        ev = NearestNeighborEvaluator(kv, ProductL1Metric(0.4), 2.0, 3.0)
        states = list(rng.uniform(0, 1, 57))
        fast = ev.evaluate_grid(states, actions)
        slow = ev.evaluate([s for s in states for _ in actions], actions * len(states))
        np.testing.assert_allclose(fast, slow.reshape(len(states), 3), rtol=0, atol=1e-12)

    def test_discrete_metric_grid(self):
        kv = KeyValueSet.from_pairs([(0, 1), (2, 0)], [0.5, 0.25])
        ev = NearestNeighborEvaluator(kv, DiscreteMetric(4), 1.0, 4.0)
        np.testing.assert_array_equal(ev.evaluate_grid([0, 1, 2], [0, 1]),
                                      [[4.0, 0.5], [4.0, 4.0], [0.25, 4.0]])


pair_lists = st.lists(st.tuples(st.floats(0, 1), st.sampled_from([-0.25, 0.0, 0.25]),
                                st.floats(0, 2)), min_size=1, max_size=12)


class TestNearestNeighborProperties:
    @settings(max_examples=60, deadline=None)
    @given(pair_lists, pair_lists, st.lists(st.tuples(st.floats(0, 1),
                                                      st.sampled_from([-0.25, 0.0, 0.25])),
                                            min_size=1, max_size=10))
    def test_adding_data_never_raises_envelope(self, base, extra, queries):
        kv_small = KeyValueSet.from_pairs([(s, a) for s, a, _ in base], [y for *_, y in base])
        both = base + extra
        kv_big = KeyValueSet.from_pairs([(s, a) for s, a, _ in both], [y for *_, y in both])
        qs, qa = [q[0] for q in queries], [q[1] for q in queries]
        small = NearestNeighborEvaluator(kv_small, L1, 1.5, 4.0).evaluate(qs, qa)
        big = NearestNeighborEvaluator(kv_big, L1, 1.5, 4.0).evaluate(qs, qa)
        assert (big <= small).all()

    @settings(max_examples=60, deadline=None)
    @given(pair_lists, st.floats(0, 5), st.floats(0, 5), st.floats(0, 1))
    def test_monotone_in_lipschitz_constant(self, data, l_a, l_b, qs):
        lo, hi = sorted((l_a, l_b))
        kv = KeyValueSet.from_pairs([(s, a) for s, a, _ in data], [y for *_, y in data])
        x = (qs, 0.0)
        assert nn_evaluate(kv, L1, lo, x, 10.0) <= nn_evaluate(kv, L1, hi, x, 10.0)


def lipschitz_test_function(rng, lip):
    """Random ``lip``-Lipschitz function under the unit-weight product metric."""
    centers = rng.uniform(0, 1, 4)
    acts = rng.uniform(-0.25, 0.25, 4)
    offsets = rng.uniform(0, 1, 4)

    def q(s, a):
        return float(np.min(offsets + lip * (np.abs(s - centers) + np.abs(a - acts))))
    return q


class TestOracleProperties:
    def test_nn_passes_on_lipschitz_data(self):
        rng = np.random.default_rng(0)
        q = lipschitz_test_function(rng, 2.0)
        keys = [(float(s), float(a)) for s, a in zip(rng.uniform(0, 1, 30),
                                                      rng.choice([-0.25, 0.0, 0.25], 30))]
        kv = KeyValueSet.from_pairs(keys, [q(*k) for k in keys])
        ev = NearestNeighborEvaluator(kv, L1, 2.0, 100.0)
        sample = [(float(s), float(a)) for s, a in zip(rng.uniform(0, 1, 200),
                                                        rng.uniform(-0.25, 0.25, 200))]
        rep = check_oracle_properties(ev, kv, L1, 2.0, sample, q=q, tol=1e-9)
        assert rep.all_ok
        assert rep.n_pairs == 200 * 199 // 2

    def test_step_function_breaks_dominance(self):
        def q(s, a):
            return 1.0 if s >= 0.5 else 0.0

        keys = [(0.49, 0.0), (0.0, 0.0)]
        kv = KeyValueSet.from_pairs(keys, [q(*k) for k in keys])
        ev = NearestNeighborEvaluator(kv, L1, 1.0, 10.0)
        grid = [(float(s), 0.0) for s in np.linspace(0, 1, 101)]
        rep = check_oracle_properties(ev, kv, L1, 1.0, grid, q=q)
        assert rep.lipschitz_ok and rep.interpolation_ok
        assert not rep.dominance_ok
        # worst point is s = 0.5: envelope 0.01, truth 1
        assert rep.max_dominance_violation == pytest.approx(0.99)

    def test_empty_data_passes(self):
        ev = NearestNeighborEvaluator(KeyValueSet.empty(), L1, 1.0, 3.0)
        grid = [(float(s), 0.0) for s in np.linspace(0, 1, 11)]
        rep = check_oracle_properties(ev, KeyValueSet.empty(), L1, 1.0, grid, q=lambda s, a: s)
        assert rep.all_ok

    def test_interpolation_slack(self):
        kv = KeyValueSet.from_pairs([(0.0, 0.0)], [1.0])
        ev = TabularEvaluator(KeyValueSet.from_pairs([(0.0, 0.0)], [1.05]), 3.0)
        assert not check_oracle_properties(ev, kv, L1, 1.0, [], delta=0.0).interpolation_ok
        assert check_oracle_properties(ev, kv, L1, 1.0, [], delta=0.1).interpolation_ok


class TestLinearSpan:
    def test_interpolation(self):
        kv = KeyValueSet.from_pairs([(0, 0)], [3.0])
        assert linear_evaluate(kv, onehot(2), (0, 0), cap=5.0) == pytest.approx(3.0)

    def test_off_span_returns_cap(self):
        kv = KeyValueSet.from_pairs([(0, 0)], [3.0])
        assert linear_evaluate(kv, onehot(2), (1, 0), cap=5.0) == 5.0

    def test_extrapolation_within_span(self):
        # normal equations (Phi^T Phi) w = Phi^T y with Phi = I give w = (1, 2)
        phi = np.eye(2)
        w = np.linalg.solve(phi.T @ phi, phi.T @ np.array([1.0, 2.0]))
        assert float(np.array([1.0, 1.0]) @ w) == pytest.approx(3.0)
        kv = KeyValueSet.from_pairs([((1.0, 0.0), 0), ((0.0, 1.0), 0)], [1.0, 2.0])
        ev = LinearSpanEvaluator(kv, coords, cap=10.0)
        assert ev.evaluate_feature([1.0, 1.0]) == pytest.approx(3.0, abs=1e-12)

    def test_empty_data_is_cap(self):
        ev = LinearSpanEvaluator(KeyValueSet.empty(), onehot(3), cap=4.0)
        assert ev(0, 0) == 4.0
        assert ev.dimension == 0

    def test_zero_feature_with_value_warns(self):
        kv = KeyValueSet.from_pairs([((0.0, 0.0), 0)], [1.0])
        with pytest.warns(RuntimeWarning):
            LinearSpanEvaluator(kv, coords, cap=2.0)

    def test_rank_deficient_data(self):
        # duplicate direction: the fit is the minimum-norm solution along e1 + e2
        kv = KeyValueSet.from_pairs([((1.0, 1.0), 0), ((2.0, 2.0), 0)], [1.0, 2.0])
        ev = LinearSpanEvaluator(kv, coords, cap=9.0)
        assert ev.dimension == 1
        assert ev.evaluate_feature([3.0, 3.0]) == pytest.approx(3.0)
        assert ev.evaluate_feature([1.0, 0.0]) == 9.0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 10_000))
    def test_reproduces_observations_with_independent_features(self, d, seed):
        rng = np.random.default_rng(seed)
        feats = rng.normal(size=(d, d)) + 3 * np.eye(d)
        ys = rng.uniform(0, 5, d)
        kv = KeyValueSet.from_pairs([(tuple(f), 0) for f in feats], ys)
        ev = LinearSpanEvaluator(kv, coords, cap=100.0)
        got = np.array([ev.evaluate_feature(f) for f in feats])
        np.testing.assert_allclose(got, ys, atol=1e-8)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 10_000))
    def test_invariant_to_key_order(self, d, seed):
        rng = np.random.default_rng(seed)
        feats = rng.normal(size=(d + 2, d))
        ys = rng.uniform(0, 5, d + 2)
        perm = rng.permutation(d + 2)
        kv = KeyValueSet.from_pairs([(tuple(f), 0) for f in feats], ys)
        kvp = KeyValueSet.from_pairs([(tuple(feats[i]), 0) for i in perm], ys[perm])
        q = rng.normal(size=d)
        a = LinearSpanEvaluator(kv, coords, cap=100.0).evaluate_feature(q)
        b = LinearSpanEvaluator(kvp, coords, cap=100.0).evaluate_feature(q)
        assert a == pytest.approx(b, abs=1e-8)

    def test_clamp(self):
        kv = KeyValueSet.from_pairs([((1.0, 0.0), 0), ((0.0, 1.0), 0)], [1.0, 2.0])
        ev = LinearSpanEvaluator(kv, coords, cap=2.5, clamp=True)
        assert ev.evaluate_feature([1.0, 1.0]) == 2.5
        assert ev.evaluate_feature([1.0, -1.0]) == 0.0


class TestTabular:
    def test_default_and_stored(self):
        kv = KeyValueSet.from_pairs([(0, 1), (0, 1), (2, 0)], [0.7, 0.4, 0.2])
        ev = TabularEvaluator(kv, 5.0)
        assert ev(0, 1) == 0.4
        assert ev(2, 0) == 0.2
        assert ev(1, 1) == 5.0
        assert ev.evaluate_grid([0, 1], [0, 1]).tolist() == [[5.0, 0.4], [5.0, 5.0]]
