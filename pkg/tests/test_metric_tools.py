import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metric_ucrl import (ContractViolation, DiscreteMetric, MetricSample, ProductL1Metric,
                         bound_at_optimal_epsilon, diameter, greedy_net, greedy_packing,
                         grid_sample, is_maximal_packing, is_net, is_packing, make_finite_random,
                         make_line_world, optimal_epsilon, regret_lower_bound,
                         regret_upper_bound)


def unit_grid():
    states = tuple(np.round(np.arange(101) * 0.01, 10))
    return MetricSample(states, (0.0,) * 101, ProductL1Metric())


def point_cloud(seed, n=60):
    """Points in the unit square: the first coordinate is the state, the second the action."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 1, (n, 2))
    return MetricSample(tuple(pts[:, 0]), tuple(pts[:, 1]), ProductL1Metric(1.0))


class TestNets:
    def test_unit_grid_quarter_net(self):
        sample = unit_grid()
        for method in ("first", "farthest"):
            net = greedy_net(sample, 0.25, method)
            assert net.size <= 4
            assert is_net(sample, net)
        # exhaustive minimum: no single point covers, the pair (0.25, 0.75) does
        pts = np.array(sample.states)
        covers = lambda c: (np.abs(pts[:, None] - pts[list(c)][None, :]).min(axis=1) <= 0.25).all()
        minimum = next(k for k in (1, 2, 3, 4)
                       if any(covers(c) for c in itertools.combinations(range(101), k)))
        assert minimum == 2
        assert greedy_net(sample, 0.25).size >= minimum

    def test_radius_at_least_diameter(self):
        sample = point_cloud(1)
        assert greedy_net(sample, diameter(sample)).size == 1
        assert greedy_packing(sample, diameter(sample)).size == 1

    def test_discrete_metric_small_radius(self):
        env = make_finite_random(0, 4, 3, 5)
        sample = grid_sample(env, 0.1)
        assert greedy_net(sample, 1e-9).size == 12
        assert greedy_packing(sample, 5 - 1e-3).size == 12

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(ContractViolation):
            greedy_net(unit_grid(), 0.0)
        with pytest.raises(ContractViolation):
            greedy_packing(unit_grid(), -1.0)
        with pytest.raises(ContractViolation):
            greedy_net(unit_grid(), 0.1, method="random")


class TestPackings:
    def test_unit_grid_quarter_packing(self):
        sample = unit_grid()
        pack = greedy_packing(sample, 0.25)
        assert pack.size == 4
        assert [sample.states[i] for i in greedy_packing(sample, 0.25, "in_order").centers] == \
            [0.0, 0.26, 0.52, 0.78]
        # five centers would need four gaps above 0.25 inside [0, 1]
        # maximality checked by plain loops, independent of the library checker
        centers = [sample.states[i] for i in pack.centers]
        for s in sample.states:
            if s not in centers:
                assert any(abs(s - c) <= 0.25 for c in centers)
        assert is_maximal_packing(sample, pack)

    def test_in_order_packing_equals_first_net(self):
        sample = point_cloud(7)
        for eps in (0.05, 0.2):
            assert greedy_packing(sample, eps, "in_order").centers == greedy_net(sample, eps).centers

    def test_unknown_order(self):
        with pytest.raises(ContractViolation):
            greedy_packing(unit_grid(), 0.1, order="random")

    def test_checkers_detect_bad_sets(self):
        sample = unit_grid()
        close = type(greedy_net(sample, 0.25))(0.25, (0, 10), "packing")
        assert not is_packing(sample, close)
        sparse = type(close)(0.25, (0,), "net")
        assert not is_net(sample, sparse)


class TestSandwich:
    @pytest.mark.parametrize("seed", range(4))
    @pytest.mark.parametrize("eps", [0.05, 0.1, 0.2, 0.4])
    def test_packing_net_sandwich(self, seed, eps):
        sample = point_cloud(seed)
        pack = greedy_packing(sample, eps)
        assert is_maximal_packing(sample, pack)
        for method in ("first", "farthest"):
            net = greedy_net(sample, eps, method)
            assert is_net(sample, net) and is_packing(sample, net)
            assert greedy_packing(sample, 2 * eps).size <= net.size <= pack.size

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.02, 0.5))
    def test_packing_at_twice_radius_never_exceeds_any_net(self, seed, eps):
        sample = point_cloud(seed, 40)
        big = greedy_packing(sample, 2 * eps).size
        assert big <= greedy_net(sample, eps, "farthest").size
        assert big <= greedy_net(sample, eps, "first").size
        assert is_maximal_packing(sample, greedy_packing(sample, eps))

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=2, max_size=60, unique=True),
           st.floats(0.01, 0.6), st.floats(0.01, 0.6))
    def test_sizes_nonincreasing_in_radius_on_a_line(self, xs, e1, e2):
        # sorted 1-D samples: in-order greedy is optimal, so sizes are exact and monotone
        lo, hi = sorted((e1, e2))
        xs = sorted(xs)
        sample = MetricSample(tuple(xs), (0.0,) * len(xs), ProductL1Metric())
        assert greedy_packing(sample, hi, "in_order").size <= greedy_packing(sample, lo, "in_order").size
        assert greedy_net(sample, hi).size <= greedy_net(sample, lo).size


class TestBounds:
    def test_upper_bound_formula(self):
        assert regret_upper_bound(10, 0.1, 2, 100, 5) == pytest.approx(250.0)
        assert regret_upper_bound(10, 0.0, 2, 100, 5) == 50.0
        assert regret_upper_bound(0, 0.1, 2, 100, 5) == pytest.approx(200.0)
        with pytest.raises(ContractViolation):
            regret_upper_bound(-1, 0.1, 2, 100, 5)

    def test_optimal_epsilon(self):
        assert optimal_epsilon(1, 1, 16, 1) == pytest.approx(0.25)
        values = [optimal_epsilon(2.0, 3.0, k, 2) for k in (10, 100, 1000, 10_000)]
        assert all(b < a for a, b in zip(values, values[1:]))
        with pytest.raises(ContractViolation):
            optimal_epsilon(1, 1, 16, 0)

    @pytest.mark.parametrize("diam,lip,k,dim", [(1, 1, 100, 1), (2.5, 6, 2000, 1),
                                                (1, 3, 500, 2), (4, 0.5, 10_000, 3)])
    def test_terms_balance_at_optimal_epsilon(self, diam, lip, k, dim):
        eps, cover, approx = bound_at_optimal_epsilon(diam, lip, k, 3, dim)
        assert cover / approx == pytest.approx(0.5)
        scale = (diam * lip * k) ** (dim / (dim + 1)) * 3
        assert cover == pytest.approx(scale)

    def test_lower_bound(self):
        assert regret_lower_bound(40, 20, 12, 3) == pytest.approx(0.5 * 20 * 9)
        assert regret_lower_bound(40, 0, 12, 3) == 0.0
        assert regret_lower_bound(40, 100, 12, 3) == regret_lower_bound(40, 20, 12, 3)
        with pytest.warns(RuntimeWarning):
            assert regret_lower_bound(40, 10, 5, 5) == 0.0

    def test_lower_bound_nondecreasing(self):
        vals = [regret_lower_bound(32, k, 16, 5) for k in range(0, 80)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


class TestSamples:
    def test_line_world_grid_sample(self):
        env = make_line_world(0, n_actions=3)
        sample = grid_sample(env, 0.1)
        assert len(sample) == 11 * 3
        assert diameter(sample) == pytest.approx(1.5)

    def test_discrete_diameter(self):
        sample = MetricSample.from_pairs([(0, 0), (1, 0), (1, 1)], DiscreteMetric(6))
        assert diameter(sample) == 6.0
