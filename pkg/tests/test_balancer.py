import itertools
import random

import pytest

from accelgraph.balancer import (
    BalanceProblem,
    CalibrationError,
    CapacityProblem,
    NodeCost,
    balance_capacity,
    balance_data,
    calibrate,
    makespan,
    real_valued_makespan,
)


def enumerate_optimum(total, costs):
    """Exhaustive min-max over every composition of total into len(costs) parts."""
    m = len(costs)
    best = None
    for cuts in itertools.combinations_with_replacement(range(total + 1), m - 1):
        sizes = []
        prev = 0
        for c in cuts:
            sizes.append(c - prev)
            prev = c
        sizes.append(total - prev)
        span = max(c * d for c, d in zip(costs, sizes))
        if best is None or span < best:
            best = span
    return best


class TestMakespan:
    def test_uniform(self):
        assert makespan([1, 1], [1.0, 1.0]) == 1.0

    def test_cost_weighted(self):
        assert makespan([3, 1], [1.0, 3.0]) == 3.0

    def test_matches_reference_fold(self):
        rng = random.Random(5)
        for _ in range(20):
            sizes = [rng.randint(0, 50) for _ in range(4)]
            costs = [rng.uniform(0.5, 4.0) for _ in range(4)]
            expected = 0.0
            for c, d in zip(costs, sizes):
                expected = max(expected, c * d)
            assert makespan(sizes, costs) == expected

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            makespan([1], [1.0, 2.0])


class TestBalanceData:
    def test_symmetric_split(self):
        problem = BalanceProblem(100, [NodeCost(1.0), NodeCost(1.0)])
        assert balance_data(problem) == [50, 50]

    def test_three_to_one(self):
        problem = BalanceProblem(4, [NodeCost(1.0), NodeCost(3.0)])
        sizes = balance_data(problem)
        assert sizes == [3, 1]
        assert makespan(sizes, [1.0, 3.0]) == enumerate_optimum(4, [1.0, 3.0]) == 3.0

    def test_geometric_costs_all_finish_together(self):
        problem = BalanceProblem(7, [NodeCost(1.0), NodeCost(2.0), NodeCost(4.0)])
        sizes = balance_data(problem)
        assert sizes == [4, 2, 1]
        assert [c * d for c, d in zip([1.0, 2.0, 4.0], sizes)] == [4.0, 4.0, 4.0]
        assert enumerate_optimum(7, [1.0, 2.0, 4.0]) == 4.0

    def test_sum_exactness(self):
        rng = random.Random(17)
        for _ in range(50):
            m = rng.randint(1, 5)
            total = rng.randint(1, 500)
            costs = [NodeCost(rng.uniform(0.2, 5.0)) for _ in range(m)]
            sizes = balance_data(BalanceProblem(total, costs))
            assert sum(sizes) == total
            assert all(s >= 0 for s in sizes)

    def test_real_valued_makespan_formula(self):
        rng = random.Random(23)
        for _ in range(30):
            m = rng.randint(1, 5)
            costs = [rng.uniform(0.2, 5.0) for _ in range(m)]
            total = rng.randint(1, 400)
            problem = BalanceProblem(total, [NodeCost(c) for c in costs])
            want = total / sum(1.0 / c for c in costs)
            assert real_valued_makespan(problem) == pytest.approx(want, rel=1e-12)

    def test_integerized_within_slack_of_enumeration(self):
        rng = random.Random(29)
        for _ in range(25):
            m = rng.randint(1, 3)
            total = rng.randint(1, 40)
            costs = [float(rng.randint(1, 4)) for _ in range(m)]
            sizes = balance_data(BalanceProblem(total, [NodeCost(c) for c in costs]))
            got = makespan(sizes, costs)
            best = enumerate_optimum(total, costs)
            assert got <= best + max(costs)

    def test_capacity_growth_never_sheds_data(self):
        rng = random.Random(31)
        for _ in range(25):
            m = rng.randint(2, 4)
            total = rng.randint(10, 300)
            costs = [rng.uniform(0.5, 4.0) for _ in range(m)]
            j = rng.randrange(m)
            before = balance_data(BalanceProblem(total, [NodeCost(c) for c in costs]))
            faster = costs[:]
            faster[j] = costs[j] / rng.uniform(1.5, 3.0)  # higher 1/c_j
            after = balance_data(BalanceProblem(total, [NodeCost(c) for c in faster]))
            assert after[j] >= before[j]


class TestBalanceCapacity:
    def test_anchor_at_largest_fragment(self):
        factors = balance_capacity(CapacityProblem([10, 5], max_factor=1.0))
        assert factors == [1.0, 0.5]
        assert makespan([10, 5], [1.0 / f for f in factors]) == pytest.approx(10.0)

    def test_scaled_factor(self):
        assert balance_capacity(CapacityProblem([8, 4], max_factor=4.0)) == [4.0, 2.0]

    def test_uniform_sizes_use_full_factor(self):
        assert balance_capacity(CapacityProblem([6, 6, 6], max_factor=2.5)) == [2.5, 2.5, 2.5]

    def test_tightness_on_samples(self):
        rng = random.Random(37)
        for _ in range(40):
            m = rng.randint(1, 5)
            sizes = [rng.randint(0, 100) for _ in range(m)]
            if all(d == 0 for d in sizes):
                sizes[0] = 1
            f = rng.uniform(0.5, 8.0)
            factors = balance_capacity(CapacityProblem(sizes, max_factor=f))
            d_star = max(sizes)
            bound = d_star / f
            for d, factor in zip(sizes, factors):
                assert factor <= f + 1e-12
                if factor > 0:
                    assert d / factor <= bound + 1e-12
            assert sizes[factors.index(max(factors))] == d_star or max(sizes) == 0

    def test_all_zero_sizes(self):
        with pytest.raises(ValueError, match="nothing to balance"):
            balance_capacity(CapacityProblem([0, 0], max_factor=1.0))

    def test_precondition_on_current_costs(self):
        with pytest.raises(ValueError, match="below current maximum"):
            CapacityProblem([1, 2], max_factor=0.5, current_costs=[NodeCost(1.0), NodeCost(1.0)])


class TestCalibrate:
    def test_exact_recovery_from_noiseless_samples(self):
        c, t_call = 0.75, 12.0
        obs = [(d, s, c * d + t_call * s) for d, s in [(100, 2), (300, 5), (700, 3), (50, 9)]]
        result = calibrate(obs)
        assert result.unit_cost == pytest.approx(c, rel=1e-9)
        assert result.call_cost == pytest.approx(t_call, rel=1e-9)

    def test_single_block_count_recovers_unit_cost_only(self):
        obs = [(d, 4, 2.0 * d + 8.0) for d in (10, 20, 40)]
        result = calibrate(obs)
        assert result.unit_cost == pytest.approx(2.0, rel=1e-9)
        assert result.call_cost is None

    def test_single_observation_rejected(self):
        with pytest.raises(CalibrationError, match="at least two"):
            calibrate([(10, 1, 5.0)])

    def test_constant_workload_rejected(self):
        with pytest.raises(CalibrationError, match="do not vary"):
            calibrate([(10, 2, 5.0), (10, 2, 5.0)])

    def test_fitted_ratio_from_simulated_run(self):
        # two nodes, per-unit cost ratio 2:1, measured through real engine
        # metrics; SSSP's moving frontier varies the workload per iteration
        from conftest import build_graph
        from accelgraph.algorithms import make_algorithm
        from accelgraph.daemon import AcceleratorProfile
        from accelgraph.engine import RunConfig, run
        from accelgraph.generators import generate

        pairs = generate("random", 60, p=0.05, seed=2)
        vertices, edges, graph = build_graph(pairs, m=2)
        algo = make_algorithm("sssp", vertices, graph.out_degree)
        config = RunConfig(
            node_profiles=[
                AcceleratorProfile(lanes=4, per_unit_cost=2.0, call_overhead=3.0),
                AcceleratorProfile(lanes=4, per_unit_cost=1.0, call_overhead=3.0),
            ],
            block_size=8,
        )
        _, metrics = run(graph, algo, "bsp", config)
        fitted = {}
        for node in (0, 1):
            obs = [
                (st.units, st.blocks, st.compute_time)
                for st in metrics.node_stats
                if st.node_id == node and st.units > 0
            ]
            fitted[node] = calibrate(obs).unit_cost
        ratio = fitted[0] / fitted[1]
        assert ratio == pytest.approx(2.0, rel=0.05)
