import math
import random
from collections import Counter

import pytest

from accelgraph.algorithms import (
    INF,
    LabelPropagation,
    Message,
    PageRank,
    SsspBellmanFord,
    make_algorithm,
    msg_apply,
    msg_gen,
    msg_merge,
    run_reference,
)
from accelgraph.graph import Edge, EdgeTriplet, TripletBlock, partition_graph


def triplet(src, dst, w, src_attr, dst_attr=None):
    return EdgeTriplet(Edge(src, dst, w), src_attr, dst_attr)


def block(*triplets):
    return TripletBlock(0, tuple(triplets))


class TestGen:
    def test_sssp_relaxation(self):
        algo = SsspBellmanFord([0, 10, 11, 12])
        msg = algo.gen(triplet(0, 1, 2.0, (0.0, INF, INF, INF)))
        assert msg == Message(1, (2.0, INF, INF, INF))

    def test_pagerank_share(self):
        algo = PageRank({0: 2, 1: 1})
        msg = algo.gen(triplet(0, 1, 1.0, (1.0, 2)))
        assert msg == Message(1, 0.5)

    def test_lp_contributions(self):
        algo = LabelPropagation()
        msgs = msg_gen(algo, [block(triplet(0, 2, 1.0, 7), triplet(1, 2, 1.0, 7))])
        assert msgs == [Message(2, Counter({7: 1})), Message(2, Counter({7: 1}))]

    def test_gen_is_pure(self):
        algo = SsspBellmanFord([0])
        blocks = [block(triplet(0, 1, 1.0, (0.0,)), triplet(0, 2, 3.0, (0.0,)))]
        assert msg_gen(algo, blocks) == msg_gen(algo, blocks)


class TestMerge:
    def test_sssp_elementwise_min(self):
        algo = SsspBellmanFord([0, 1, 2, 3])
        merged = msg_merge(
            algo,
            [Message(5, (3.0, INF, INF, INF)), Message(5, (1.0, INF, INF, INF))],
        )
        assert merged == {5: (1.0, INF, INF, INF)}

    def test_pagerank_sum(self):
        algo = PageRank({})
        merged = msg_merge(algo, [Message(5, 0.5), Message(5, 0.25)])
        assert merged == {5: 0.75}

    def test_lp_multiset_union(self):
        algo = LabelPropagation()
        merged = msg_merge(algo, [Message(5, Counter({7: 1})), Message(5, Counter({9: 2}))])
        assert merged == {5: Counter({7: 1, 9: 2})}

    @pytest.mark.parametrize("algo_name", ["sssp", "pagerank", "lp"])
    def test_fold_order_never_changes_result(self, algo_name):
        rng = random.Random(41)
        algo = make_algorithm(algo_name, range(8), {v: 1 for v in range(8)})
        for _ in range(30):
            msgs = []
            for _ in range(rng.randint(0, 25)):
                target = rng.randrange(4)
                if algo_name == "sssp":
                    payload = tuple(rng.choice([INF, rng.uniform(0, 9)]) for _ in range(4))
                elif algo_name == "pagerank":
                    payload = rng.uniform(0, 1)
                else:
                    payload = Counter({rng.randrange(5): 1})
                msgs.append(Message(target, payload))
            shuffled = msgs[:]
            rng.shuffle(shuffled)
            a = msg_merge(algo, msgs)
            b = msg_merge(algo, shuffled)
            if algo_name == "pagerank":
                assert set(a) == set(b)
                for k in a:
                    assert a[k] == pytest.approx(b[k], rel=1e-12)
            else:
                assert a == b


class TestApply:
    def make_partition(self, attrs):
        ids = set(attrs)
        g = partition_graph(ids, [], [len(ids)])
        part = g.partitions[0]
        for vid, attr in attrs.items():
            part.vertices[vid].attr = attr
        return part

    def test_sssp_no_improvement_is_inactive(self):
        algo = SsspBellmanFord([0, 1, 2, 3])
        part = self.make_partition({7: (5.0, INF, INF, INF)})
        updates, active = msg_apply(algo, part, {7: (5.0, INF, INF, INF)})
        assert updates == []
        assert active == set()

    def test_pagerank_damping_floor(self):
        algo = PageRank({7: 1})
        part = self.make_partition({7: (1.0, 1)})
        updates, active = msg_apply(algo, part, {})
        assert updates == [(7, (0.15, 1))]
        assert active == {7}

    def test_lp_majority_with_tie_break(self):
        algo = LabelPropagation()
        part = self.make_partition({7: 3})
        updates, active = msg_apply(algo, part, {7: Counter({3: 1, 1: 2})})
        assert updates == [(7, 1)]
        assert active == {7}

    def test_lp_tie_breaks_to_smallest(self):
        algo = LabelPropagation()
        assert algo.apply_one(0, 9, Counter({4: 2, 2: 2, 8: 1})) == (2, True)

    def test_non_owned_target_rejected(self):
        algo = SsspBellmanFord([0])
        part = self.make_partition({7: (0.0,)})
        with pytest.raises(ValueError, match="not owned"):
            msg_apply(algo, part, {8: (1.0,)})


class TestRunReference:
    def test_sssp_path_hop_count(self):
        edges = [Edge(0, 1), Edge(1, 2)]
        algo = make_algorithm("sssp", {0, 1, 2}, None)
        attrs = run_reference(algo, {0, 1, 2}, edges)
        assert attrs[2][0] == 2.0

    def test_pagerank_two_cycle_symmetry(self):
        edges = [Edge(0, 1), Edge(1, 0)]
        algo = make_algorithm("pagerank", {0, 1}, {0: 1, 1: 1})
        attrs = run_reference(algo, {0, 1}, edges)
        assert attrs[0][0] == pytest.approx(attrs[1][0], rel=1e-12)
        assert attrs[0][0] + attrs[1][0] == pytest.approx(2.0, abs=1e-6)

    def test_lp_triangle_converges_to_smallest_label(self):
        ids = {1, 2, 3}
        edges = [Edge(a, b) for a in ids for b in ids if a != b]
        algo = make_algorithm("lp", ids, None)
        attrs = run_reference(algo, ids, edges)
        assert attrs == {1: 1, 2: 1, 3: 1}

    def test_sssp_distances_never_increase_with_more_rounds(self):
        rng = random.Random(11)
        ids = list(range(20))
        edges = [
            Edge(rng.randrange(20), rng.randrange(20), rng.choice([1.0, 2.0, 5.0]))
            for _ in range(60)
        ]
        algo = make_algorithm("sssp", ids, None)
        prev = None
        for cap in range(1, 8):
            attrs = run_reference(algo, ids, edges, max_iterations=cap)
            if prev is not None:
                for vid in ids:
                    for d_new, d_old in zip(attrs[vid], prev[vid]):
                        assert d_new <= d_old
            prev = attrs

    def test_pagerank_mass_conserved_on_closed_graph(self):
        n = 12
        edges = [Edge(i, (i + 1) % n) for i in range(n)] + [
            Edge(i, (i + 5) % n) for i in range(n)
        ]
        out_degree = {i: 2 for i in range(n)}
        algo = make_algorithm("pagerank", range(n), out_degree)
        attrs = run_reference(algo, range(n), edges)
        assert sum(a[0] for a in attrs.values()) == pytest.approx(n, abs=1e-6)

    def test_sssp_default_sources_are_lowest_ids(self):
        algo = make_algorithm("sssp", {5, 9, 2, 14, 30}, None)
        assert algo.sources == [2, 5, 9, 14]

    def test_lp_iteration_cap(self):
        algo = make_algorithm("lp", {0, 1}, None)
        # two-cycle oscillates; the cap must stop it
        attrs = run_reference(algo, {0, 1}, [Edge(0, 1), Edge(1, 0)])
        assert set(attrs.values()) == {0, 1}
