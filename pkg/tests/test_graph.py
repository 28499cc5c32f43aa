import random

import pytest

from accelgraph.graph import (
    Edge,
    GraphParseError,
    Role,
    apply_updates,
    build_blocks,
    even_sizes,
    load_edge_list,
    partition_graph,
)


def write(tmp_path, text, name="g.el"):
    path = tmp_path / name
    path.write_bytes(text.encode("ascii"))
    return path


class TestLoadEdgeList:
    def test_plain_pairs(self, tmp_path):
        vertices, edges = load_edge_list(write(tmp_path, "0 1\n1 2\n"))
        assert vertices == {0, 1, 2}
        assert edges == [Edge(0, 1, 1.0), Edge(1, 2, 1.0)]

    def test_comment_and_weight(self, tmp_path):
        vertices, edges = load_edge_list(write(tmp_path, "# c\n3 4 2.5\n"))
        assert vertices == {3, 4}
        assert edges == [Edge(3, 4, 2.5)]

    def test_malformed_line_reports_lineno(self, tmp_path):
        with pytest.raises(GraphParseError, match="line 1"):
            load_edge_list(write(tmp_path, "a b\n"))

    def test_negative_weight_rejected(self, tmp_path):
        with pytest.raises(GraphParseError, match="line 2"):
            load_edge_list(write(tmp_path, "0 1\n1 2 -3.5\n"))

    def test_crlf_accepted(self, tmp_path):
        vertices, edges = load_edge_list(write(tmp_path, "0 1\r\n1 2 0.5\r\n"))
        assert vertices == {0, 1, 2}
        assert edges[1].weight == 0.5

    def test_blank_lines_skipped(self, tmp_path):
        _, edges = load_edge_list(write(tmp_path, "0 1\n\n1 2\n"))
        assert len(edges) == 2

    def test_wrong_field_count(self, tmp_path):
        with pytest.raises(GraphParseError, match="expected 2 or 3 fields"):
            load_edge_list(write(tmp_path, "0 1 2 3\n"))

    def test_duplicate_edges_preserved(self, tmp_path):
        _, edges = load_edge_list(write(tmp_path, "0 1\n0 1\n"))
        assert len(edges) == 2


class TestPartitionGraph:
    def test_single_partition_holds_everything(self):
        g = partition_graph({0, 1, 2, 3}, [Edge(0, 1), Edge(2, 3)], [4])
        assert g.num_nodes == 1
        assert set(g.partitions[0].vertices) == {0, 1, 2, 3}
        assert len(g.partitions[0].edges) == 2

    def test_contiguous_split(self):
        g = partition_graph({0, 1, 2, 3}, [Edge(0, 1), Edge(2, 3)], [2, 2])
        assert set(g.partitions[0].vertices) == {0, 1}
        assert set(g.partitions[1].vertices) == {2, 3}
        assert [e.src for e in g.partitions[0].edges] == [0]
        assert [e.src for e in g.partitions[1].edges] == [2]

    def test_cross_edge_lives_at_source(self):
        g = partition_graph(set(range(6)), [Edge(0, 5)], [3, 3])
        assert g.vertex_owner[5] == 1
        assert len(g.partitions[0].edges) == 1
        assert len(g.partitions[1].edges) == 0

    def test_size_sum_mismatch(self):
        with pytest.raises(ValueError, match="sum to 3"):
            partition_graph({0, 1, 2, 3}, [], [2, 1])

    def test_negative_size(self):
        with pytest.raises(ValueError, match="non-negative"):
            partition_graph({0, 1}, [], [3, -1])

    def test_invariants_on_random_graphs(self):
        rng = random.Random(7)
        for _ in range(25):
            n = rng.randint(1, 40)
            ids = rng.sample(range(1000), n)  # sparse, non-contiguous ids
            edges = [
                Edge(rng.choice(ids), rng.choice(ids)) for _ in range(rng.randint(0, 80))
            ]
            m = rng.randint(1, 4)
            sizes = even_sizes(n, m)
            g = partition_graph(ids, edges, sizes)
            owned = [set(p.vertices) for p in g.partitions]
            for i in range(m):
                for j in range(i + 1, m):
                    assert not owned[i] & owned[j]
            assert set().union(*owned) == set(ids)
            for p in g.partitions:
                assert set(p.ve_map) == set(p.vertices)
                for e in p.edges:
                    assert g.vertex_owner[e.src] == p.node_id
            assert sum(len(p.edges) for p in g.partitions) == len(edges)


def star_partition():
    edges = [Edge(0, i) for i in range(1, 5)]
    g = partition_graph({0, 1, 2, 3, 4}, edges, [5])
    part = g.partitions[0]
    for vid, v in part.vertices.items():
        v.attr = vid * 10
    return part


class TestBuildBlocks:
    def test_empty_active(self):
        assert build_blocks(star_partition(), set(), 4) == []

    def test_final_short_block(self):
        part = star_partition()
        part.vertices[1].attr = 0
        # center also gets an extra edge set: 5 triplets via 4 star edges + 1 from vertex 1
        part.edges.append(Edge(1, 0))
        part.ve_map[1].append(4)
        blocks = build_blocks(part, {0, 1}, 2)
        assert [len(b) for b in blocks] == [2, 2, 1]

    def test_star_block_shares_source_attr(self):
        blocks = build_blocks(star_partition(), {0}, 4)
        assert len(blocks) == 1
        assert len(blocks[0]) == 4
        assert {t.src_attr for t in blocks[0].triplets} == {0}
        assert [t.edge.dst for t in blocks[0].triplets] == [1, 2, 3, 4]
        assert blocks[0].role is Role.NEW

    def test_deterministic(self):
        part = star_partition()
        a = build_blocks(part, {0}, 3)
        b = build_blocks(part, {0}, 3)
        assert [blk.triplets for blk in a] == [blk.triplets for blk in b]

    def test_coverage_matches_enumeration(self):
        rng = random.Random(3)
        ids = list(range(12))
        edges = [Edge(rng.choice(ids), rng.choice(ids)) for _ in range(40)]
        g = partition_graph(ids, edges, [12])
        part = g.partitions[0]
        for vid, v in part.vertices.items():
            v.attr = vid
        active = {0, 3, 5, 11}
        expected = []
        for vid in sorted(active):
            for idx in part.ve_map[vid]:
                expected.append(part.edges[idx])
        blocks = build_blocks(part, active, 3)
        got = [t.edge for b in blocks for t in b.triplets]
        assert got == expected

    def test_block_size_validation(self):
        with pytest.raises(ValueError):
            build_blocks(star_partition(), {0}, 0)


class TestApplyUpdates:
    def test_same_value_is_noop(self):
        part = star_partition()
        assert apply_updates(part, [(3, 30)]) == 0
        assert part.vertices[3].updated is False

    def test_change_sets_flag(self):
        part = star_partition()
        assert apply_updates(part, [(3, 5.0)]) == 1
        assert part.vertices[3].attr == 5.0
        assert part.vertices[3].updated is True

    def test_batch_counts_only_differing(self):
        part = star_partition()
        updates = [(1, 10), (2, 99), (3, 98)]
        assert apply_updates(part, updates) == 2

    def test_unknown_vertex(self):
        with pytest.raises(ValueError, match="unknown vertex 77"):
            apply_updates(star_partition(), [(77, 1)])
