"""Shared builders and comparison helpers for the test suite."""

from __future__ import annotations

from accelgraph.algorithms import make_algorithm, run_reference
from accelgraph.engine import RunConfig, run
from accelgraph.graph import Edge, even_sizes, partition_graph


def build_graph(edge_pairs, m=1, sizes=None, weights=None):
    """Partitioned graph from (src, dst) pairs; returns (vertices, edges, graph)."""
    if weights is None:
        edges = [Edge(s, d, 1.0) for s, d in edge_pairs]
    else:
        edges = [Edge(s, d, w) for (s, d), w in zip(edge_pairs, weights)]
    vertices = {v for e in edges for v in (e.src, e.dst)}
    if sizes is None:
        sizes = even_sizes(len(vertices), m)
    return vertices, edges, partition_graph(vertices, edges, sizes)


def attrs_close(got, want, algo_name, rel=1e-9):
    """Exact equality for sssp/lp; relative rank tolerance for pagerank."""
    if set(got) != set(want):
        return False
    if algo_name == "pagerank":
        return all(
            abs(got[k][0] - want[k][0]) <= rel * max(1.0, abs(want[k][0])) for k in want
        )
    return got == want


def engine_vs_reference(edge_pairs, algo_name, m=1, model="bsp", weights=None,
                        max_iterations=None, **config_kwargs):
    """Run the engine and the oracle on the same instance; return both."""
    vertices, edges, graph = build_graph(edge_pairs, m=m, weights=weights)
    algorithm = make_algorithm(algo_name, vertices, graph.out_degree)
    reference = run_reference(algorithm, vertices, edges, max_iterations=max_iterations)
    config = RunConfig(max_iterations=max_iterations, **config_kwargs)
    attrs, metrics = run(graph, algorithm, model, config)
    return attrs, reference, metrics
