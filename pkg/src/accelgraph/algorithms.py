"""Three-phase iterative algorithm kit and the reference runner.

Every algorithm is expressed as three operations over keyed messages:

* ``gen`` turns an edge triplet into a message for the destination vertex,
* ``merge_payloads`` folds two message payloads for the same target,
* ``apply_one`` produces a vertex's new attribute from the merged payload.

The merge operator must be associative and commutative, since the runtime is
free to fold partial message sets in any grouping. ``run_reference`` executes
the same three operations in a single un-partitioned, un-pipelined loop and
serves as the ground-truth oracle for every equivalence test.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

from .graph import EdgeTriplet, Partition

INF = math.inf

# target vertex id -> merged payload
MessageSet = dict[int, object]


@dataclass(frozen=True, slots=True)
class Message:
    target: int
    payload: object


class Algorithm:
    """Base interface; see the concrete classes below for the semantics."""

    name = "abstract"
    # True when apply must visit every owned vertex each iteration, not just
    # message targets (PageRank's damping floor applies to unfed vertices too).
    applies_to_all = False

    def initial_attr(self, vid: int) -> object:
        raise NotImplementedError

    def initially_active(self, vid: int) -> bool:
        raise NotImplementedError

    def gen(self, triplet: EdgeTriplet) -> Message | None:
        raise NotImplementedError

    def merge_payloads(self, a: object, b: object) -> object:
        raise NotImplementedError

    def zero_payload(self) -> object:
        raise NotImplementedError

    def apply_one(self, vid: int, old_attr: object, payload: object) -> tuple[object, bool]:
        """Return (new_attr, active_next_iteration)."""
        raise NotImplementedError

    def attrs_equal(self, a: object, b: object) -> bool:
        return a == b

    def convergence_stat(self, old_attr: object, new_attr: object) -> float:
        """Per-vertex change magnitude fed into the convergence vote."""
        return 0.0 if self.attrs_equal(old_attr, new_attr) else 1.0

    def vote(self, max_stat: float, next_active: set[int]) -> bool:
        """Local convergence vote after an apply round."""
        return not next_active

    def default_iteration_cap(self, num_vertices: int) -> int:
        raise NotImplementedError

    def format_attr(self, attr: object) -> str:
        raise NotImplementedError


class SsspBellmanFord(Algorithm):
    """Multi-source Bellman-Ford; distances to all sources carried per vertex.

    The attribute is a tuple of distances, one slot per source, so a single
    run relaxes every source simultaneously.
    """

    name = "sssp"

    def __init__(self, sources: list[int]):
        if not sources:
            raise ValueError("sssp needs at least one source vertex")
        self.sources = list(sources)
        self.arity = len(sources)

    def initial_attr(self, vid):
        return tuple(0.0 if vid == s else INF for s in self.sources)

    def initially_active(self, vid):
        return vid in self.sources

    def gen(self, triplet):
        src_dist = triplet.src_attr
        w = triplet.edge.weight
        return Message(triplet.edge.dst, tuple(d + w for d in src_dist))

    def merge_payloads(self, a, b):
        return tuple(min(x, y) for x, y in zip(a, b))

    def zero_payload(self):
        return (INF,) * self.arity

    def apply_one(self, vid, old_attr, payload):
        new = tuple(min(o, p) for o, p in zip(old_attr, payload))
        return new, new != old_attr

    def default_iteration_cap(self, num_vertices):
        # Bellman-Ford settles within |V| rounds on non-negative weights.
        return num_vertices + 1

    def format_attr(self, attr):
        return " ".join("inf" if math.isinf(d) else repr(d) for d in attr)


class PageRank(Algorithm):
    """Damped PageRank; the attribute is (rank, out_degree).

    Dangling vertices keep their rank mass to themselves: nothing is
    redistributed, which keeps total mass |V| on closed graphs.
    """

    name = "pagerank"
    applies_to_all = True
    damping = 0.85
    base = 0.15  # 1 - damping, kept exact
    tolerance = 1e-9

    def __init__(self, out_degree: dict[int, int]):
        self.out_degree = out_degree

    def initial_attr(self, vid):
        return (1.0, self.out_degree[vid])

    def initially_active(self, vid):
        return True

    def gen(self, triplet):
        rank, out_deg = triplet.src_attr
        return Message(triplet.edge.dst, rank / out_deg)

    def merge_payloads(self, a, b):
        return a + b

    def zero_payload(self):
        return 0.0

    def apply_one(self, vid, old_attr, payload):
        _, out_deg = old_attr
        return (self.base + self.damping * payload, out_deg), True

    def convergence_stat(self, old_attr, new_attr):
        return abs(new_attr[0] - old_attr[0])

    def vote(self, max_stat, next_active):
        return max_stat < self.tolerance

    def default_iteration_cap(self, num_vertices):
        return 100

    def format_attr(self, attr):
        return repr(attr[0])


class LabelPropagation(Algorithm):
    """Majority-label propagation with smallest-label tie-break."""

    name = "lp"

    def initial_attr(self, vid):
        return vid

    def initially_active(self, vid):
        return True

    def gen(self, triplet):
        return Message(triplet.edge.dst, Counter({triplet.src_attr: 1}))

    def merge_payloads(self, a, b):
        return a + b

    def zero_payload(self):
        return Counter()

    def apply_one(self, vid, old_attr, payload):
        if not payload:
            return old_attr, False
        best = max(payload.items(), key=lambda kv: (kv[1], -kv[0]))
        new = best[0]
        return new, new != old_attr

    def default_iteration_cap(self, num_vertices):
        return 15

    def format_attr(self, attr):
        return str(attr)


def make_algorithm(
    name: str,
    vertex_ids: Iterable[int],
    out_degree: dict[int, int] | None = None,
    sources: list[int] | None = None,
) -> Algorithm:
    """Instantiate an algorithm for a concrete graph.

    SSSP defaults to the 4 lowest vertex ids as sources (fewer on graphs with
    fewer than 4 vertices).
    """
    if name == "sssp":
        if sources is None:
            sources = sorted(vertex_ids)[:4]
        return SsspBellmanFord(sources)
    if name == "pagerank":
        if out_degree is None:
            raise ValueError("pagerank needs the global out-degree table")
        return PageRank(out_degree)
    if name == "lp":
        return LabelPropagation()
    raise ValueError(f"unknown algorithm {name!r}")


def msg_gen(algorithm: Algorithm, blocks) -> list[Message]:
    """Run gen over every triplet of every block, in block order."""
    out: list[Message] = []
    for block in blocks:
        for triplet in block.triplets:
            msg = algorithm.gen(triplet)
            if msg is not None:
                out.append(msg)
    return out


def msg_merge(algorithm: Algorithm, messages: Iterable[Message]) -> MessageSet:
    """Group messages by target and fold with the algorithm's merge operator."""
    merged: MessageSet = {}
    for msg in messages:
        if msg.target in merged:
            merged[msg.target] = algorithm.merge_payloads(merged[msg.target], msg.payload)
        else:
            merged[msg.target] = msg.payload
    return merged


def merge_sets(algorithm: Algorithm, sets: Iterable[MessageSet]) -> MessageSet:
    """Fold several partial message sets into one."""
    total: MessageSet = {}
    for part in sets:
        for target, payload in part.items():
            if target in total:
                total[target] = algorithm.merge_payloads(total[target], payload)
            else:
                total[target] = payload
    return total


def msg_apply(
    algorithm: Algorithm, partition: Partition, msgs: MessageSet
) -> tuple[list[tuple[int, object]], set[int]]:
    """Compute attribute updates and the next frontier for one partition.

    Every message target must be owned by the partition. Returns the updates
    whose attribute actually changed plus the set of vertices active next
    iteration.
    """
    for target in msgs:
        if not partition.owns(target):
            raise ValueError(
                f"message targets vertex {target} not owned by node {partition.node_id}"
            )
    if algorithm.applies_to_all:
        targets = sorted(partition.vertices)
    else:
        targets = sorted(msgs)

    updates: list[tuple[int, object]] = []
    next_active: set[int] = set()
    for vid in targets:
        old = partition.vertices[vid].attr
        payload = msgs.get(vid, algorithm.zero_payload())
        new, active = algorithm.apply_one(vid, old, payload)
        if not algorithm.attrs_equal(new, old):
            updates.append((vid, new))
        if active:
            next_active.add(vid)
    return updates, next_active


def run_reference(
    algorithm: Algorithm,
    vertices: Iterable[int],
    edges,
    max_iterations: int | None = None,
) -> dict[int, object]:
    """Single-lane, un-partitioned, un-pipelined gen -> merge -> apply loop.

    This is the ground-truth oracle: no blocks, no daemons, no caching. It
    iterates until the algorithm's own convergence vote passes or the
    iteration cap is hit.
    """
    ids = sorted(set(vertices))
    attrs = {vid: algorithm.initial_attr(vid) for vid in ids}
    out_edges: dict[int, list] = {vid: [] for vid in ids}
    for edge in edges:
        out_edges[edge.src].append(edge)
    active = {vid for vid in ids if algorithm.initially_active(vid)}
    cap = max_iterations if max_iterations is not None else algorithm.default_iteration_cap(len(ids))

    for _ in range(cap):
        messages: list[Message] = []
        for vid in sorted(active):
            for edge in out_edges[vid]:
                msg = algorithm.gen(EdgeTriplet(edge, attrs[edge.src], attrs[edge.dst]))
                if msg is not None:
                    messages.append(msg)
        merged = msg_merge(algorithm, messages)

        targets = ids if algorithm.applies_to_all else sorted(merged)
        next_active: set[int] = set()
        max_stat = 0.0
        for vid in targets:
            old = attrs[vid]
            payload = merged.get(vid, algorithm.zero_payload())
            new, is_active = algorithm.apply_one(vid, old, payload)
            if not algorithm.attrs_equal(new, old):
                max_stat = max(max_stat, algorithm.convergence_stat(old, new))
                attrs[vid] = new
            if is_active:
                next_active.add(vid)
        active = next_active
        if algorithm.vote(max_stat, next_active):
            break
    return attrs
