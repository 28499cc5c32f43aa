"""Graph tables, contiguous-range partitioning, and triplet-block construction.

A loaded graph is a global vertex set plus an edge list. For a run it is split
into per-node partitions: each node owns a contiguous ascending-id range of
vertices, every edge lives in its *source* vertex's partition, and a
vertex-to-edge mapping table backs block construction.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable


class GraphParseError(ValueError):
    """Raised for malformed edge-list input; carries the 1-based line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(slots=True)
class Vertex:
    """One row of a vertex table.

    ``active`` marks membership in the next iteration's frontier; ``updated``
    marks an attribute change that has not yet been synchronized upstream.
    """

    id: int
    attr: object = None
    active: bool = False
    updated: bool = False


@dataclass(frozen=True, slots=True)
class Edge:
    src: int
    dst: int
    weight: float = 1.0


class Role(Enum):
    """Buffer role labels cycled by the pipeline: New -> Compute -> Upload."""

    NEW = "new"
    COMPUTE = "compute"
    UPLOAD = "upload"

    def next(self) -> "Role":
        order = (Role.NEW, Role.COMPUTE, Role.UPLOAD)
        return order[(order.index(self) + 1) % 3]


@dataclass(frozen=True, slots=True)
class EdgeTriplet:
    """An edge with attribute snapshots of both endpoints.

    The snapshots are taken at block-construction time and never change while
    the block is in flight.
    """

    edge: Edge
    src_attr: object
    dst_attr: object


@dataclass(slots=True)
class TripletBlock:
    """Fixed-size batch of triplets; the unit flowing through the pipeline.

    ``index`` is the block's position within its pass, used to reassemble
    results deterministically. The role label is advanced by buffer rotation;
    the triplet tuple itself is immutable content.
    """

    index: int
    triplets: tuple[EdgeTriplet, ...]
    role: Role = Role.NEW

    def __len__(self) -> int:
        return len(self.triplets)


def content_checksum(payload: object) -> str:
    """Stable digest of buffer content, used to prove rotations never copy."""
    return hashlib.sha1(repr(payload).encode("utf-8")).hexdigest()


@dataclass
class Partition:
    """Node-local vertex table, edge table, and vertex-edge mapping table."""

    node_id: int
    vertices: dict[int, Vertex] = field(default_factory=dict)
    edges: list[Edge] = field(default_factory=list)
    ve_map: dict[int, list[int]] = field(default_factory=dict)

    def owns(self, vid: int) -> bool:
        return vid in self.vertices

    def out_edges(self, vid: int) -> list[Edge]:
        return [self.edges[i] for i in self.ve_map.get(vid, ())]


@dataclass
class PartitionedGraph:
    partitions: list[Partition]
    vertex_owner: dict[int, int]
    out_degree: dict[int, int]

    @property
    def num_nodes(self) -> int:
        return len(self.partitions)

    @property
    def num_vertices(self) -> int:
        return len(self.vertex_owner)

    @property
    def num_edges(self) -> int:
        return sum(len(p.edges) for p in self.partitions)

    def vertex_ids(self) -> list[int]:
        return sorted(self.vertex_owner)


def load_edge_list(path) -> tuple[set[int], list[Edge]]:
    """Parse a whitespace-separated edge-list file.

    Each non-comment line is ``src dst`` or ``src dst weight``. Lines starting
    with '#' are comments; blank lines are ignored. LF and CRLF both accepted.
    Duplicate edges are preserved in file order.
    """
    vertices: set[int] = set()
    edges: list[Edge] = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise GraphParseError(lineno, f"expected 2 or 3 fields, got {len(parts)}")
            try:
                src = int(parts[0])
                dst = int(parts[1])
            except ValueError:
                raise GraphParseError(lineno, f"non-integer vertex id in {parts[:2]}") from None
            if src < 0 or dst < 0:
                raise GraphParseError(lineno, "vertex ids must be non-negative")
            weight = 1.0
            if len(parts) == 3:
                try:
                    weight = float(parts[2])
                except ValueError:
                    raise GraphParseError(lineno, f"non-numeric weight {parts[2]!r}") from None
                if weight < 0:
                    raise GraphParseError(lineno, f"negative weight {weight}")
            vertices.add(src)
            vertices.add(dst)
            edges.append(Edge(src, dst, weight))
    return vertices, edges


def even_sizes(n: int, m: int) -> list[int]:
    """Split n items into m near-equal contiguous chunk sizes."""
    base, rem = divmod(n, m)
    return [base + (1 if j < rem else 0) for j in range(m)]


def partition_graph(
    vertices: Iterable[int], edges: list[Edge], sizes: list[int]
) -> PartitionedGraph:
    """Assign vertices to nodes by contiguous ascending-id ranges.

    The first ``sizes[0]`` ids go to node 0, the next ``sizes[1]`` to node 1,
    and so on. Each edge is placed in its source's partition.
    """
    ordered = sorted(set(vertices))
    if any(s < 0 for s in sizes):
        raise ValueError(f"partition sizes must be non-negative, got {sizes}")
    if sum(sizes) != len(ordered):
        raise ValueError(
            f"partition sizes sum to {sum(sizes)}, expected {len(ordered)} vertices"
        )
    if not sizes:
        raise ValueError("at least one partition required")

    partitions = [Partition(node_id=j) for j in range(len(sizes))]
    vertex_owner: dict[int, int] = {}
    cursor = 0
    for j, size in enumerate(sizes):
        for vid in ordered[cursor : cursor + size]:
            vertex_owner[vid] = j
            partitions[j].vertices[vid] = Vertex(id=vid)
            partitions[j].ve_map[vid] = []
        cursor += size

    out_degree = {vid: 0 for vid in ordered}
    for edge in edges:
        if edge.src not in vertex_owner or edge.dst not in vertex_owner:
            raise ValueError(f"edge {edge} references a vertex outside the vertex set")
        part = partitions[vertex_owner[edge.src]]
        part.ve_map[edge.src].append(len(part.edges))
        part.edges.append(edge)
        out_degree[edge.src] += 1

    return PartitionedGraph(partitions, vertex_owner, out_degree)


def build_blocks(
    partition: Partition,
    active: set[int],
    block_size: int,
    attr_of: Callable[[int], object] | None = None,
) -> list[TripletBlock]:
    """Materialize the active frontier's out-edges as fixed-size triplet blocks.

    Triplets are emitted in ascending source id, then local edge index, and
    grouped into blocks of exactly ``block_size`` except a shorter final block.
    ``attr_of`` resolves any vertex id to its current attribute (local table
    plus whatever remote mirror the caller maintains); by default only the
    partition's own table is consulted.
    """
    if block_size < 1:
        raise ValueError(f"block size must be >= 1, got {block_size}")
    if attr_of is None:
        attr_of = lambda vid: partition.vertices[vid].attr

    triplets: list[EdgeTriplet] = []
    for vid in sorted(v for v in active if partition.owns(v)):
        for idx in partition.ve_map.get(vid, ()):
            edge = partition.edges[idx]
            triplets.append(EdgeTriplet(edge, attr_of(edge.src), attr_of(edge.dst)))

    blocks = []
    for start in range(0, len(triplets), block_size):
        blocks.append(
            TripletBlock(index=len(blocks), triplets=tuple(triplets[start : start + block_size]))
        )
    return blocks


def apply_updates(
    partition: Partition,
    updates: list[tuple[int, object]],
    attrs_equal: Callable[[object, object], bool] | None = None,
) -> int:
    """Overwrite vertex attributes; flag and count the ones that changed.

    Equality is delegated to the running algorithm's comparator so that
    convergence detection stays algorithm-owned.
    """
    if attrs_equal is None:
        attrs_equal = lambda a, b: a == b
    changed = 0
    for vid, attr in updates:
        vertex = partition.vertices.get(vid)
        if vertex is None:
            raise ValueError(f"update targets unknown vertex {vid} on node {partition.node_id}")
        if not attrs_equal(vertex.attr, attr):
            vertex.attr = attr
            vertex.updated = True
            changed += 1
    return changed
