"""Inter-iteration synchronization: weighted-LRU caching, lazy uploading,
and synchronization skipping.

The cache sits between an agent and the upper system's authoritative store.
Clean entries are remote attributes kept to avoid re-downloading; dirty
entries are locally updated owned attributes whose upload is deferred until
some other node actually asks for them. A synchronization round runs in two
barrier-separated halves: every agent publishes the vertex ids it needs next
iteration (their union is the global query queue), then every agent uploads
exactly its dirty entries that appear in that queue (the global data queue).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable, Iterable


@dataclass(slots=True)
class CacheEntry:
    vertex_id: int
    attr: object
    weight: float  # raw units; effective weight = weight * cache scale
    dirty: bool
    token: int = 0


class SyncCache:
    """Weighted-LRU vertex cache with write-back dirty tracking.

    Weights decay once per iteration and get a fixed boost on every use, so
    recently touched entries survive. Eviction removes the minimum-weight
    entry (ties broken by smallest id); evicting a dirty entry is never
    silent: the value moves to ``pending_upload`` and is flushed to the
    store at the next synchronization round. Capacity 0 is pass-through:
    every get misses and every update goes straight to the pending set.

    Decay multiplies every weight by the same factor, which preserves their
    order, so internally weights are kept in raw units with a running scale
    and eviction uses a lazy-deletion min-heap instead of rescanning.
    """

    def __init__(self, capacity: int, decay: float = 0.5, boost: float = 1.0):
        if capacity < 0:
            raise ValueError("cache capacity must be >= 0")
        if not 0.0 < decay < 1.0:
            raise ValueError("decay must be in (0, 1)")
        if boost <= 0.0:
            raise ValueError("boost must be positive")
        self.capacity = capacity
        self.decay = decay
        self.boost = boost
        self.entries: dict[int, CacheEntry] = {}
        self.pending_upload: dict[int, object] = {}
        # Ids whose dirty value ever left the cache via eviction; they must be
        # re-announced whenever queried, since a remote clean copy may predate
        # the flushed update.
        self.announced: set[int] = set()
        self.hits = 0
        self.misses = 0
        self._scale = 1.0
        self._heap: list[tuple[float, int, int]] = []

    def weight_of(self, vertex_id: int) -> float:
        """Effective (decayed) weight of a cached entry."""
        return self.entries[vertex_id].weight * self._scale

    def get(self, vertex_id: int, fetch: Callable[[int], object]) -> object:
        """Return the cached attribute, fetching and inserting on a miss."""
        entry = self.entries.get(vertex_id)
        if entry is not None:
            self.hits += 1
            self._bump(entry)
            return entry.attr
        self.misses += 1
        attr = fetch(vertex_id)
        self._insert(vertex_id, attr, dirty=False)
        return attr

    def update(self, vertex_id: int, attr: object) -> None:
        """Record a local write: overwrite-or-insert as dirty, boost weight."""
        entry = self.entries.get(vertex_id)
        if entry is not None:
            entry.attr = attr
            entry.dirty = True
            self._bump(entry)
            return
        self._insert(vertex_id, attr, dirty=True)

    def install(self, vertex_id: int, attr: object) -> None:
        """Install a value delivered by a synchronization round (clean)."""
        entry = self.entries.get(vertex_id)
        if entry is not None:
            entry.attr = attr
            entry.dirty = False
            self._bump(entry)
            return
        self._insert(vertex_id, attr, dirty=False)

    def decay_all(self) -> None:
        """Scale every weight down once per iteration boundary."""
        self._scale *= self.decay
        if self._scale < 1e-120:
            self._renormalize()

    def dirty_ids(self) -> set[int]:
        return {vid for vid, e in self.entries.items() if e.dirty}

    def mark_uploaded(self, vertex_id: int) -> None:
        entry = self.entries.get(vertex_id)
        if entry is not None:
            entry.dirty = False

    def take_pending(self) -> dict[int, object]:
        pending, self.pending_upload = self.pending_upload, {}
        return pending

    def _bump(self, entry: CacheEntry) -> None:
        entry.weight += self.boost / self._scale
        entry.token += 1
        heapq.heappush(self._heap, (entry.weight, entry.vertex_id, entry.token))

    def _insert(self, vertex_id: int, attr: object, dirty: bool) -> None:
        if self.capacity == 0:
            if dirty:
                self.pending_upload[vertex_id] = attr
                self.announced.add(vertex_id)
            return
        entry = CacheEntry(vertex_id, attr, self.boost / self._scale, dirty)
        self.entries[vertex_id] = entry
        heapq.heappush(self._heap, (entry.weight, entry.vertex_id, entry.token))
        while len(self.entries) > self.capacity:
            self._evict()
        if len(self._heap) > max(64, 4 * len(self.entries)):
            self._compact()

    def _evict(self) -> None:
        while True:
            weight, vid, token = heapq.heappop(self._heap)
            entry = self.entries.get(vid)
            if entry is not None and entry.token == token and entry.weight == weight:
                break
        del self.entries[vid]
        if entry.dirty:
            self.pending_upload[vid] = entry.attr
            self.announced.add(vid)

    def _compact(self) -> None:
        self._heap = [(e.weight, e.vertex_id, e.token) for e in self.entries.values()]
        heapq.heapify(self._heap)

    def _renormalize(self) -> None:
        # raw weights grow as the scale shrinks; fold the scale back in before
        # float range becomes a concern
        for e in self.entries.values():
            e.weight *= self._scale
            e.token += 1
        self._scale = 1.0
        self._compact()


def build_global_query_queue(per_agent_queries: Iterable[Iterable[int]]) -> frozenset[int]:
    """Union of all agents' local need-lists for the round."""
    queue: set[int] = set()
    for queries in per_agent_queries:
        queue.update(queries)
    return frozenset(queue)


def lazy_upload_round(agents, store: dict[int, object]):
    """One full lazy-uploading round over a set of agents, sequentially.

    Mirrors the engine's barrier-separated phases: collect queries, build the
    global query queue, serve uploads (dirty-and-queried entries plus any
    eviction flushes) into the global data queue and the store, then deliver
    queried values back to each requester. Returns ``(gqq, gdq)``.

    The engine runs the same agent-side methods concurrently; this helper
    exists so the round logic is testable without threads.
    """
    queries = {}
    for agent in agents:
        queries[agent.node_id] = agent.publish_queries()
    gqq = build_global_query_queue(queries.values())

    gdq: dict[int, object] = {}
    for agent in sorted(agents, key=lambda a: a.node_id):
        uploads, flushes = agent.serve_uploads(gqq)
        for vid, attr in sorted(uploads.items()):
            gdq[vid] = attr
            store[vid] = attr
        for vid, attr in sorted(flushes.items()):
            store[vid] = attr

    for agent in agents:
        agent.deliver(gqq, gdq)
    return gqq, gdq


def skip_check(agents) -> bool:
    """True when every agent's round is partition-closed.

    An agent is closed when every vertex it updated this iteration has all of
    its out-neighbors locally owned, so the next iteration's messages and
    triplet snapshots resolve without any cross-node traffic.
    """
    return all(agent.round_closed() for agent in agents)
