"""The agent: per-node bridge between the upper system and its daemons.

An agent owns one shared region per attached daemon, distributes pipeline
blocks round-robin across daemons, and runs the agent side of the pipeline
protocol: after every buffer rotation it spawns one upload stage and one
download stage, and only forwards the next exchange once both stages and the
daemon's compute have finished. All remote data crosses the node boundary
through the agent's cache (or a transient mirror when caching is off), never
through ad-hoc fetches inside the compute path.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from .algorithms import Algorithm, Message, MessageSet, merge_sets
from .channel import MsgKind, OpKind, ProtocolError, SharedRegion, WorkItem
from .daemon import AcceleratorProfile, Daemon, daemon_init
from .graph import Partition, PartitionedGraph, Role, apply_updates, build_blocks
from .pipeline import PipelineCostModel, plan_blocks
from .sync import SyncCache


class AgentPhase(Enum):
    DISCONNECTED = "disconnected"
    CONNECTED = "connected"
    IN_ITERATION = "in_iteration"


@dataclass
class AgentState:
    node_id: int
    daemons: list[str]
    phase: AgentPhase


@dataclass
class IterationCounters:
    """Per-iteration bookkeeping; times are simulated, not wall-clock."""

    t_download: float = 0.0
    t_compute: float = 0.0
    t_upload: float = 0.0
    pipeline_time: float = 0.0
    units: int = 0
    blocks: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    uploads: int = 0
    uploads_avoided: int = 0


class _StageTask:
    """One short-lived transfer stage of a pipeline cycle.

    Runs as a concurrent task on the agent's stage pool when there is payload
    to move; a no-op stage completes synchronously.
    """

    __slots__ = ("sim_time", "_future")

    def __init__(self, fn: Callable[[], float] | None, pool):
        self._future = None
        if fn is None:
            self.sim_time = 0.0
        else:
            self.sim_time = 0.0
            self._future = pool.submit(fn)

    def join(self):
        if self._future is not None:
            self.sim_time = self._future.result()


_DONE = _StageTask(None, None)


@dataclass
class _PassStats:
    t_download: float = 0.0
    t_compute: float = 0.0
    t_upload: float = 0.0
    pipeline_time: float = 0.0

    def cycle(self, dl: float, cp: float, up: float) -> None:
        self.t_download += dl
        self.t_compute += cp
        self.t_upload += up
        self.pipeline_time += max(dl, cp, up)


class Agent:
    """Bridge for one simulated distributed node."""

    def __init__(
        self,
        node_id: int,
        partition: Partition,
        graph: PartitionedGraph,
        algorithm: Algorithm,
        store_fetch: Callable[[int], object],
        *,
        model: str = "bsp",
        block_size: int | str = 256,
        io_cost: float = 0.01,
        enable_cache: bool = False,
        cache_capacity: int = 1024,
        cache_decay: float = 0.5,
        cache_boost: float = 1.0,
        recv_timeout: float | None = 60.0,
    ):
        self.node_id = node_id
        self.partition = partition
        self.graph = graph
        self.algorithm = algorithm
        self.store_fetch = store_fetch
        self.model = model
        self.block_size = block_size
        self.io_cost = io_cost
        self.recv_timeout = recv_timeout

        self.cache = (
            SyncCache(cache_capacity, decay=cache_decay, boost=cache_boost)
            if enable_cache
            else None
        )
        self.plain_dirty: dict[int, object] = {}
        self.mirror: dict[int, object] = {}

        self.phase = AgentPhase.DISCONNECTED
        self.daemons: list[Daemon] = []
        self.regions: dict[str, SharedRegion] = {}
        self._stage_pool: ThreadPoolExecutor | None = None

        self.frontier: set[int] = set()
        self._next_frontier: set[int] = set()
        self._messages: list[Message] = []
        self._stash: list[Message] = []  # GAS: locally targeted messages for next merge
        self._merged: MessageSet = {}
        self._round_updates: list[tuple[int, object]] = []
        self._max_stat = 0.0
        self._applied_this_iteration = False
        self._last_queries: frozenset[int] = frozenset()
        self._pass_seq = 0
        self.counters = IterationCounters()
        self.block_plan: tuple[int, int] | None = None
        self._hits0 = 0
        self._misses0 = 0
        # (uploaded ids, gqq) per served round, for upload-minimality audits
        self.upload_audit: list[tuple[frozenset[int], frozenset[int]]] = []

        # Static per-vertex remote-destination index; drives pulls, queries,
        # and the partition-closedness check in O(frontier).
        self._remote_dsts: dict[int, tuple[int, ...]] = {}
        for vid in partition.vertices:
            remote = tuple(
                sorted(
                    {e.dst for e in partition.out_edges(vid) if not partition.owns(e.dst)}
                )
            )
            if remote:
                self._remote_dsts[vid] = remote

    # ------------------------------------------------------------------
    # operation-interface kit
    # ------------------------------------------------------------------

    @property
    def state(self) -> AgentState:
        return AgentState(self.node_id, list(self.regions), self.phase)

    def connect(self, daemon_profiles: list[AcceleratorProfile]) -> AgentState:
        """Allocate one shared region per daemon and initialize each once."""
        if self.phase is not AgentPhase.DISCONNECTED:
            raise ProtocolError(f"node {self.node_id}: connect() while {self.phase.value}")
        if not daemon_profiles:
            raise ValueError("connect() needs at least one daemon profile")
        capacity = self.block_size if isinstance(self.block_size, int) else 1
        for i, profile in enumerate(daemon_profiles):
            key = f"node{self.node_id}-daemon{i}"
            self.regions[key] = SharedRegion(key, capacity=capacity)
            self.daemons.append(daemon_init(profile, self.algorithm, key, self.regions))
        self._stage_pool = ThreadPoolExecutor(
            max_workers=2 * len(daemon_profiles),
            thread_name_prefix=f"node{self.node_id}-stage",
        )
        self.phase = AgentPhase.CONNECTED
        return self.state

    def disconnect(self) -> None:
        if self.phase is AgentPhase.DISCONNECTED:
            raise ProtocolError(f"node {self.node_id}: disconnect() while disconnected")
        self.phase = AgentPhase.DISCONNECTED

    def shutdown(self) -> None:
        """Terminate all attached daemons and detach."""
        for daemon in self.daemons:
            daemon.shutdown()
        if self._stage_pool is not None:
            self._stage_pool.shutdown(wait=False)
            self._stage_pool = None
        self.phase = AgentPhase.DISCONNECTED

    def transfer(self, item: WorkItem, region_key: str) -> None:
        """Place a work item into a region's New-role buffer, in situ."""
        if self.phase is AgentPhase.DISCONNECTED:
            raise ProtocolError(f"node {self.node_id}: transfer() while disconnected")
        region = self.regions.get(region_key)
        if region is None:
            raise KeyError(f"unknown region key {region_key!r}")
        if item.units > region.capacity:
            raise ValueError(
                f"block of {item.units} units exceeds slot capacity {region.capacity}"
            )
        slot = region.slot(Role.NEW)
        if slot.item is not None:
            raise ProtocolError(f"region {region_key}: New buffer already occupied")
        slot.item = item

    def update(self, direction: str) -> None:
        if self.phase is AgentPhase.DISCONNECTED:
            raise ProtocolError(f"node {self.node_id}: update() while disconnected")
        if direction == "pull_from_upper":
            self._ensure_remote_attrs(self.frontier)
        elif direction == "push_to_upper":
            self._push_updates()
        else:
            raise ValueError(f"unknown update direction {direction!r}")

    def request(self, op_kind: OpKind) -> None:
        """Drive one pipelined pass of ``op_kind`` across all daemons."""
        if self.phase is AgentPhase.DISCONNECTED:
            raise ProtocolError(f"node {self.node_id}: request() while disconnected")
        items = self._build_work_items(op_kind)
        self._pass_seq += 1
        seq = self._pass_seq

        k = len(self.daemons)
        shares = [items[i::k] for i in range(k)]
        stats = [_PassStats() for _ in range(k)]
        collected: list[list[WorkItem]] = [[] for _ in range(k)]

        if k == 1:
            collected[0] = self._drive(self.daemons[0].region, shares[0], seq, stats[0])
        else:
            threads = []
            failures: list[BaseException] = []

            def driver(i: int):
                try:
                    collected[i] = self._drive(self.daemons[i].region, shares[i], seq, stats[i])
                except BaseException as exc:
                    failures.append(exc)

            for i in range(k):
                t = threading.Thread(target=driver, args=(i,), daemon=True)
                threads.append(t)
                t.start()
            for t in threads:
                t.join()
            if failures:
                raise failures[0]

        for st in stats:
            self.counters.t_download += st.t_download
            self.counters.t_compute += st.t_compute
            self.counters.t_upload += st.t_upload
        self.counters.pipeline_time += max(st.pipeline_time for st in stats)
        done = sorted((item for per in collected for item in per), key=lambda it: it.index)
        self.counters.units += sum(it.units for it in done)
        self.counters.blocks += len(done)
        self._absorb_results(op_kind, done)

    # ------------------------------------------------------------------
    # pipeline driver (protocol agent side)
    # ------------------------------------------------------------------

    def _drive(self, region: SharedRegion, items: list[WorkItem], seq: int,
               stats: _PassStats) -> list[WorkItem]:
        cursor = {"next": 0}
        collected: list[WorkItem] = []

        def download() -> float:
            i = cursor["next"]
            if i >= len(items):
                return 0.0
            cursor["next"] = i + 1
            self.transfer(items[i], region.key)
            return self.io_cost * items[i].units

        def upload() -> float:
            slot = region.slot(Role.UPLOAD)
            item = slot.item
            if item is None:
                return 0.0
            collected.append(item)
            slot.item = None
            return self.io_cost * item.result_units

        stats.cycle(download(), 0.0, 0.0)
        region.send_to_daemon(MsgKind.EXCHANGE_FINISHED, seq)
        up_task = dl_task = _DONE
        while True:
            msg = region.recv_agent(timeout=self.recv_timeout)
            if msg.kind is MsgKind.ROTATE_FINISHED:
                has_result = region.slot(Role.UPLOAD).item is not None
                has_more = cursor["next"] < len(items)
                up_task = _StageTask(upload if has_result else None, self._stage_pool)
                dl_task = _StageTask(download if has_more else None, self._stage_pool)
            elif msg.kind is MsgKind.COMPUTE_FINISHED:
                up_task.join()
                dl_task.join()
                stats.cycle(dl_task.sim_time, region.last_compute_time, up_task.sim_time)
                region.send_to_daemon(MsgKind.EXCHANGE_FINISHED, seq)
            elif msg.kind is MsgKind.COMPUTE_ALL_FINISHED:
                up_task.join()
                dl_task.join()
                stats.cycle(dl_task.sim_time, 0.0, up_task.sim_time)
                break
            else:
                raise ProtocolError(
                    f"node {self.node_id}: unexpected {msg.kind.value} from daemon"
                )
        return collected

    # ------------------------------------------------------------------
    # work-item construction and result assembly
    # ------------------------------------------------------------------

    def _plan_block_size(self, units: int) -> int:
        if isinstance(self.block_size, int):
            return self.block_size
        if units == 0:
            return 1
        profile = self.daemons[0].profile
        model = PipelineCostModel(
            download_cost=max(self.io_cost, 1e-9),
            compute_cost=max(profile.per_unit_cost, 1e-9),
            upload_cost=max(self.io_cost, 1e-9),
            call_cost=profile.call_overhead,
            units=units,
        )
        s, b, _ = plan_blocks(model)
        if self.block_plan is None:
            self.block_plan = (s, b)
        return b

    def _build_work_items(self, op_kind: OpKind) -> list[WorkItem]:
        if op_kind is OpKind.GEN:
            owned_frontier = {v for v in self.frontier if self.partition.owns(v)}
            self._ensure_remote_attrs(owned_frontier)
            units = sum(len(self.partition.ve_map.get(v, ())) for v in owned_frontier)
            b = self._plan_block_size(units)
            self._set_capacity(b)
            blocks = build_blocks(self.partition, owned_frontier, b, self._attr_of)
            return [
                WorkItem(OpKind.GEN, blk.index, blk, len(blk)) for blk in blocks
            ]
        if op_kind is OpKind.MERGE:
            messages = self._messages
            b = self._plan_block_size(len(messages))
            self._set_capacity(b)
            return [
                WorkItem(OpKind.MERGE, i, tuple(messages[start : start + b]),
                         min(b, len(messages) - start))
                for i, start in enumerate(range(0, len(messages), b))
            ]
        if op_kind is OpKind.APPLY:
            if self.algorithm.applies_to_all:
                targets = sorted(self.partition.vertices)
            else:
                targets = sorted(self._merged)
            zero = self.algorithm.zero_payload()
            tasks = [
                (vid, self._attr_of(vid), self._merged.get(vid, zero)) for vid in targets
            ]
            b = self._plan_block_size(len(tasks))
            self._set_capacity(b)
            owned = self.partition.vertices
            return [
                WorkItem(OpKind.APPLY, i, (tuple(tasks[start : start + b]), owned),
                         min(b, len(tasks) - start))
                for i, start in enumerate(range(0, len(tasks), b))
            ]
        raise ValueError(f"unknown operation kind {op_kind!r}")

    def _set_capacity(self, b: int) -> None:
        for region in self.regions.values():
            region.capacity = b

    def _absorb_results(self, op_kind: OpKind, done: list[WorkItem]) -> None:
        if op_kind is OpKind.GEN:
            self._messages = [msg for item in done for msg in item.result]
        elif op_kind is OpKind.MERGE:
            self._merged = merge_sets(self.algorithm, (item.result for item in done))
        elif op_kind is OpKind.APPLY:
            results = [r for item in done for r in item.result]
            self._finish_apply(results)

    def _finish_apply(self, results: list[tuple[int, object, object, bool]]) -> None:
        algo = self.algorithm
        changed = [
            (vid, new) for vid, old, new, _ in results if not algo.attrs_equal(new, old)
        ]
        apply_updates(self.partition, changed, algo.attrs_equal)
        self._round_updates = changed
        self._max_stat = max(
            (algo.convergence_stat(old, new)
             for vid, old, new, _ in results if not algo.attrs_equal(new, old)),
            default=0.0,
        )
        self._next_frontier = {vid for vid, _, _, active in results if active}
        self._applied_this_iteration = True

    # ------------------------------------------------------------------
    # attribute resolution and remote mirroring
    # ------------------------------------------------------------------

    def _attr_of(self, vid: int):
        vertex = self.partition.vertices.get(vid)
        if vertex is not None:
            return vertex.attr
        return self.mirror[vid]

    def _fetch_remote(self, vid: int):
        self.counters.t_download += self.io_cost
        return self.store_fetch(vid)

    def _ensure_remote_attrs(self, frontier: set[int]) -> None:
        needed: set[int] = set()
        for vid in frontier:
            needed.update(self._remote_dsts.get(vid, ()))
        for vid in sorted(needed):
            if vid in self.mirror:
                continue
            if self.cache is not None:
                self.mirror[vid] = self.cache.get(vid, self._fetch_remote)
            else:
                self.mirror[vid] = self._fetch_remote(vid)

    def _push_updates(self) -> None:
        if self.cache is not None:
            for vid, attr in self._round_updates:
                self.cache.update(vid, attr)
        else:
            for vid, attr in self._round_updates:
                self.plain_dirty[vid] = attr

    # ------------------------------------------------------------------
    # iteration phases driven by the upper system
    # ------------------------------------------------------------------

    def begin_iteration(self) -> None:
        self.phase = AgentPhase.IN_ITERATION
        self.counters = IterationCounters()
        if self.cache is not None:
            self._hits0 = self.cache.hits
            self._misses0 = self.cache.misses
        self.mirror = {}
        self._applied_this_iteration = False
        self._max_stat = 0.0
        self._round_updates = []
        self._next_frontier = set(self.frontier)

    def work_phase(self, iteration: int) -> dict[int, list]:
        """Model-specific compute passes; returns the routing outbox."""
        if self.model == "bsp":
            self.update("pull_from_upper")
            self.request(OpKind.GEN)
            self.request(OpKind.MERGE)
            return self._export_remote_merged()
        # GAS order: Merge -> Apply -> Gen, with a seed Gen pass on the first
        # iteration since no messages exist yet.
        if iteration > 1:
            self._messages = self._stash
            self._stash = []
            self.request(OpKind.MERGE)
            self.request(OpKind.APPLY)
            self.update("push_to_upper")
            self.frontier = set(self._next_frontier)
        self.request(OpKind.GEN)
        return self._export_remote_messages()

    def post_route(self, inbox: list) -> None:
        if self.model == "bsp":
            for target, payload in inbox:
                if target in self._merged:
                    self._merged[target] = self.algorithm.merge_payloads(
                        self._merged[target], payload
                    )
                else:
                    self._merged[target] = payload
            self.request(OpKind.APPLY)
            self.update("push_to_upper")
        else:
            self._stash.extend(self._messages)
            self._stash.extend(inbox)
            self._messages = []

    def _export_remote_merged(self) -> dict[int, list]:
        outbox: dict[int, list] = {}
        for target in sorted(self._merged):
            owner = self.graph.vertex_owner[target]
            if owner != self.node_id:
                outbox.setdefault(owner, []).append((target, self._merged.pop(target)))
        self._count_outbox(outbox)
        return outbox

    def _export_remote_messages(self) -> dict[int, list]:
        outbox: dict[int, list] = {}
        local: list[Message] = []
        for msg in self._messages:
            owner = self.graph.vertex_owner[msg.target]
            if owner == self.node_id:
                local.append(msg)
            else:
                outbox.setdefault(owner, []).append(msg)
        self._messages = local
        self._count_outbox(outbox)
        return outbox

    def _count_outbox(self, outbox: dict[int, list]) -> None:
        sent = sum(len(v) for v in outbox.values())
        self.counters.t_upload += self.io_cost * sent

    def ingest_count(self, inbox: list) -> None:
        self.counters.t_download += self.io_cost * len(inbox)

    def round_closed(self) -> bool:
        """True when the next frontier has no cross-partition out-edges."""
        return all(vid not in self._remote_dsts for vid in self._next_frontier)

    def vote(self) -> bool:
        if not self._applied_this_iteration:
            return False
        return self.algorithm.vote(self._max_stat, self._next_frontier)

    def publish_queries(self) -> frozenset[int]:
        """Ids this node needs next iteration: the next frontier's remote dsts."""
        needed: set[int] = set()
        for vid in self._next_frontier:
            needed.update(self._remote_dsts.get(vid, ()))
        self._last_queries = frozenset(needed)
        return self._last_queries

    def serve_uploads(self, gqq: frozenset[int]) -> tuple[dict[int, object], dict[int, object]]:
        """Upload dirty-and-queried values; flush eviction leftovers.

        Returns ``(uploads, flushes)``: uploads are lazy-protocol payloads and
        always a subset of the query queue; flushes are values that left the
        cache dirty and must reach the store regardless.
        """
        table = self.partition.vertices
        if self.cache is None:
            uploads = {vid: attr for vid, attr in sorted(self.plain_dirty.items())}
            self.plain_dirty = {}
            for vid in uploads:
                table[vid].updated = False
            self.counters.uploads += len(uploads)
            self.counters.t_upload += self.io_cost * len(uploads)
            return uploads, {}

        dirty = self.cache.dirty_ids()
        pending = self.cache.take_pending()
        serve_ids = (dirty | self.cache.announced) & gqq
        uploads = {vid: table[vid].attr for vid in sorted(serve_ids) if vid in table}
        self.upload_audit.append((frozenset(uploads), gqq))
        for vid in uploads:
            self.cache.mark_uploaded(vid)
            table[vid].updated = False
        flushes = {vid: attr for vid, attr in sorted(pending.items()) if vid not in uploads}
        for vid in flushes:
            if vid in table:
                table[vid].updated = False
        self.counters.uploads += len(uploads) + len(flushes)
        self.counters.uploads_avoided += len(dirty - gqq)
        self.counters.t_upload += self.io_cost * (len(uploads) + len(flushes))
        return uploads, flushes

    def deliver(self, gqq: frozenset[int], gdq: dict[int, object]) -> None:
        """Install round-delivered values for everything this node queried."""
        installed = 0
        for vid in sorted(self._last_queries):
            if vid in gdq:
                if self.cache is not None:
                    self.cache.install(vid, gdq[vid])
                installed += 1
        self.counters.t_download += self.io_cost * installed

    def flush_all(self) -> dict[int, object]:
        """Upload every dirty value; called once before the run returns."""
        table = self.partition.vertices
        if self.cache is None:
            out = dict(sorted(self.plain_dirty.items()))
            self.plain_dirty = {}
        else:
            out = {vid: table[vid].attr for vid in sorted(self.cache.dirty_ids()) if vid in table}
            for vid in out:
                self.cache.mark_uploaded(vid)
            for vid, attr in sorted(self.cache.take_pending().items()):
                out.setdefault(vid, attr)
        for vid in out:
            if vid in table:
                table[vid].updated = False
        self.counters.uploads += len(out)
        self.counters.t_upload += self.io_cost * len(out)
        return out

    def end_iteration(self) -> None:
        if self.cache is not None:
            self.cache.decay_all()
            self.counters.cache_hits = self.cache.hits - self._hits0
            self.counters.cache_misses = self.cache.misses - self._misses0
        if self.model == "bsp":
            self.frontier = set(self._next_frontier)
        # 1-bit skip vote, counted so skipping's benefit is measured honestly
        self.counters.t_upload += self.io_cost
        self.phase = AgentPhase.CONNECTED
