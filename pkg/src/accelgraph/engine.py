"""Miniature distributed graph engine driving agents in BSP or GAS order.

Distributed nodes are simulated as concurrent in-process agent threads; the
engine owns the barrier, the routing mailboxes, the global query/data queues,
and the authoritative attribute store. Every iteration walks a fixed barrier
schedule, and the engine-side step for each phase runs inside the barrier's
action callback, i.e. in exactly one thread while every agent is parked, so
all shared-state hand-offs happen at deterministic points:

    work phase      model-specific request passes, routing outbox deposited
    route           engine moves mailbox payloads between nodes
    post-route      BSP applies; GAS stashes routed messages for its next merge
    skip decision   1-bit all-reduce over per-agent partition-closedness
    sync round      (unless skipped) query union -> lazy uploads -> delivery
    verdict         convergence vote, iteration record, stop decision

The authoritative store is written only by engine steps between barriers; a
skipped round leaves it stale by design, with agents' local state
authoritative until the next real round. A final flush uploads every dirty
value before the run returns.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum

from .agent import Agent
from .algorithms import Algorithm
from .channel import trace_conforms
from .daemon import AcceleratorProfile
from .graph import PartitionedGraph


class EngineError(RuntimeError):
    pass


class ComputationModel(Enum):
    BSP = "bsp"
    GAS = "gas"


@dataclass
class RunConfig:
    partitions: int = 1
    daemons_per_node: int = 1
    daemon_profile: AcceleratorProfile = field(default_factory=lambda: AcceleratorProfile(lanes=4))
    node_profiles: list[AcceleratorProfile] | None = None  # per-node override
    block_size: int | str = 256
    enable_cache: bool = False
    cache_capacity: int = 1024
    cache_decay: float = 0.5
    cache_boost: float = 1.0
    enable_skip: bool = False
    io_cost: float = 0.01
    seed: int = 0
    max_iterations: int | None = None
    barrier_timeout: float = 60.0


@dataclass
class IterationRecord:
    iteration: int
    model: str
    t_download: float
    t_compute: float
    t_upload: float
    skipped: bool
    cache_hits: int
    cache_misses: int
    uploads: int
    uploads_avoided: int
    converged: bool

    def to_line(self) -> str:
        return (
            f"iter={self.iteration} model={self.model} "
            f"t_download={self.t_download:.6f} t_compute={self.t_compute:.6f} "
            f"t_upload={self.t_upload:.6f} skipped={str(self.skipped).lower()} "
            f"cache_hits={self.cache_hits} cache_misses={self.cache_misses} "
            f"uploads={self.uploads} uploads_avoided={self.uploads_avoided} "
            f"converged={str(self.converged).lower()}"
        )


@dataclass
class NodeStats:
    iteration: int
    node_id: int
    units: int
    blocks: int
    compute_time: float
    pipeline_time: float
    download_time: float
    upload_time: float


@dataclass
class RunMetrics:
    model: str
    records: list[IterationRecord] = field(default_factory=list)
    node_stats: list[NodeStats] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    skipped_rounds: int = 0
    block_plans: dict[int, tuple[int, int]] = field(default_factory=dict)
    init_counts: dict[str, int] = field(default_factory=dict)
    copy_counts: dict[str, int] = field(default_factory=dict)
    traces: dict[str, list[str]] = field(default_factory=dict)

    def lines(self) -> list[str]:
        return [r.to_line() for r in self.records]

    def write(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            for line in self.lines():
                fh.write(line + "\n")

    def protocol_conformant(self) -> bool:
        return all(trace_conforms(t) for t in self.traces.values())

    def node_totals(self, field_name: str) -> dict[int, float]:
        totals: dict[int, float] = {}
        for st in self.node_stats:
            totals[st.node_id] = totals.get(st.node_id, 0.0) + getattr(st, field_name)
        return totals


def convergence_vote(votes: list) -> bool:
    """Logical AND over per-node votes; a missing vote is fatal."""
    if any(v is None for v in votes):
        missing = [i for i, v in enumerate(votes) if v is None]
        raise EngineError(f"missing convergence vote from node(s) {missing}")
    return all(votes)


def global_sync(agents, store: dict[int, object]):
    """One synchronization round outside the threaded engine (test surface)."""
    from .sync import lazy_upload_round

    return lazy_upload_round(agents, store)


class _Shared:
    """State exchanged between agent threads at barrier points."""

    def __init__(self, m: int, timeout: float, action):
        self.barrier = threading.Barrier(m, action=action, timeout=timeout)
        self.progress = [0] * m
        self.errors: list[tuple[int, BaseException]] = []
        self.step = "route"
        self.iteration = 0
        self.outboxes: list[dict[int, list] | None] = [None] * m
        self.inboxes: list[list] = [[] for _ in range(m)]
        self.skip_flags: list[bool | None] = [None] * m
        self.votes: list[bool | None] = [None] * m
        self.queries: list[frozenset | None] = [None] * m
        self.uploads: list[tuple[dict, dict] | None] = [None] * m
        self.flushes: list[dict | None] = [None] * m
        self.gqq: frozenset[int] = frozenset()
        self.gdq: dict[int, object] = {}
        self.skip = False
        self.stop = False

    def wait(self, party: int) -> None:
        self.progress[party] += 1
        self.barrier.wait()


class Engine:
    def __init__(self, graph: PartitionedGraph, algorithm: Algorithm,
                 model: ComputationModel, config: RunConfig):
        self.graph = graph
        self.algorithm = algorithm
        self.model = model
        self.config = config
        self.store: dict[int, object] = {}
        self.agents: list[Agent] = []
        self.metrics = RunMetrics(model=model.value)
        self._sh: _Shared | None = None
        self._apply_rounds = 0
        self._cap = 0

    # -- setup ----------------------------------------------------------

    def _node_profiles(self, node_id: int) -> list[AcceleratorProfile]:
        cfg = self.config
        base = cfg.daemon_profile
        if cfg.node_profiles is not None:
            base = cfg.node_profiles[node_id]
        return [base] * cfg.daemons_per_node

    def _setup(self) -> None:
        algo = self.algorithm
        for part in self.graph.partitions:
            for vid, vertex in part.vertices.items():
                vertex.attr = algo.initial_attr(vid)
                vertex.active = algo.initially_active(vid)
                vertex.updated = False
                self.store[vid] = vertex.attr
        cfg = self.config
        for part in self.graph.partitions:
            agent = Agent(
                part.node_id,
                part,
                self.graph,
                algo,
                self.store.__getitem__,
                model=self.model.value,
                block_size=cfg.block_size,
                io_cost=cfg.io_cost,
                enable_cache=cfg.enable_cache,
                cache_capacity=cfg.cache_capacity,
                cache_decay=cfg.cache_decay,
                cache_boost=cfg.cache_boost,
                recv_timeout=cfg.barrier_timeout,
            )
            agent.connect(self._node_profiles(part.node_id))
            agent.frontier = {vid for vid, v in part.vertices.items() if v.active}
            self.agents.append(agent)

    # -- engine-side barrier steps ---------------------------------------

    def _coordinator_step(self) -> None:
        sh = self._sh
        try:
            step = sh.step
            if step == "route":
                sh.iteration += 1
                m = len(self.agents)
                for dst in range(m):
                    inbox: list = []
                    for src in range(m):
                        outbox = sh.outboxes[src]
                        if outbox:
                            inbox.extend(outbox.get(dst, ()))
                    sh.inboxes[dst] = inbox
                sh.outboxes = [None] * m
                sh.step = "skip"
            elif step == "skip":
                closed = [bool(f) for f in sh.skip_flags]
                sh.skip = self.config.enable_skip and all(closed)
                sh.skip_flags = [None] * len(self.agents)
                sh.step = "gqq"
            elif step == "gqq":
                if not sh.skip:
                    queue: set[int] = set()
                    for q in sh.queries:
                        queue.update(q or ())
                    sh.gqq = frozenset(queue)
                    sh.queries = [None] * len(self.agents)
                sh.step = "gdq"
            elif step == "gdq":
                if not sh.skip:
                    sh.gdq = {}
                    for nid in range(len(self.agents)):
                        uploads, flushes = sh.uploads[nid] or ({}, {})
                        for vid, attr in sorted(uploads.items()):
                            sh.gdq[vid] = attr
                            self.store[vid] = attr
                        for vid, attr in sorted(flushes.items()):
                            self.store[vid] = attr
                    sh.uploads = [None] * len(self.agents)
                sh.step = "verdict"
            elif step == "verdict":
                votes = list(sh.votes)
                sh.votes = [None] * len(self.agents)
                converged = convergence_vote(votes)
                seed_only = self.model is ComputationModel.GAS and sh.iteration == 1
                if seed_only:
                    converged = False
                else:
                    self._apply_rounds += 1
                self._record_iteration(sh.iteration, sh.skip, converged)
                # the terminal round is not counted: skipping means an
                # intermediate round proceeded on local data
                if sh.skip and not converged:
                    self.metrics.skipped_rounds += 1
                sh.stop = converged or self._apply_rounds >= self._cap
                if sh.stop:
                    self.metrics.converged = converged
                    self.metrics.iterations = sh.iteration
                sh.step = "flush" if sh.stop else "route"
            elif step == "flush":
                for nid in range(len(self.agents)):
                    for vid, attr in sorted((sh.flushes[nid] or {}).items()):
                        self.store[vid] = attr
            else:  # pragma: no cover - schedule bug
                raise EngineError(f"unknown engine step {step!r}")
        except BaseException as exc:
            sh.errors.append((-1, exc))
            raise

    # -- agent thread body -------------------------------------------------

    def _agent_loop(self, agent: Agent, sh: _Shared) -> None:
        nid = agent.node_id
        try:
            iteration = 0
            while True:
                iteration += 1
                agent.begin_iteration()
                sh.outboxes[nid] = agent.work_phase(iteration)
                sh.wait(nid)  # route
                inbox = sh.inboxes[nid]
                agent.ingest_count(inbox)
                agent.post_route(inbox)
                sh.skip_flags[nid] = agent.round_closed()
                sh.votes[nid] = agent.vote()
                sh.wait(nid)  # skip decision
                if not sh.skip:
                    sh.queries[nid] = agent.publish_queries()
                sh.wait(nid)  # gqq union
                if not sh.skip:
                    sh.uploads[nid] = agent.serve_uploads(sh.gqq)
                sh.wait(nid)  # gdq build + store refresh
                if not sh.skip:
                    agent.deliver(sh.gqq, sh.gdq)
                agent.end_iteration()
                sh.wait(nid)  # verdict
                if sh.stop:
                    break
            sh.flushes[nid] = agent.flush_all()
            sh.wait(nid)  # flush absorb
        except threading.BrokenBarrierError:
            pass
        except BaseException as exc:
            sh.errors.append((nid, exc))
            sh.barrier.abort()

    # -- run ----------------------------------------------------------------

    def run(self) -> tuple[dict[int, object], RunMetrics]:
        self._setup()
        m = len(self.agents)
        cfg = self.config
        self._cap = cfg.max_iterations
        if self._cap is None:
            self._cap = self.algorithm.default_iteration_cap(self.graph.num_vertices)

        sh = _Shared(m, cfg.barrier_timeout, self._coordinator_step)
        self._sh = sh
        threads = [
            threading.Thread(target=self._agent_loop, args=(agent, sh),
                             name=f"agent-{agent.node_id}", daemon=True)
            for agent in self.agents
        ]
        try:
            for t in threads:
                t.start()
            for t in threads:
                t.join(timeout=cfg.barrier_timeout * 4)
                if t.is_alive():
                    raise EngineError(f"agent thread {t.name} failed to finish")
        finally:
            for agent in self.agents:
                agent.shutdown()
            self._collect_instrumentation()

        if sh.errors:
            nid, exc = sh.errors[0]
            if isinstance(exc, threading.BrokenBarrierError):
                self._raise_straggler(sh, m)
            origin = "engine step" if nid < 0 else f"node {nid}"
            raise EngineError(f"{origin} failed: {exc}") from exc
        if sh.barrier.broken and not sh.stop:
            self._raise_straggler(sh, m)
        return dict(sorted(self.store.items())), self.metrics

    def _raise_straggler(self, sh: _Shared, m: int) -> None:
        behind = min(sh.progress)
        stragglers = [i for i, p in enumerate(sh.progress) if p == behind]
        raise EngineError(
            f"barrier broken (timeout {self.config.barrier_timeout}s); "
            f"straggler node(s): {stragglers}"
        )

    def _record_iteration(self, iteration: int, skipped: bool, converged: bool) -> None:
        counters = [agent.counters for agent in self.agents]
        record = IterationRecord(
            iteration=iteration,
            model=self.model.value,
            t_download=max(c.t_download for c in counters),
            t_compute=max(c.t_compute for c in counters),
            t_upload=max(c.t_upload for c in counters),
            skipped=skipped,
            cache_hits=sum(c.cache_hits for c in counters),
            cache_misses=sum(c.cache_misses for c in counters),
            uploads=sum(c.uploads for c in counters),
            uploads_avoided=sum(c.uploads_avoided for c in counters),
            converged=converged,
        )
        self.metrics.records.append(record)
        for agent in self.agents:
            c = agent.counters
            self.metrics.node_stats.append(
                NodeStats(
                    iteration=iteration,
                    node_id=agent.node_id,
                    units=c.units,
                    blocks=c.blocks,
                    compute_time=c.t_compute,
                    pipeline_time=c.pipeline_time,
                    download_time=c.t_download,
                    upload_time=c.t_upload,
                )
            )

    def _collect_instrumentation(self) -> None:
        for agent in self.agents:
            if agent.block_plan is not None:
                self.metrics.block_plans[agent.node_id] = agent.block_plan
            for daemon in agent.daemons:
                key = daemon.state.channel_key
                self.metrics.init_counts[key] = daemon.init_count
                self.metrics.copy_counts[key] = daemon.region.copy_count
                self.metrics.traces[key] = list(daemon.region.trace)


def run(graph: PartitionedGraph, algorithm: Algorithm, model: ComputationModel | str,
        config: RunConfig) -> tuple[dict[int, object], RunMetrics]:
    """Run one algorithm over a partitioned graph; returns (attrs, metrics)."""
    if isinstance(model, str):
        model = ComputationModel(model)
    return Engine(graph, algorithm, model, config).run()


def dump_attributes(attrs: dict[int, object], algorithm: Algorithm) -> str:
    """Diff-friendly dump: ascending vertex id, one 'id value(s)' per line."""
    lines = [f"{vid} {algorithm.format_attr(attr)}" for vid, attr in sorted(attrs.items())]
    return "\n".join(lines) + ("\n" if lines else "")
