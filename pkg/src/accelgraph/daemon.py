"""The daemon: a persistently initialized simulated accelerator.

A daemon binds to exactly one shared region, spawns its worker-lane pool once
at initialization, and then serves pipelined compute requests until shutdown.
Initialization never recurs for the daemon's lifetime; ``init_count`` makes
that a countable invariant. The daemon's loop:

    receive (blocking)
    ExchangeFinished -> rotate buffer roles, reply RotateFinished, then
                        check the Compute-role buffer at message-receipt time:
                        content -> compute in place, reply ComputeFinished
                        empty   -> reply ComputeAllFinished, end the pass
    Shutdown         -> terminate, join lanes

Any other message for the current phase is a fatal protocol error.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum

from . import pipeline
from .algorithms import Algorithm, Message, msg_merge
from .channel import MsgKind, OpKind, ProtocolError, SharedRegion, WorkItem
from .graph import Role


@dataclass(frozen=True)
class AcceleratorProfile:
    """Simulated device shape.

    ``lanes`` is the parallel width (how a block's work is chunked);
    ``per_unit_cost`` and ``call_overhead`` drive the simulated clock only,
    never results: cost = call_overhead + per_unit_cost * units per dispatch.
    """

    lanes: int
    per_unit_cost: float = 1.0
    call_overhead: float = 0.0

    def __post_init__(self):
        if self.lanes < 1:
            raise ValueError(f"lanes must be >= 1, got {self.lanes}")
        if self.per_unit_cost < 0 or self.call_overhead < 0:
            raise ValueError("simulated costs must be non-negative")

    @classmethod
    def cpu_like(cls) -> "AcceleratorProfile":
        return cls(lanes=20, per_unit_cost=1.0, call_overhead=50.0)

    @classmethod
    def gpu_like(cls) -> "AcceleratorProfile":
        return cls(lanes=1024, per_unit_cost=0.05, call_overhead=200.0)


class DaemonPhase(Enum):
    UNINITIALIZED = "uninitialized"
    READY = "ready"
    COMPUTING = "computing"
    TERMINATED = "terminated"


@dataclass
class DaemonState:
    phase: DaemonPhase
    channel_key: str


def lane_chunks(items, lanes: int) -> list:
    """Split a sequence into at most ``lanes`` contiguous near-equal chunks."""
    n = len(items)
    if n == 0:
        return []
    k = min(lanes, n)
    base, rem = divmod(n, k)
    chunks, start = [], 0
    for i in range(k):
        size = base + (1 if i < rem else 0)
        chunks.append(items[start : start + size])
        start += size
    return chunks


def execute_request(algorithm: Algorithm, profile: AcceleratorProfile, item: WorkItem) -> float:
    """Run one template operation over a work item, lane-parallel, in situ.

    Results are written back into the same item; nothing leaves the region.
    Returns the simulated cost of the dispatch.
    """
    if item.kind is OpKind.GEN:
        triplets = item.payload.triplets
        out: list[Message] = []
        for chunk in lane_chunks(triplets, profile.lanes):
            for triplet in chunk:
                msg = algorithm.gen(triplet)
                if msg is not None:
                    out.append(msg)
        item.result = out
        item.result_units = len(out)
        units = len(triplets)
    elif item.kind is OpKind.MERGE:
        messages = item.payload
        partial: dict[int, object] = {}
        for chunk in lane_chunks(messages, profile.lanes):
            lane_set = msg_merge(algorithm, chunk)
            for target, payload in lane_set.items():
                if target in partial:
                    partial[target] = algorithm.merge_payloads(partial[target], payload)
                else:
                    partial[target] = payload
        item.result = partial
        item.result_units = len(partial)
        units = len(messages)
    elif item.kind is OpKind.APPLY:
        tasks, owned = item.payload
        out = []
        for chunk in lane_chunks(tasks, profile.lanes):
            for vid, old_attr, payload in chunk:
                if vid not in owned:
                    raise ValueError(f"apply targets vertex {vid} not owned by this node")
                new, active = algorithm.apply_one(vid, old_attr, payload)
                out.append((vid, old_attr, new, active))
        item.result = out
        item.result_units = len(out)
        units = len(tasks)
    else:
        raise ValueError(f"unknown operation kind {item.kind!r}")
    return profile.call_overhead + profile.per_unit_cost * units


class Daemon:
    """One accelerator worker bound to one shared region."""

    def __init__(self, profile: AcceleratorProfile, algorithm: Algorithm, channel_key: str,
                 channels: dict[str, SharedRegion]):
        if channel_key not in channels:
            raise KeyError(f"channel key {channel_key!r} is not bound to any region")
        self.profile = profile
        self.algorithm = algorithm
        self.state = DaemonState(DaemonPhase.UNINITIALIZED, channel_key)
        self.region = channels[channel_key]
        self.init_count = 0
        self.blocks_processed = 0
        self._thread: threading.Thread | None = None

    def initialize(self) -> DaemonState:
        """Warm the device simulation and start the service loop, exactly once."""
        if self.state.phase is not DaemonPhase.UNINITIALIZED:
            raise ProtocolError(
                f"daemon {self.state.channel_key}: re-initialization attempted "
                f"in phase {self.state.phase.value}"
            )
        self.init_count += 1
        self._thread = threading.Thread(
            target=self._loop, name=f"daemon-{self.state.channel_key}", daemon=True
        )
        self.state.phase = DaemonPhase.READY
        self._thread.start()
        return self.state

    def shutdown(self) -> None:
        if self.state.phase is DaemonPhase.TERMINATED:
            return
        self.region.send_to_daemon(MsgKind.SHUTDOWN, -1)
        if self._thread is not None:
            self._thread.join()

    def _loop(self) -> None:
        region = self.region
        while True:
            msg = region.recv_daemon()
            if msg.kind is MsgKind.SHUTDOWN:
                self.state.phase = DaemonPhase.TERMINATED
                return
            if msg.kind is not MsgKind.EXCHANGE_FINISHED:
                region.error = ProtocolError(
                    f"daemon {self.state.channel_key}: unexpected {msg.kind.value} "
                    f"in phase {self.state.phase.value}"
                )
                region.send_to_agent(MsgKind.COMPUTE_ALL_FINISHED, msg.seq)
                self.state.phase = DaemonPhase.TERMINATED
                return
            pipeline.rotate(region)
            region.send_to_agent(MsgKind.ROTATE_FINISHED, msg.seq)
            item = region.slot(Role.COMPUTE).item
            if item is not None:
                self.state.phase = DaemonPhase.COMPUTING
                try:
                    cost = execute_request(self.algorithm, self.profile, item)
                except Exception as exc:  # surfaced to the agent via the region
                    region.error = exc
                    region.send_to_agent(MsgKind.COMPUTE_FINISHED, msg.seq)
                    self.state.phase = DaemonPhase.TERMINATED
                    return
                region.last_compute_time = cost
                region.metrics.blocks_computed += 1
                region.metrics.compute_time += cost
                self.blocks_processed += 1
                self.state.phase = DaemonPhase.READY
                region.send_to_agent(MsgKind.COMPUTE_FINISHED, msg.seq)
            else:
                region.send_to_agent(MsgKind.COMPUTE_ALL_FINISHED, msg.seq)


def daemon_init(profile: AcceleratorProfile, algorithm: Algorithm, channel_key: str,
                channels: dict[str, SharedRegion]) -> Daemon:
    """Create and initialize a daemon bound to an existing channel."""
    daemon = Daemon(profile, algorithm, channel_key, channels)
    daemon.initialize()
    return daemon
