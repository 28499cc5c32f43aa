"""In-process stand-in for the shared-memory channel between agent and daemon.

A :class:`SharedRegion` couples three equal-capacity buffer slots with an
ordered control-message queue per direction. Both endpoints see the same slot
objects, so a write on either side is immediately visible to the other and no
content ever crosses the boundary by copy; ``copy_count`` instruments that
claim. The message queue is the only synchronization on slot contents.
"""

from __future__ import annotations

import queue
import re
import threading
from dataclasses import dataclass
from enum import Enum

from .graph import Role, content_checksum


class ProtocolError(RuntimeError):
    """Unexpected control message for the current phase; always fatal."""


class OpKind(Enum):
    GEN = "gen"
    MERGE = "merge"
    APPLY = "apply"


class MsgKind(Enum):
    EXCHANGE_FINISHED = "ExchangeFinished"
    ROTATE_FINISHED = "RotateFinished"
    COMPUTE_FINISHED = "ComputeFinished"
    COMPUTE_ALL_FINISHED = "ComputeAllFinished"
    SHUTDOWN = "Shutdown"


@dataclass(frozen=True, slots=True)
class ControlMessage:
    kind: MsgKind
    seq: int


@dataclass(slots=True)
class WorkItem:
    """One unit of pipeline work: an operation over a block or working set.

    The daemon writes ``result`` into the same item in place; nothing is
    copied out of the region.
    """

    kind: OpKind
    index: int
    payload: object
    units: int
    result: object = None
    result_units: int = 0


@dataclass(slots=True)
class BufferSlot:
    role: Role
    item: WorkItem | None = None


@dataclass
class RegionMetrics:
    messages_sent: int = 0
    blocks_computed: int = 0
    compute_time: float = 0.0


class SharedRegion:
    """Three role-labelled buffer slots plus a two-way control-message queue."""

    def __init__(self, key: str, capacity: int):
        self.key = key
        self.capacity = capacity
        self.slots = [BufferSlot(Role.NEW), BufferSlot(Role.COMPUTE), BufferSlot(Role.UPLOAD)]
        self.cycle_count = 0
        self.copy_count = 0  # block-content copies across the boundary; must stay 0
        self.last_compute_time = 0.0
        self.error: BaseException | None = None
        self.trace: list[str] = []
        self.metrics = RegionMetrics()
        self._to_daemon: queue.SimpleQueue[ControlMessage] = queue.SimpleQueue()
        self._to_agent: queue.SimpleQueue[ControlMessage] = queue.SimpleQueue()
        self._trace_lock = threading.Lock()

    def slot(self, role: Role) -> BufferSlot:
        for s in self.slots:
            if s.role is role:
                return s
        raise AssertionError(f"region {self.key}: no slot with role {role}")

    def roles(self) -> tuple[Role, Role, Role]:
        return tuple(s.role for s in self.slots)

    def checksums(self) -> tuple[str, str, str]:
        """Per-slot content digests, independent of role labels."""
        return tuple(
            content_checksum(None if s.item is None else s.item.payload) for s in self.slots
        )

    def _record(self, kind: MsgKind) -> None:
        with self._trace_lock:
            self.trace.append(kind.value)
            self.metrics.messages_sent += 1

    def send_to_daemon(self, kind: MsgKind, seq: int) -> None:
        self._record(kind)
        self._to_daemon.put(ControlMessage(kind, seq))

    def send_to_agent(self, kind: MsgKind, seq: int) -> None:
        self._record(kind)
        self._to_agent.put(ControlMessage(kind, seq))

    def recv_daemon(self, timeout: float | None = None) -> ControlMessage:
        return self._to_daemon.get(timeout=timeout)

    def recv_agent(self, timeout: float | None = None) -> ControlMessage:
        msg = self._to_agent.get(timeout=timeout)
        if self.error is not None:
            raise self.error
        return msg

    def clear_trace(self) -> None:
        with self._trace_lock:
            self.trace.clear()


# Conformance pattern for one pipelined pass, expanded from the daemon/agent
# protocol: each cycle is ExchangeFinished -> RotateFinished -> one
# ComputeFinished, and the drain cycle ends with ComputeAllFinished.
_CYCLE = f"(?:{MsgKind.EXCHANGE_FINISHED.value},{MsgKind.ROTATE_FINISHED.value},{MsgKind.COMPUTE_FINISHED.value},)"
_FINAL = f"{MsgKind.EXCHANGE_FINISHED.value},{MsgKind.ROTATE_FINISHED.value},{MsgKind.COMPUTE_ALL_FINISHED.value},"
PASS_PATTERN = re.compile(f"(?:{_CYCLE}*{_FINAL})+")


def trace_conforms(trace: list[str]) -> bool:
    """Check a region's message trace against the pipeline-pass pattern.

    A trace may span several passes (and a final Shutdown); every pass must be
    a run of Exchange/Rotate/Compute cycles closed by ComputeAllFinished.
    """
    flat = ",".join(trace)
    if flat:
        flat += ","
    flat = flat.removesuffix(f"{MsgKind.SHUTDOWN.value},")
    if not flat:
        return True
    return PASS_PATTERN.fullmatch(flat) is not None
