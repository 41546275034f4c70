"""Deterministic discrete-event fabric linking controller, RTU, PLCs and taps.

Time is an integer tick.  Each tick runs in two phases:

1. start hooks (PLC physics, attacker mode changes, controller polls),
2. end hooks (controller computes and writes the next command),

and after every hook the event queue is drained of everything due at or
before the current tick.  Events are ordered by ``(due_tick, sequence)``.
"""
from __future__ import annotations

import csv
import enum
import heapq
from dataclasses import dataclass, field
from typing import Protocol

from .errors import ContractViolation, ScadaSimError


class Role(str, enum.Enum):
    MTU = "MTU"
    RTU = "RTU"
    PLC = "PLC"
    ATTACKER = "ATTACKER"


# tick-hook order within a phase
_ROLE_ORDER = {Role.PLC: 0, Role.RTU: 1, Role.ATTACKER: 2, Role.MTU: 3}


@dataclass(frozen=True)
class NodeId:
    label: str
    role: Role


@dataclass
class Channel:
    endpoint_a: NodeId
    endpoint_b: NodeId
    latency_ticks: int = 0
    tap: NodeId | None = None
    port: int = 0
    frames_sent: int = 0

    def __post_init__(self):
        if self.latency_ticks < 0:
            raise ContractViolation("latency_ticks must be >= 0")

    def other(self, node: NodeId) -> NodeId:
        if node == self.endpoint_a:
            return self.endpoint_b
        if node == self.endpoint_b:
            return self.endpoint_a
        raise ContractViolation(f"{node.label} is not an endpoint of this channel")

    @property
    def key(self) -> frozenset:
        return frozenset((self.endpoint_a.label, self.endpoint_b.label))


@dataclass
class Clock:
    tick: int = 0
    controller_period_ticks: int = 1
    sensor_period_ticks: int = 1

    def __post_init__(self):
        if self.controller_period_ticks < 1 or self.sensor_period_ticks < 1:
            raise ContractViolation("sampling periods must be >= 1")

    @property
    def mono_frequency(self) -> bool:
        return self.controller_period_ticks == self.sensor_period_ticks


@dataclass(order=True)
class Event:
    due_tick: int
    sequence: int
    target: NodeId = field(compare=False)
    frame: bytes = field(compare=False)
    source: NodeId = field(compare=False, default=None)
    destination: NodeId = field(compare=False, default=None)
    channel: Channel = field(compare=False, default=None, repr=False)


class Node(Protocol):
    node_id: NodeId

    def on_frame(self, fabric: "Fabric", event: Event) -> None: ...


class FabricError(ScadaSimError):
    """A node handler raised; carries the tick and node for diagnostics."""


LOG_HEADER = ("tick", "src", "dst", "direction", "via", "length", "head_hex")


class Fabric:
    def __init__(self, clock: Clock | None = None, log_events: bool = False):
        self.clock = clock or Clock()
        self.nodes: dict[str, Node] = {}
        self.channels: dict[frozenset, Channel] = {}
        self._queue: list[Event] = []
        self._seq = 0
        self.log_events = log_events
        self.event_log: list[tuple] = []
        self.delivered: list[Event] = []
        self.record_deliveries = False
        self._started = False

    @property
    def tick(self) -> int:
        return self.clock.tick

    def add_node(self, node: Node) -> None:
        label = node.node_id.label
        if label in self.nodes:
            raise ContractViolation(f"duplicate node label {label!r}")
        self.nodes[label] = node

    def connect(self, a: NodeId, b: NodeId, latency_ticks: int = 0) -> Channel:
        ch = Channel(a, b, latency_ticks, port=502 + len(self.channels))
        if ch.key in self.channels:
            raise ContractViolation(f"channel {a.label}<->{b.label} already exists")
        self.channels[ch.key] = ch
        return ch

    def channel(self, a: str, b: str) -> Channel:
        try:
            return self.channels[frozenset((a, b))]
        except KeyError:
            raise ContractViolation(f"no channel between {a} and {b}") from None

    def attach_tap(self, channel: Channel, attacker: NodeId) -> None:
        if attacker.role is not Role.ATTACKER:
            raise ContractViolation("only ATTACKER nodes can tap a channel")
        if channel.tap is not None:
            raise ContractViolation("channel is already tapped")
        if attacker.label not in self.nodes:
            raise ContractViolation(f"unknown node {attacker.label!r}")
        channel.tap = attacker

    def schedule(self, event: Event) -> None:
        if event.due_tick < self.clock.tick:
            raise ContractViolation(f"cannot schedule at {event.due_tick}, clock is at {self.clock.tick}")
        heapq.heappush(self._queue, event)

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def send(self, src: NodeId, dst: NodeId, frame: bytes) -> None:
        """Send ``frame`` over the src-dst channel, through its tap if any."""
        ch = self.channel(src.label, dst.label)
        ch.frames_sent += 1
        target = ch.tap if ch.tap is not None else dst
        delay = 0 if ch.tap is not None else ch.latency_ticks
        self.schedule(Event(self.clock.tick + delay, self._next_seq(), target, bytes(frame), src, dst, ch))

    def forward(self, tap: NodeId, event: Event, frame: bytes) -> None:
        """Deliver a tapped frame (possibly rewritten) to its real destination."""
        ch = event.channel
        self.schedule(Event(self.clock.tick + ch.latency_ticks, self._next_seq(), event.destination,
                            bytes(frame), event.source, event.destination, ch))

    def _deliver(self, ev: Event) -> None:
        node = self.nodes[ev.target.label]
        if self.log_events:
            via = ev.target.label if ev.target != ev.destination else ""
            # "down" travels from the control centre towards the field device
            down = _ROLE_ORDER[ev.source.role] > _ROLE_ORDER[ev.destination.role]
            self.event_log.append((self.clock.tick, ev.source.label, ev.destination.label,
                                   "down" if down else "up", via, len(ev.frame), ev.frame[:16].hex()))
        if self.record_deliveries:
            self.delivered.append(ev)
        try:
            node.on_frame(self, ev)
        except ScadaSimError:
            raise
        except Exception as exc:  # any handler failure aborts the round
            raise FabricError(f"tick {self.clock.tick}: node {ev.target.label} failed: {exc!r}") from exc

    def drain(self) -> None:
        q = self._queue
        while q and q[0].due_tick <= self.clock.tick:
            self._deliver(heapq.heappop(q))

    def _hooks(self, name: str):
        nodes = sorted(self.nodes.values(), key=lambda n: _ROLE_ORDER[n.node_id.role])
        return [getattr(n, name) for n in nodes if hasattr(n, name)]

    def run_until(self, end_tick: int) -> None:
        """Process ticks up to and including ``end_tick``."""
        if end_tick < self.clock.tick:
            raise ContractViolation("end_tick is in the past")
        start_hooks = self._hooks("on_tick")
        end_hooks = self._hooks("on_tick_end")
        t = self.clock.tick if not self._started else self.clock.tick + 1
        self._started = True
        while t <= end_tick:
            self.clock.tick = t
            self.drain()
            for hook in start_hooks:
                self._call(hook, t)
            for hook in end_hooks:
                self._call(hook, t)
            t += 1

    def _call(self, hook, t: int) -> None:
        try:
            hook(self, t)
        except ScadaSimError:
            raise
        except Exception as exc:
            raise FabricError(f"tick {t}: tick hook {hook.__qualname__} failed: {exc!r}") from exc
        self.drain()

    @property
    def pending(self) -> int:
        return len(self._queue)

    def write_event_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_HEADER)
            w.writerows(self.event_log)
