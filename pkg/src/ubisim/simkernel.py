"""Deterministic discrete-event engine.

A virtual integer clock, a (time, seq)-ordered event queue, and
neighbor-constrained message delivery. One Simulation instance is strictly
single-threaded; identical (scenario, seed) pairs replay to byte-identical
traces because every stochastic choice draws from the kernel's single seeded
generator in dispatch order and every iteration over devices is id-sorted.

Energy accounting: each device is billed exactly once per elapsed tick
(idle cost plus whatever activity accumulated at that tick). Billing is
lazy — ticks are settled when the clock first moves past them — and at the
last tick of every measurement window each running device is additionally
billed for serving its current load, which is also recorded as the window's
served sample.
"""

from __future__ import annotations

import itertools
import heapq
import random
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .model import (
    Activity,
    DeviceState,
    DeviceUnavailable,
    EnergyParams,
    Role,
    Service,
    SimulationError,
    Status,
    apply_requests,
    consume_energy,
    reset_window,
)

KERNEL = "KERNEL"


class PastEvent(SimulationError):
    """An event was scheduled before the current clock."""


class Unreachable(SimulationError):
    """Sender and receiver are not head/member of the same cluster."""


class SenderDepleted(SimulationError):
    """The sending device has no charge left."""


# --- event payloads ---------------------------------------------------------


@dataclass(frozen=True)
class Tick:
    """Kernel heartbeat; no effect beyond advancing the clock."""


@dataclass(frozen=True)
class WindowBoundary:
    window: int


@dataclass(frozen=True)
class Arrival:
    node: int
    service: Service
    count: int


@dataclass(frozen=True)
class InjectOverload:
    node: int
    service: Service
    amount: int


@dataclass(frozen=True)
class Resume:
    node: int


@dataclass(frozen=True)
class Message:
    sender: int
    receiver: int
    kind: str  # "report" | "alert" | "reconfigure" | "agent_deploy"
    payload: object = None
    sent_at: int = 0

    def __post_init__(self) -> None:
        if self.sender == self.receiver:
            raise ValueError("a message cannot be sent to its own sender")


@dataclass(frozen=True)
class LocalDelivery:
    """Head-local report from the head's own agent; bypasses the radio."""

    node: int
    kind: str
    payload: object = None


@dataclass(frozen=True)
class MsgDeliver:
    message: Message


Payload = Union[Tick, WindowBoundary, Arrival, InjectOverload, Resume, MsgDeliver]


@dataclass
class Event:
    time: int
    seq: int
    target: Union[int, str]
    payload: Payload


class EventQueue:
    """Min-heap of events ordered by (time, seq); seq breaks ties FIFO."""

    def __init__(self) -> None:
        self._heap: list[tuple[int, int, Event]] = []

    def push(self, event: Event) -> None:
        heapq.heappush(self._heap, (event.time, event.seq, event))

    def pop(self) -> Event:
        return heapq.heappop(self._heap)[2]

    def peek_time(self) -> Optional[int]:
        return self._heap[0][0] if self._heap else None

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)


# --- structured run records --------------------------------------------------


@dataclass
class InjectionRecord:
    tick: int
    window: int
    node: int
    service: Service
    amount: int
    load_after: int
    baseline: int

    @property
    def above_baseline(self) -> bool:
        return self.load_after > self.baseline


@dataclass
class RunLog:
    """Everything a finished run produced, in dispatch order.

    ``lines`` is the line-oriented trace (`tick seq target kind details...`);
    the typed lists mirror the protocol-level happenings for the metrics
    module. Serialization is deterministic, so equal logs mean equal runs.
    """

    lines: list[str] = field(default_factory=list)
    processed: list[tuple[int, int]] = field(default_factory=list)
    injections: list[InjectionRecord] = field(default_factory=list)
    verdicts: list = field(default_factory=list)  # detection.VerdictRecord
    episodes: list = field(default_factory=list)  # engine.EpisodeRecord
    cluster_records: list[tuple[int, int, tuple[int, ...]]] = field(default_factory=list)
    window_energy: dict[int, list[int]] = field(default_factory=dict)
    window_served: dict[int, list[dict[Service, int]]] = field(default_factory=dict)
    downtime: dict[int, int] = field(default_factory=dict)
    lost_requests: int = 0
    drops: int = 0
    dead_letters: int = 0
    initial_energy: dict[int, int] = field(default_factory=dict)
    final_energy: dict[int, int] = field(default_factory=dict)
    total_debited: int = 0
    windows_completed: int = 0

    def serialize(self) -> str:
        return "\n".join(self.lines) + "\n" if self.lines else ""


# --- the kernel ---------------------------------------------------------------


class Simulation:
    """Single-threaded deterministic simulation instance.

    The kernel owns the devices, the clock, the event queue, the seeded
    generator, the cluster registry used for reachability checks, and the
    per-node standing demand table that reseeds device loads at every window
    boundary. Protocol behavior (agents, controllers) is attached through
    the ``on_boundary``/``on_message``/``on_depleted`` hooks.
    """

    def __init__(
        self,
        devices: list[DeviceState],
        params: EnergyParams,
        *,
        window: int = 10,
        horizon: int = 100,
        latency: int = 1,
        drop_p: float = 0.0,
        seed: int = 0,
    ) -> None:
        if window < 1:
            raise ValueError("window must be >= 1")
        if latency < 1:
            raise ValueError("latency must be >= 1")
        self.devices: dict[int, DeviceState] = {d.id: d for d in devices}
        if len(self.devices) != len(devices):
            raise ValueError("duplicate device ids")
        self.params = params
        self.window = window
        self.horizon = horizon
        self.latency = latency
        self.drop_p = drop_p
        self.rng = random.Random(seed)
        self.clock = 0
        self.queue = EventQueue()
        self._seq = itertools.count()
        self.log = RunLog()
        self.demand: dict[int, dict[Service, int]] = {
            d.id: {s: 0 for s in d.capacities} for d in devices
        }
        for d in devices:
            for s, n in d.load.items():
                self.demand[d.id][s] = n
        self.clusters: dict[int, set[int]] = {}
        self.head_of: dict[int, int] = {}
        self._buckets: dict[int, dict[int, Activity]] = {}
        self._flushed_through = -1
        self.window_acc: dict[int, int] = {d.id: 0 for d in devices}
        self.served_snapshot: dict[int, dict[Service, int]] = {}
        self.log.initial_energy = {d.id: d.energy_mj for d in devices}
        for d in devices:
            self.log.window_energy[d.id] = []
            self.log.window_served[d.id] = []
            self.log.downtime[d.id] = 0
        # protocol hooks, installed by the engine
        self.on_boundary: Callable[[int], None] = lambda window: None
        self.on_message: Callable[[object], None] = lambda msg: None
        self.on_depleted: Callable[[int], None] = lambda node: None

    # -- logging --

    def emit(self, tick: int, target: Union[int, str], kind: str, details: str = "") -> None:
        seq = next(self._seq)
        line = f"{tick} {seq} {target} {kind}"
        if details:
            line += f" {details}"
        self.log.lines.append(line)

    def _emit_event(self, ev: Event) -> None:
        kind, details = _describe(ev.payload)
        line = f"{ev.time} {ev.seq} {ev.target} {kind}"
        if details:
            line += f" {details}"
        self.log.lines.append(line)

    # -- scheduling and stepping --

    def schedule(self, time: int, target: Union[int, str], payload: Payload) -> Event:
        """Enqueue a payload for dispatch at ``time``; FIFO within a tick."""
        if time < self.clock:
            raise PastEvent(f"cannot schedule at t={time}, clock is {self.clock}")
        ev = Event(time, next(self._seq), target, payload)
        self.queue.push(ev)
        return ev

    def step(self) -> Optional[Event]:
        """Process the minimal (time, seq) event; None when idle."""
        if not self.queue:
            return None
        ev = self.queue.pop()
        if ev.time > self.clock:
            self._flush_through(ev.time - 1)
            self.clock = ev.time
        self.log.processed.append((ev.time, ev.seq))
        self._emit_event(ev)
        self._dispatch(ev)
        return ev

    def run_until(self, t_end: int) -> RunLog:
        """Step until the queue is empty or the next event is past ``t_end``."""
        if t_end < self.clock:
            raise PastEvent(f"t_end={t_end} is before clock={self.clock}")
        while self.queue:
            nxt = self.queue.peek_time()
            if nxt is None or nxt > t_end:
                break
            self.step()
        self._flush_through(min(t_end, self.horizon) - 1)
        self.log.final_energy = {
            nid: self.devices[nid].energy_mj for nid in sorted(self.devices)
        }
        return self.log

    # -- messaging --

    def reachable(self, a: int, b: int) -> bool:
        """Intra-cluster rule: members talk to their head and vice versa."""
        if a == b:
            return False
        return self.head_of.get(a) == b or self.head_of.get(b) == a

    def send(self, sender: int, receiver: int, kind: str, payload: object = None) -> None:
        sdev = self.devices[sender]
        if sdev.status is Status.DEPLETED:
            raise SenderDepleted(f"node {sender} cannot send, battery depleted")
        if not self.reachable(sender, receiver):
            raise Unreachable(f"node {receiver} is not cluster-reachable from {sender}")
        msg = Message(sender, receiver, kind, payload, sent_at=self.clock)
        self._bucket(sender).msgs_tx += 1
        if self.drop_p > 0.0 and self.rng.random() < self.drop_p:
            self.log.drops += 1
            self.emit(self.clock, KERNEL, "drop", f"from={sender} to={receiver} kind={kind}")
            return
        self.emit(self.clock, sender, "send", f"to={receiver} kind={kind}")
        self.schedule(self.clock + self.latency, receiver, MsgDeliver(msg))

    def local_deliver(self, node: int, kind: str, payload: object = None) -> None:
        """Zero-cost delivery from a node to itself (head-hosted agent path)."""
        self.emit(self.clock, node, "local", f"kind={kind}")
        self.on_message(LocalDelivery(node, kind, payload))

    # -- cluster registry --

    def install_clusters(self, clusters) -> None:
        """Record head/member assignments for routing, roles, and the trace."""
        for cluster in clusters:
            head = cluster.head
            members = set(cluster.members)
            self.clusters[head] = members
            self.head_of[head] = head
            self.devices[head].role = Role.CLUSTER_HEAD
            for m in members:
                self.head_of[m] = head
                self.devices[m].role = Role.MEMBER
            ms = ",".join(str(m) for m in sorted(members))
            self.emit(self.clock, KERNEL, "cluster", f"head={head} members={ms}")
            self.log.cluster_records.append((self.clock, head, tuple(sorted(members))))

    def drop_cluster(self, head: int) -> None:
        members = self.clusters.pop(head, set())
        self.head_of.pop(head, None)
        for m in members:
            self.head_of.pop(m, None)

    # -- demand table --

    def add_demand(self, node: int, service: Service, n: int) -> None:
        self.demand[node][service] = self.demand[node].get(service, 0) + n

    def move_demand(self, service: Service, source: int, dest: int, n: int) -> None:
        self.demand[source][service] = self.demand[source].get(service, 0) - n
        self.demand[dest][service] = self.demand[dest].get(service, 0) + n

    # -- energy accounting --

    def _bucket(self, node: int) -> Activity:
        tick_bucket = self._buckets.setdefault(self.clock, {})
        act = tick_bucket.get(node)
        if act is None:
            act = tick_bucket[node] = Activity()
        return act

    def _flush_through(self, t: int) -> None:
        """Bill every device for each tick up to ``t`` (bounded by horizon)."""
        t = min(t, self.horizon - 1)
        while self._flushed_through < t:
            tt = self._flushed_through + 1
            tick_bucket = self._buckets.pop(tt, {})
            window_last = (tt + 1) % self.window == 0
            for nid in sorted(self.devices):
                dev = self.devices[nid]
                if dev.status is Status.DEPLETED:
                    continue
                act = tick_bucket.get(nid, Activity())
                if window_last:
                    if dev.status is Status.RUNNING:
                        served = dict(dev.load)
                        for s, c in served.items():
                            if c:
                                act.add_served(s, c)
                    else:  # quiesced devices serve nothing
                        served = {s: 0 for s in dev.load}
                    self.served_snapshot[nid] = served
                debit = consume_energy(dev, act, self.params)
                self.log.total_debited += debit
                self.window_acc[nid] += debit
                if dev.status is Status.DEPLETED:
                    self.emit(tt, nid, "depleted", "")
                    self.on_depleted(nid)
            self._flushed_through = tt

    # -- dispatch --

    def _dispatch(self, ev: Event) -> None:
        p = ev.payload
        if isinstance(p, (Arrival, InjectOverload)):
            if isinstance(p, Arrival):
                self._apply_arrival(p.node, p.service, p.count, injected=False)
            else:
                self._apply_arrival(p.node, p.service, p.amount, injected=True)
        elif isinstance(p, MsgDeliver):
            self._deliver(p.message)
        elif isinstance(p, WindowBoundary):
            self.on_boundary(p.window)
            self._close_window(p.window)
        elif isinstance(p, Resume):
            dev = self.devices[p.node]
            if dev.status is Status.QUIESCED:
                dev.status = Status.RUNNING
        elif isinstance(p, Tick):
            pass

    def _apply_arrival(self, node: int, service: Service, n: int, *, injected: bool) -> None:
        dev = self.devices[node]
        try:
            apply_requests(dev, service, n)
        except DeviceUnavailable:
            self.log.lost_requests += n
            self.emit(self.clock, node, "lost", f"service={service} n={n}")
            return
        self.add_demand(node, service, n)
        if injected:
            self.log.injections.append(
                InjectionRecord(
                    tick=self.clock,
                    window=self.clock // self.window,
                    node=node,
                    service=service,
                    amount=n,
                    load_after=dev.load[service],
                    baseline=dev.capacities.get(service, 0),
                )
            )

    def _deliver(self, msg: Message) -> None:
        dev = self.devices.get(msg.receiver)
        if dev is None or dev.status is Status.DEPLETED:
            self.log.dead_letters += 1
            self.emit(self.clock, KERNEL, "dead_letter", f"to={msg.receiver} kind={msg.kind}")
            return
        self._bucket(msg.receiver).msgs_rx += 1
        self.on_message(msg)

    def _close_window(self, window: int) -> None:
        """Archive served samples, roll energy accumulators, reseed demand."""
        for nid in sorted(self.devices):
            dev = self.devices[nid]
            self.log.window_energy[nid].append(self.window_acc[nid])
            self.log.window_served[nid].append(dict(self.served_snapshot.get(nid, {})))
            self.window_acc[nid] = 0
            if dev.status is Status.DEPLETED:
                continue
            reset_window(dev)
            for s, n in self.demand[nid].items():
                dev.load[s] = n
        self.served_snapshot = {}
        self.log.windows_completed = window + 1


def _describe(payload: Payload) -> tuple[str, str]:
    if isinstance(payload, Tick):
        return "tick", ""
    if isinstance(payload, WindowBoundary):
        return "boundary", f"window={payload.window}"
    if isinstance(payload, Arrival):
        return "arrival", f"service={payload.service} n={payload.count}"
    if isinstance(payload, InjectOverload):
        return "inject", f"service={payload.service} amount={payload.amount}"
    if isinstance(payload, Resume):
        return "resume", ""
    if isinstance(payload, MsgDeliver):
        m = payload.message
        return "deliver", f"from={m.sender} kind={m.kind}"
    return "unknown", ""
