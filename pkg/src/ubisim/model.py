"""Domain types shared by every other module: devices, services, loads,
and the energy-consumption model.

Loads and capacities are integers (requests per measurement window).
Energy is tracked in whole millijoules and only ever decreases; a debit
saturates at the remaining charge and a device whose charge reaches zero
is permanently depleted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

# Service identifier, unique within a scenario (e.g. "Print", "View").
Service = str


class SimulationError(Exception):
    """Base class for all simulation-domain errors."""


class UnknownService(SimulationError):
    """A service was named that the device's capacity profile doesn't contain."""


class DeviceUnavailable(SimulationError):
    """The device is quiesced or depleted and cannot take the requested action."""


class Role(Enum):
    MEMBER = "member"
    CLUSTER_HEAD = "head"


class Status(Enum):
    RUNNING = "running"
    QUIESCED = "quiesced"
    DEPLETED = "depleted"


@dataclass
class EnergyParams:
    """Per-activity energy costs in millijoules.

    ``idle_per_tick`` is charged once per simulated tick a device is powered
    on; ``per_request`` gives the cost of serving one request of a given
    service, falling back to ``default_per_request`` for services without an
    explicit entry; ``tx_per_msg``/``rx_per_msg`` are charged per message
    sent/received.
    """

    idle_per_tick: int = 1
    per_request: dict[Service, int] = field(default_factory=dict)
    tx_per_msg: int = 2
    rx_per_msg: int = 1
    default_per_request: int = 5

    def request_cost(self, service: Service) -> int:
        return self.per_request.get(service, self.default_per_request)


@dataclass
class Activity:
    """One tick's billable activity for a single device."""

    requests_served: dict[Service, int] = field(default_factory=dict)
    msgs_tx: int = 0
    msgs_rx: int = 0

    def add_served(self, service: Service, count: int) -> None:
        self.requests_served[service] = self.requests_served.get(service, 0) + count


@dataclass
class DeviceState:
    """A node's identity, links, battery, capacities, and current load.

    ``load`` holds the requests currently assigned for the window in
    progress; ``window_log`` archives the served counts of every completed
    window (appended by :func:`reset_window`).
    """

    id: int
    neighbors: set[int] = field(default_factory=set)
    energy_mj: int = 10_000
    capacities: dict[Service, int] = field(default_factory=dict)
    load: dict[Service, int] = field(default_factory=dict)
    role: Role = Role.MEMBER
    status: Status = Status.RUNNING
    window_log: list[dict[Service, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.id < 0:
            raise ValueError(f"node id must be non-negative, got {self.id}")
        if self.id in self.neighbors:
            raise ValueError(f"node {self.id} lists itself as a neighbor")
        if self.energy_mj < 0:
            raise ValueError("energy_mj must be non-negative")
        for svc in self.capacities:
            self.load.setdefault(svc, 0)
        if self.energy_mj == 0:
            self.status = Status.DEPLETED


def apply_requests(device: DeviceState, service: Service, n: int) -> None:
    """Add ``n`` incoming requests for ``service`` to the device's load.

    Only the named service's entry changes. Raises DeviceUnavailable when the
    device is not running (quiesced or depleted) and UnknownService when the
    service is not in its capacity profile.
    """
    if n < 0:
        raise ValueError(f"request count must be non-negative, got {n}")
    if device.status is not Status.RUNNING:
        raise DeviceUnavailable(
            f"node {device.id} is {device.status.value}, cannot accept requests"
        )
    if service not in device.capacities:
        raise UnknownService(f"node {device.id} does not offer service {service!r}")
    device.load[service] = device.load.get(service, 0) + n


def energy_delta(activity: Activity, params: EnergyParams) -> int:
    """Millijoules one tick of ``activity`` costs under ``params``."""
    delta = params.idle_per_tick
    for svc, count in activity.requests_served.items():
        delta += params.request_cost(svc) * count
    delta += params.tx_per_msg * activity.msgs_tx
    delta += params.rx_per_msg * activity.msgs_rx
    return delta


def consume_energy(device: DeviceState, activity: Activity, params: EnergyParams) -> int:
    """Debit one tick's activity from the device battery.

    Returns the amount actually debited, which is the full activity cost
    unless the battery saturates first. A device that reaches zero charge
    transitions to DEPLETED; depletion is a state change, not an error.
    """
    if device.status is Status.DEPLETED:
        raise DeviceUnavailable(f"node {device.id} is depleted")
    debit = min(energy_delta(activity, params), device.energy_mj)
    device.energy_mj -= debit
    if device.energy_mj == 0:
        device.status = Status.DEPLETED
    return debit


def reset_window(device: DeviceState) -> dict[Service, int]:
    """Archive the window's served counts to the window log and zero the load.

    Returns the archived sample.
    """
    archived = dict(device.load)
    device.window_log.append(archived)
    for svc in device.load:
        device.load[svc] = 0
    return archived
