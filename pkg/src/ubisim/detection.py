"""Knowledge base, behavior sampling, and the control comparison.

Per-node agents capture one BehaviorSample per measurement window and a pure
comparison turns it into a DetectionVerdict: a service is overloaded iff its
observed load strictly exceeds the baseline capacity, and the energy draw is
anomalous iff it exceeds the load-explained expectation by more than the
configured tolerance. Agents alert their cluster-head controller on any
non-normal verdict and otherwise file periodic reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .model import EnergyParams, Service, SimulationError, Status
from .simkernel import Unreachable


class MissingCapacity(SimulationError):
    """A node offers a service with no capacity configured anywhere."""


class UnknownNode(SimulationError):
    """The knowledge base has no baselines for the sampled node."""


@dataclass(frozen=True)
class Overload:
    observed: int
    baseline: int

    @property
    def excess(self) -> int:
        return self.observed - self.baseline


@dataclass(frozen=True)
class EnergyAnomaly:
    drawn: int
    expected: int


@dataclass
class KnowledgeBase:
    """Per-device normal capacities plus the expected-energy model.

    ``baseline`` maps (node, service) to the normal requests-per-window
    capacity. Expected energy for a window is linear in the served load:
    window ticks of idle cost, the per-request cost of everything served,
    plus a fixed per-window allowance for the node's routine protocol
    messages (reports out of members, reports/directives through heads).
    """

    baseline: dict[tuple[int, Service], int]
    params: EnergyParams
    window: int
    msg_budget: dict[int, int] = field(default_factory=dict)
    energy_tolerance: float = 0.10

    def nodes(self) -> set[int]:
        return {node for node, _ in self.baseline}

    def baseline_for(self, node: int, service: Service) -> int:
        return self.baseline[(node, service)]

    def expected_energy(self, node: int, served: dict[Service, int]) -> int:
        expected = self.window * self.params.idle_per_tick
        for svc, count in served.items():
            expected += self.params.request_cost(svc) * count
        return expected + self.msg_budget.get(node, 0)


@dataclass
class BehaviorSample:
    """One window's observed per-service load and energy draw for a node."""

    node: int
    window: int
    observed: dict[Service, int]
    energy_drawn: int


@dataclass(frozen=True)
class DetectionVerdict:
    node: int
    window: int
    per_service: dict[Service, Overload | None]  # None = normal
    energy_anomaly: EnergyAnomaly | None = None

    @property
    def overloaded(self) -> dict[Service, Overload]:
        return {s: o for s, o in self.per_service.items() if o is not None}

    @property
    def all_normal(self) -> bool:
        return not self.overloaded and self.energy_anomaly is None


class AgentState(Enum):
    DEPLOYED = "deployed"
    COLLECTING = "collecting"
    REPORTING = "reporting"


@dataclass
class DetectionAgent:
    host: int
    controller: int
    state: AgentState = AgentState.DEPLOYED


@dataclass
class VerdictRecord:
    """Trace-side record of one verdict plus whether it raised an alert."""

    window: int
    node: int
    verdict: DetectionVerdict
    alerted: bool


def build_knowledge_base(scenario, clusters=None) -> KnowledgeBase:
    """Derive baselines and the energy expectation from the configuration.

    Baselines come straight from the declared capacities (per-node override
    first, service default second); the message allowance is sized from the
    cluster layout, which is recomputed here when not supplied.
    """
    defaults = {s.name: s.capacity for s in scenario.services}
    baseline: dict[tuple[int, Service], int] = {}
    for node in scenario.nodes:
        for svc_name, default_cap in defaults.items():
            cap = node.overrides.get(svc_name, default_cap)
            if cap is None:
                raise MissingCapacity(
                    f"node {node.id} offers {svc_name!r} but no capacity is configured"
                )
            baseline[(node.id, svc_name)] = cap
    params = scenario.energy_params()
    if clusters is None:
        from .clustering import form_clusters

        clusters = form_clusters(scenario.topology(), {n.id: n.energy for n in scenario.nodes})
    per_msg = params.tx_per_msg + params.rx_per_msg
    budget: dict[int, int] = {}
    for cluster in clusters:
        budget[cluster.head] = per_msg * len(cluster.members)
        for m in cluster.members:
            budget[m] = per_msg
    return KnowledgeBase(
        baseline=baseline,
        params=params,
        window=scenario.run.window,
        msg_budget=budget,
        energy_tolerance=scenario.run.energy_tolerance,
    )


def collect(agent: DetectionAgent, window: int, observed: dict[Service, int],
            energy_drawn: int) -> BehaviorSample:
    """Package the window's served load and energy draw for the agent's host."""
    agent.state = AgentState.COLLECTING
    return BehaviorSample(
        node=agent.host, window=window, observed=dict(observed), energy_drawn=energy_drawn
    )


def control_compare(sample: BehaviorSample, kb: KnowledgeBase) -> DetectionVerdict:
    """Pure comparison of one sample against the knowledge base.

    Overload is strict: observed must exceed the baseline by at least one
    request. The energy check is separate and multiplicative.
    """
    if sample.node not in kb.nodes():
        raise UnknownNode(f"no baselines for node {sample.node}")
    per_service: dict[Service, Overload | None] = {}
    for svc, observed in sample.observed.items():
        base = kb.baseline_for(sample.node, svc)
        per_service[svc] = Overload(observed, base) if observed > base else None
    expected = kb.expected_energy(sample.node, sample.observed)
    anomaly = None
    if sample.energy_drawn > expected * (1.0 + kb.energy_tolerance):
        anomaly = EnergyAnomaly(drawn=sample.energy_drawn, expected=expected)
    return DetectionVerdict(
        node=sample.node, window=sample.window, per_service=per_service,
        energy_anomaly=anomaly,
    )


def report_alert(agent: DetectionAgent, verdict: DetectionVerdict,
                 sample: BehaviorSample, sim, report_every: int = 1) -> str:
    """Send the window's verdict to the agent's controller.

    Non-normal verdicts always go out as an alert; all-normal windows send a
    periodic report every ``report_every`` windows. Returns which message
    kind left ("alert", "report", or "none"). Raises Unreachable when the
    controller is depleted, which the caller resolves by re-forming the
    cluster; the standing overload re-alerts at the next boundary.
    """
    alert = not verdict.all_normal
    if not alert and verdict.window % report_every != 0:
        return "none"
    kind = "alert" if alert else "report"
    agent.state = AgentState.REPORTING
    try:
        if agent.controller == agent.host:
            sim.local_deliver(agent.host, kind, (verdict, sample))
        else:
            controller_dev = sim.devices.get(agent.controller)
            if controller_dev is None or controller_dev.status is Status.DEPLETED:
                raise Unreachable(f"controller {agent.controller} is depleted")
            sim.send(agent.host, agent.controller, kind, (verdict, sample))
    finally:
        agent.state = AgentState.COLLECTING
    return kind
