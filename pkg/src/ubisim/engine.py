"""Run orchestration: build a simulation from a scenario, drive the
agent/controller protocol, and emit the output artifacts.

Per window each live agent samples its host, compares against the knowledge
base, and reports (alerting on any overload). Alerts reach the cluster-head
controller one latency tick later; the controller plans at most one
reconfiguration per alerting node per window, applies it in the configured
mode, and the episode is judged against the node's next-window sample.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import metrics
from .clustering import deploy_agents, form_clusters, reform_cluster
from .detection import (
    DetectionAgent,
    DetectionVerdict,
    VerdictRecord,
    build_knowledge_base,
    collect,
    control_compare,
    report_alert,
)
from .model import DeviceState, Service, Status
from .reconfig import (
    ClusterView,
    Mode,
    StaleView,
    ViewEntry,
    apply_dynamic,
    apply_static,
    correction_outcome,
    plan_reconfiguration,
    service_outcome,
)
from .scenario import Scenario
from .simkernel import (
    KERNEL,
    Arrival,
    InjectOverload,
    LocalDelivery,
    RunLog,
    Simulation,
    Unreachable,
    WindowBoundary,
)


@dataclass
class ServiceEpisode:
    excess_before: int
    moved: int
    residual: int
    excess_after: int | None = None
    outcome: object = None  # reconfig.Outcome once resolved


@dataclass
class EpisodeRecord:
    """One applied reconfiguration plan and its eventual outcome."""

    window: int
    node: int
    head: int
    mode: str
    services: dict[Service, ServiceEpisode]
    involved: tuple[int, ...]
    downtime_ticks: int
    totals_before: dict[Service, int]
    totals_after: dict[Service, int]
    jain_before: dict[Service, Fraction]
    jain_after: dict[Service, Fraction]
    verdict: DetectionVerdict
    outcome: object = None
    remaining: dict[Service, int] = field(default_factory=dict)
    post_window: int | None = None


class _Controller:
    """Cluster-head state: the view of the cluster and the plans made."""

    def __init__(self, head: int, nodes, kb):
        self.head = head
        services = sorted({svc for (_n, svc) in kb.baseline})
        entries = {}
        for n in sorted(nodes):
            caps = {svc: kb.baseline[(n, svc)] for svc in services if (n, svc) in kb.baseline}
            entries[n] = ViewEntry(node=n, capacities=caps)
        self.view = ClusterView(head=head, entries=entries)
        self.planned: set[tuple[int, int]] = set()


class Engine:
    """One scenario wired into one Simulation instance."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        run = scenario.run
        params = scenario.energy_params()
        devices = []
        topo = scenario.topology()
        for n in scenario.nodes:
            caps = {}
            for spec in scenario.services:
                cap = n.overrides.get(spec.name, spec.capacity)
                if cap is not None:
                    caps[spec.name] = cap
            devices.append(
                DeviceState(
                    id=n.id,
                    neighbors=topo.neighbors(n.id),
                    energy_mj=n.energy,
                    capacities=caps,
                )
            )
        self.sim = Simulation(
            devices,
            params,
            window=run.window,
            horizon=run.ticks,
            latency=run.latency,
            drop_p=run.drop,
            seed=run.seed,
        )
        self.mode = Mode(run.mode)
        energies = {n.id: n.energy for n in scenario.nodes}
        clusters = form_clusters(topo, energies)
        self.sim.install_clusters(clusters)
        self.kb = build_knowledge_base(scenario, clusters)
        self.controllers = {
            c.head: _Controller(c.head, c.nodes, self.kb) for c in clusters
        }
        self.agents: dict[int, DetectionAgent] = deploy_agents(self.sim, clusters)
        self.pending: dict[int, list[EpisodeRecord]] = {}
        for k in range(run.ticks // run.window):
            self.sim.schedule((k + 1) * run.window, KERNEL, WindowBoundary(k))
        for w in scenario.workload:
            self.sim.schedule(w.at, w.node, Arrival(w.node, w.service, w.n))
        for i in scenario.injections:
            self.sim.schedule(i.at, i.node, InjectOverload(i.node, i.service, i.load))
        self.sim.on_boundary = self._on_boundary
        self.sim.on_message = self._on_message
        self.sim.on_depleted = self._on_depleted

    def run(self) -> RunLog:
        return self.sim.run_until(self.scenario.run.ticks)

    # -- boundary processing --

    def _on_boundary(self, window: int) -> None:
        sim = self.sim
        samples = {}
        verdicts = {}
        for host in sorted(self.agents):
            agent = self.agents[host]
            dev = sim.devices.get(host)
            if dev is None or dev.status is Status.DEPLETED:
                continue
            observed = sim.served_snapshot.get(host)
            if observed is None:
                continue
            sample = collect(agent, window, observed, sim.window_acc[host])
            verdict = control_compare(sample, self.kb)
            samples[host] = sample
            verdicts[host] = verdict
            alerted = not verdict.all_normal
            sim.log.verdicts.append(VerdictRecord(window, host, verdict, alerted))
            detail = " ".join(
                f"{svc}={o.observed}/{o.baseline}" for svc, o in verdict.overloaded.items()
            )
            if verdict.energy_anomaly is not None:
                a = verdict.energy_anomaly
                detail = (detail + f" energy={a.drawn}/{a.expected}").strip()
            sim.emit(sim.clock, host, "verdict",
                     f"window={window} {'overload' if alerted else 'normal'}"
                     + (f" {detail}" if detail else ""))
        self._resolve_pending(window, samples)
        for host in sorted(verdicts):
            agent = self.agents[host]
            try:
                report_alert(agent, verdicts[host], samples[host], sim,
                             report_every=self.scenario.run.report_every)
            except Unreachable:
                sim.emit(sim.clock, host, "unreachable", f"controller={agent.controller}")
                self._reform(agent.controller)

    def _resolve_pending(self, window: int, samples) -> None:
        for node in sorted(self.pending):
            if node not in samples:
                continue
            remaining = []
            for ep in self.pending[node]:
                if ep.post_window is not None or window <= ep.window:
                    remaining.append(ep)
                    continue
                result = correction_outcome(ep.verdict, samples[node], self.kb)
                ep.outcome = result.outcome
                ep.remaining = result.remaining
                ep.post_window = window
                for svc, se in ep.services.items():
                    se.excess_after = max(
                        0,
                        samples[node].observed.get(svc, 0) - self.kb.baseline_for(node, svc),
                    )
                    se.outcome = service_outcome(se.excess_before, se.excess_after)
                self.sim.emit(self.sim.clock, node, "outcome",
                              f"window={ep.window} result={result.outcome.value}")
            self.pending[node] = remaining
            if not remaining:
                del self.pending[node]

    # -- message handling --

    def _on_message(self, msg) -> None:
        if isinstance(msg, LocalDelivery):
            receiver, kind = msg.node, msg.kind
        else:
            receiver, kind = msg.receiver, msg.kind
        if kind == "agent_deploy":
            self.agents[receiver] = DetectionAgent(host=receiver, controller=msg.sender)
            return
        if kind == "reconfigure":
            return  # notification only; the kernel already billed the radio
        if kind in ("report", "alert"):
            controller = self.controllers.get(receiver)
            if controller is None:
                return
            verdict, sample = msg.payload
            if sample.node in controller.view.entries:
                controller.view.observe(sample.node, sample.observed, sample.window)
            if kind == "alert":
                self._handle_alert(controller, verdict)

    def _handle_alert(self, controller: _Controller, verdict: DetectionVerdict) -> None:
        sim = self.sim
        key = (verdict.node, verdict.window)
        if key in controller.planned:
            return
        controller.planned.add(key)
        if not verdict.overloaded:
            return  # energy-only alert: nothing to migrate
        try:
            plan = plan_reconfiguration(
                controller.view, verdict, mode=self.mode,
                staleness_max=self.scenario.run.staleness_max,
            )
        except StaleView:
            controller.planned.discard(key)
            sim.emit(sim.clock, controller.head, "defer",
                     f"node={verdict.node} window={verdict.window}")
            return
        cluster_nodes = sorted({controller.head} | sim.clusters.get(controller.head, set()))
        before = self._loads(cluster_nodes, plan.excess)
        if self.mode is Mode.DYNAMIC:
            result = apply_dynamic(plan, sim)
            downtime = 0
        else:
            result = apply_static(plan, sim, self.scenario.run.quiesce_ticks)
            downtime = self.scenario.run.quiesce_ticks if result.involved else 0
        after = self._loads(cluster_nodes, plan.excess)
        for directive, amount in result.executed:
            if amount:
                controller.view.adjust(directive.service, directive.source,
                                       directive.dest, amount)
        episode = EpisodeRecord(
            window=verdict.window,
            node=verdict.node,
            head=controller.head,
            mode=self.mode.value,
            services={
                svc: ServiceEpisode(
                    excess_before=plan.excess[svc],
                    moved=result.moved.get(svc, 0),
                    residual=result.residual.get(svc, 0),
                )
                for svc in plan.excess
            },
            involved=result.involved,
            downtime_ticks=downtime,
            totals_before={s: sum(v.values()) for s, v in before.items()},
            totals_after={s: sum(v.values()) for s, v in after.items()},
            jain_before={s: self._jain(s, cluster_nodes, v) for s, v in before.items()},
            jain_after={s: self._jain(s, cluster_nodes, v) for s, v in after.items()},
            verdict=verdict,
        )
        sim.log.episodes.append(episode)
        self.pending.setdefault(verdict.node, []).append(episode)
        moved = sum(m for m in result.moved.values())
        sim.emit(sim.clock, controller.head, "plan",
                 f"node={verdict.node} window={verdict.window} "
                 f"directives={len(plan.directives)} moved={moved} "
                 f"residual={sum(result.residual.values())}")

    def _loads(self, nodes, services) -> dict[Service, dict[int, int]]:
        return {
            svc: {n: self.sim.devices[n].load.get(svc, 0) for n in nodes}
            for svc in services
        }

    def _jain(self, service: Service, nodes, loads: dict[int, int]) -> Fraction:
        """Exact Jain index over the cluster's load/capacity ratios."""
        ratios = []
        for n in nodes:
            cap = self.sim.devices[n].capacities.get(service, 0)
            if cap > 0:
                ratios.append(Fraction(loads.get(n, 0), cap))
        if not ratios:
            return Fraction(1)
        value = metrics.jain_index(ratios)
        return value if isinstance(value, Fraction) else Fraction(1)

    # -- depletion / re-formation --

    def _on_depleted(self, node: int) -> None:
        for controller in self.controllers.values():
            entry = controller.view.entries.get(node)
            if entry is not None:
                entry.status = Status.DEPLETED
        if node in self.sim.clusters:
            self._reform(node)

    def _reform(self, old_head: int) -> None:
        new_clusters = reform_cluster(self.sim, old_head)
        self.controllers.pop(old_head, None)
        for cluster in new_clusters:
            head_dev = self.sim.devices[cluster.head]
            if head_dev.status is Status.DEPLETED:
                continue
            self.controllers[cluster.head] = _Controller(
                cluster.head, cluster.nodes, self.kb
            )
            if cluster.head not in self.agents:
                self.agents[cluster.head] = DetectionAgent(
                    host=cluster.head, controller=cluster.head
                )
            for n in cluster.nodes:
                agent = self.agents.get(n)
                if agent is not None:
                    agent.controller = cluster.head


def run_scenario(scenario: Scenario, out_dir=None):
    """Build, run, aggregate, and (optionally) write artifacts.

    Returns (RunReport, RunLog).
    """
    engine = Engine(scenario)
    log = engine.run()
    report = metrics.build_report(log)
    if out_dir is not None:
        write_outputs(scenario, log, report, Path(out_dir))
    return report, log


def write_outputs(scenario: Scenario, log: RunLog, report, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "trace.log").write_text(log.serialize())
    with open(out_dir / "clusters.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tick", "head", "members"])
        for tick, head, members in log.cluster_records:
            w.writerow([tick, head, ";".join(str(m) for m in members)])
    with open(out_dir / "detections.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["window", "node", "service", "observed", "baseline", "verdict"])
        for vr in log.verdicts:
            if not vr.alerted:
                continue
            for svc, o in vr.verdict.overloaded.items():
                w.writerow([vr.window, vr.node, svc, o.observed, o.baseline, "overloaded"])
    with open(out_dir / "corrections.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["window", "node", "service", "excess_before", "moved",
                    "residual", "outcome", "downtime_ticks"])
        for ep in log.episodes:
            for svc, se in ep.services.items():
                outcome = se.outcome.value if se.outcome is not None else "pending"
                w.writerow([ep.window, ep.node, svc, se.excess_before, se.moved,
                            se.residual, outcome, ep.downtime_ticks])
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(metrics.SUMMARY_COLUMNS)
        w.writerow(metrics.summary_row(report, scenario))
    (out_dir / "summary.txt").write_text(metrics.format_summary(report) + "\n")
