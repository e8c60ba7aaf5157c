import itertools

import pytest

from ubisim.detection import (
    AgentState,
    BehaviorSample,
    DetectionAgent,
    EnergyAnomaly,
    KnowledgeBase,
    MissingCapacity,
    Overload,
    UnknownNode,
    build_knowledge_base,
    collect,
    control_compare,
    report_alert,
)
from ubisim.engine import Engine, run_scenario
from ubisim.model import EnergyParams
from ubisim.scenario import parse_scenario

from ubisim.cli import load_bundled_scenario

TABLE_BASELINES = {"Print": 34, "View": 123, "SendEmail": 10, "UpdateBDD": 50, "Scan": 8}
TABLE_OVERLOADS = {"Print": 50, "View": 124, "SendEmail": 21, "UpdateBDD": 56, "Scan": 30}


def simple_kb(baselines=None, node=1, window=10, budget=0, tolerance=0.10):
    baselines = baselines or TABLE_BASELINES
    return KnowledgeBase(
        baseline={(node, s): c for s, c in baselines.items()},
        params=EnergyParams(),
        window=window,
        msg_budget={node: budget},
        energy_tolerance=tolerance,
    )


def sample_for(observed, node=1, window=1, drawn=None, kb=None):
    kb = kb or simple_kb(node=node)
    if drawn is None:
        drawn = kb.expected_energy(node, observed)
    return BehaviorSample(node=node, window=window, observed=dict(observed), energy_drawn=drawn)


class TestBuildKnowledgeBase:
    def test_table_defaults(self):
        kb = build_knowledge_base(load_bundled_scenario())
        for node in range(6):
            for svc, cap in TABLE_BASELINES.items():
                assert kb.baseline_for(node, svc) == cap

    def test_per_node_override_wins(self):
        scenario = parse_scenario(
            "[services]\nname=Print capacity=34\n"
            "[nodes]\nid=0 cap.Print=40\nid=1\n"
            "[edges]\na=0 b=1\n"
            "[run]\nticks=10 window=10\n"
        )
        kb = build_knowledge_base(scenario)
        assert kb.baseline_for(0, "Print") == 40
        assert kb.baseline_for(1, "Print") == 34

    def test_missing_capacity(self):
        scenario = parse_scenario(
            "[services]\nname=Print\n"  # no default capacity
            "[nodes]\nid=0 cap.Print=40\nid=1\n"
            "[edges]\na=0 b=1\n"
            "[run]\nticks=10 window=10\n"
        )
        with pytest.raises(MissingCapacity):
            build_knowledge_base(scenario)

    def test_message_budget_from_cluster_shape(self):
        kb = build_knowledge_base(load_bundled_scenario())
        # head 0 has five members; per-message allowance is tx+rx = 3
        assert kb.msg_budget[0] == 15
        assert all(kb.msg_budget[m] == 3 for m in range(1, 6))


class TestCollect:
    def test_packages_served_window(self):
        agent = DetectionAgent(host=1, controller=0)
        sample = collect(agent, 1, {"Print": 50}, 262)
        assert sample.observed == {"Print": 50}
        assert sample.energy_drawn == 262
        assert agent.state is AgentState.COLLECTING

    def test_idle_window_energy_is_idle_ticks(self):
        # one isolated node, no workload: window energy = window * idle
        scenario = parse_scenario(
            "[services]\nname=Print capacity=34\n"
            "[nodes]\nid=0\n"
            "[energy]\nidle=1 tx=2 rx=1 request=5\n"
            "[run]\nticks=10 window=10\n"
        )
        _report, log = run_scenario(scenario)
        assert log.window_energy[0] == [10]
        assert log.window_served[0] == [{"Print": 0}]

    def test_served_requests_add_per_request_cost(self):
        # 3 requests at 5 mJ over a 10-tick idle window -> 25 mJ
        scenario = parse_scenario(
            "[services]\nname=Print capacity=34\n"
            "[nodes]\nid=0\n"
            "[energy]\nidle=1 tx=2 rx=1 request=5\n"
            "[workload]\nat=3 node=0 service=Print n=3\n"
            "[run]\nticks=10 window=10\n"
        )
        _report, log = run_scenario(scenario)
        assert log.window_energy[0] == [25]
        assert log.window_served[0] == [{"Print": 3}]


class TestControlCompare:
    def test_full_overload_row_detected(self):
        kb = simple_kb()
        verdict = control_compare(sample_for(TABLE_OVERLOADS), kb)
        assert set(verdict.overloaded) == set(TABLE_BASELINES)
        for svc, o in verdict.overloaded.items():
            assert o == Overload(TABLE_OVERLOADS[svc], TABLE_BASELINES[svc])
        assert verdict.energy_anomaly is None

    def test_boundary_at_baseline_is_normal(self):
        kb = simple_kb()
        verdict = control_compare(sample_for({"Print": 34}), kb)
        assert verdict.per_service["Print"] is None
        verdict = control_compare(sample_for({"Print": 35}), kb)
        assert verdict.per_service["Print"] == Overload(35, 34)

    def test_all_zero_all_normal(self):
        kb = simple_kb()
        verdict = control_compare(sample_for({s: 0 for s in TABLE_BASELINES}), kb)
        assert verdict.all_normal

    def test_unknown_node(self):
        kb = simple_kb(node=1)
        with pytest.raises(UnknownNode):
            control_compare(sample_for({"Print": 0}, node=9, drawn=0), kb)

    def test_verdict_is_pure(self):
        kb = simple_kb()
        s = sample_for(TABLE_OVERLOADS)
        assert control_compare(s, kb) == control_compare(s, kb)

    def test_exhaustive_against_threshold_oracle(self):
        # every observed vector with entries in 0..2*baseline, two services
        baselines = {"A": 3, "B": 4}
        kb = simple_kb(baselines)
        for a, b in itertools.product(range(7), range(9)):
            observed = {"A": a, "B": b}
            verdict = control_compare(sample_for(observed, kb=kb), kb)
            expected = {s for s in observed if observed[s] > baselines[s]}
            assert set(verdict.overloaded) == expected
            if a <= 3 and b <= 4:
                assert not verdict.overloaded  # no false positives at/below

    def test_energy_anomaly_strictly_above_tolerance(self):
        kb = simple_kb({"Print": 34}, window=10, budget=0, tolerance=0.10)
        observed = {"Print": 2}
        expected = kb.expected_energy(1, observed)  # 10 + 10 = 20
        assert expected == 20
        ok = control_compare(sample_for(observed, drawn=22, kb=kb), kb)
        assert ok.energy_anomaly is None  # 22 == 20 * 1.1 exactly: not strict
        bad = control_compare(sample_for(observed, drawn=23, kb=kb), kb)
        assert bad.energy_anomaly == EnergyAnomaly(drawn=23, expected=20)
        assert not bad.all_normal


class TestReportAlert:
    def _engine(self):
        return Engine(load_bundled_scenario())

    def test_overload_verdict_sends_alert(self):
        engine = self._engine()
        sim = engine.sim
        sim.run_until(11)  # deploys delivered; window 0 not closed yet
        agent = engine.agents[1]
        kb = engine.kb
        sample = sample_for(TABLE_OVERLOADS, kb=kb)
        verdict = control_compare(sample, kb)
        kind = report_alert(agent, verdict, sample, sim)
        assert kind == "alert"
        assert len(verdict.overloaded) == 5  # one alert carrying all five
        assert agent.state is AgentState.COLLECTING
        assert any(
            l.split()[3] == "send" and "kind=alert" in l for l in sim.log.lines
        )

    def test_all_normal_sends_periodic_report(self):
        engine = self._engine()
        sim = engine.sim
        sim.run_until(11)
        agent = engine.agents[1]
        kb = engine.kb
        sample = sample_for({s: 0 for s in TABLE_BASELINES}, kb=kb, window=2)
        verdict = control_compare(sample, kb)
        assert report_alert(agent, verdict, sample, sim, report_every=1) == "report"
        # off-cycle quiet window stays silent
        sample3 = sample_for({s: 0 for s in TABLE_BASELINES}, kb=kb, window=3)
        verdict3 = control_compare(sample3, kb)
        assert report_alert(agent, verdict3, sample3, sim, report_every=2) == "none"

    def test_depleted_controller_unreachable(self):
        from ubisim.model import Status
        from ubisim.simkernel import Unreachable

        engine = self._engine()
        sim = engine.sim
        sim.run_until(11)
        sim.devices[0].energy_mj = 0
        sim.devices[0].status = Status.DEPLETED  # head dies, no rebind yet
        agent = engine.agents[1]
        kb = engine.kb
        sample = sample_for(TABLE_OVERLOADS, kb=kb)
        verdict = control_compare(sample, kb)
        with pytest.raises(Unreachable):
            report_alert(agent, verdict, sample, sim)

    def test_head_agent_reports_locally(self):
        engine = self._engine()
        sim = engine.sim
        agent = engine.agents[0]
        kb = engine.kb
        sample = sample_for({s: 0 for s in TABLE_BASELINES}, node=0, kb=kb)
        sample.energy_drawn = kb.expected_energy(0, sample.observed)
        verdict = control_compare(sample, kb)
        sends_before = sum(1 for l in sim.log.lines if l.split()[3] == "send")
        assert report_alert(agent, verdict, sample, sim) == "report"
        sends_after = sum(1 for l in sim.log.lines if l.split()[3] == "send")
        assert sends_after == sends_before  # no radio traffic for self-reports


class TestDetectionLatency:
    def test_injection_alerts_within_same_window(self):
        # inject above baseline in window 1 -> exactly one alert for window 1
        scenario = load_bundled_scenario()
        _report, log = run_scenario(scenario)
        alert_sends = [
            l for l in log.lines if l.split()[3] == "send" and "kind=alert" in l
        ]
        assert len(alert_sends) == 5  # whole run raises exactly five alerts
        for record in log.injections:
            assert record.above_baseline
            hits = [
                vr for vr in log.verdicts
                if vr.node == record.node and vr.window == record.window and vr.alerted
            ]
            assert len(hits) == 1
            assert record.service in hits[0].verdict.overloaded
