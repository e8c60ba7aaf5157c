"""Scenario files: a line-oriented sectioned text format.

Sections are ``[services]``, ``[nodes]``, ``[edges]``, ``[energy]``,
``[workload]``, ``[inject]``, and ``[run]``; entries are whitespace-separated
``key=value`` fields and ``#`` starts a comment. Example::

    [services]
    name=Print capacity=34

    [nodes]
    id=0 energy=10000 cap.Print=40
    id=1

    [edges]
    a=0 b=1

    [workload]
    at=5 node=1 service=Print n=10

    [inject]
    at=12 node=1 service=Print load=50

    [run]
    ticks=40 window=10 mode=dynamic seed=1

Parsing is total: any input either yields a Scenario or a ParseError
carrying the offending line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import EnergyParams, SimulationError


class ParseError(SimulationError):
    """A scenario file problem, pinned to a 1-based line number."""

    def __init__(self, message: str, line: int = 0):
        super().__init__(message)
        self.line = line

    @property
    def code(self) -> str:
        return type(self).__name__

    def __str__(self) -> str:
        return f"{self.code} line {self.line}: {self.args[0]}"


class MalformedLine(ParseError):
    pass


class UnknownService(ParseError):
    pass


class DuplicateNode(ParseError):
    pass


class DanglingEdge(ParseError):
    pass


class NegativeValue(ParseError):
    pass


@dataclass
class ServiceSpec:
    name: str
    capacity: int | None = None


@dataclass
class NodeSpec:
    id: int
    energy: int = 10_000
    overrides: dict[str, int] = field(default_factory=dict)


@dataclass
class EnergySpec:
    idle: int = 1
    tx: int = 2
    rx: int = 1
    request_default: int = 5
    request: dict[str, int] = field(default_factory=dict)


@dataclass
class WorkloadItem:
    at: int
    node: int
    service: str
    n: int


@dataclass
class InjectItem:
    at: int
    node: int
    service: str
    load: int


@dataclass
class RunSettings:
    ticks: int = 100
    window: int = 10
    mode: str = "dynamic"
    seed: int = 0
    latency: int = 1
    drop: float = 0.0
    report_every: int = 1
    quiesce_ticks: int = 2
    staleness_max: int = 2
    energy_tolerance: float = 0.10


@dataclass
class Scenario:
    services: list[ServiceSpec] = field(default_factory=list)
    nodes: list[NodeSpec] = field(default_factory=list)
    edges: list[tuple[int, int]] = field(default_factory=list)
    energy: EnergySpec = field(default_factory=EnergySpec)
    workload: list[WorkloadItem] = field(default_factory=list)
    injections: list[InjectItem] = field(default_factory=list)
    run: RunSettings = field(default_factory=RunSettings)

    def service_names(self) -> list[str]:
        return [s.name for s in self.services]

    def energy_params(self) -> EnergyParams:
        return EnergyParams(
            idle_per_tick=self.energy.idle,
            per_request=dict(self.energy.request),
            tx_per_msg=self.energy.tx,
            rx_per_msg=self.energy.rx,
            default_per_request=self.energy.request_default,
        )

    def topology(self):
        from .clustering import Topology

        return Topology.build({n.id for n in self.nodes}, self.edges)


_SECTIONS = ("services", "nodes", "edges", "energy", "workload", "inject", "run")


def _fields(raw: str, lineno: int) -> dict[str, str]:
    out: dict[str, str] = {}
    for token in raw.split():
        key, sep, value = token.partition("=")
        if not sep or not key or not value:
            raise MalformedLine(f"expected key=value fields, got {token!r}", lineno)
        if key in out:
            raise MalformedLine(f"duplicate field {key!r}", lineno)
        out[key] = value
    return out


def _int(fields: dict[str, str], key: str, lineno: int, *, minimum: int | None = None) -> int:
    raw = fields.pop(key)
    try:
        value = int(raw)
    except ValueError:
        raise MalformedLine(f"{key} must be an integer, got {raw!r}", lineno) from None
    if minimum is not None and value < minimum:
        raise NegativeValue(f"{key} must be >= {minimum}, got {value}", lineno)
    return value


def _float(fields: dict[str, str], key: str, lineno: int, *, minimum: float = 0.0) -> float:
    raw = fields.pop(key)
    try:
        value = float(raw)
    except ValueError:
        raise MalformedLine(f"{key} must be a number, got {raw!r}", lineno) from None
    if value < minimum:
        raise NegativeValue(f"{key} must be >= {minimum}, got {value}", lineno)
    return value


def _require(fields: dict[str, str], key: str, lineno: int) -> None:
    if key not in fields:
        raise MalformedLine(f"missing required field {key!r}", lineno)


def _no_extras(fields: dict[str, str], lineno: int) -> None:
    if fields:
        raise MalformedLine(f"unknown field {sorted(fields)[0]!r}", lineno)


def parse_scenario(text: str) -> Scenario:
    """Parse scenario text; raises a ParseError subclass on the first problem."""
    scenario = Scenario()
    section = None
    service_names: set[str] = set()
    node_ids: set[int] = set()
    item_lines: list[tuple[str, int, int]] = []  # (kind, at, lineno) for horizon check

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise MalformedLine("unterminated section header", lineno)
            name = line[1:-1].strip().lower()
            if name not in _SECTIONS:
                raise MalformedLine(f"unknown section [{name}]", lineno)
            section = name
            continue
        if section is None:
            raise MalformedLine("content before any [section] header", lineno)
        try:
            fields = _fields(line, lineno)
            if section == "services":
                _parse_service(scenario, fields, service_names, lineno)
            elif section == "nodes":
                _parse_node(scenario, fields, service_names, node_ids, lineno)
            elif section == "edges":
                _parse_edge(scenario, fields, node_ids, lineno)
            elif section == "energy":
                _parse_energy(scenario, fields, service_names, lineno)
            elif section == "workload":
                item = _parse_item(fields, service_names, node_ids, "n", lineno)
                scenario.workload.append(WorkloadItem(*item))
                item_lines.append(("workload", item[0], lineno))
            elif section == "inject":
                item = _parse_item(fields, service_names, node_ids, "load", lineno)
                scenario.injections.append(InjectItem(*item))
                item_lines.append(("inject", item[0], lineno))
            elif section == "run":
                _parse_run(scenario, fields, lineno)
        except ParseError:
            raise
        except Exception as exc:  # defensive: parsing must be total
            raise MalformedLine(f"unparseable line: {exc}", lineno) from None

    if not scenario.services:
        raise MalformedLine("no [services] declared", 0)
    if not scenario.nodes:
        raise MalformedLine("no [nodes] declared", 0)
    run = scenario.run
    if run.window < 1:
        raise NegativeValue("window must be >= 1", 0)
    if run.ticks < run.window:
        raise MalformedLine(f"ticks ({run.ticks}) must be >= window ({run.window})", 0)
    for kind, at, lineno in item_lines:
        if at > run.ticks:
            raise MalformedLine(
                f"{kind} at t={at} is beyond the run horizon ({run.ticks})", lineno
            )
    return scenario


def _parse_service(scenario, fields, service_names, lineno):
    _require(fields, "name", lineno)
    name = fields.pop("name")
    if name in service_names:
        raise MalformedLine(f"service {name!r} declared twice", lineno)
    capacity = None
    if "capacity" in fields:
        capacity = _int(fields, "capacity", lineno, minimum=1)
    _no_extras(fields, lineno)
    service_names.add(name)
    scenario.services.append(ServiceSpec(name, capacity))


def _parse_node(scenario, fields, service_names, node_ids, lineno):
    _require(fields, "id", lineno)
    nid = _int(fields, "id", lineno, minimum=0)
    if nid in node_ids:
        raise DuplicateNode(f"node {nid} declared twice", lineno)
    energy = 10_000
    if "energy" in fields:
        energy = _int(fields, "energy", lineno, minimum=0)
    overrides = {}
    for key in [k for k in fields if k.startswith("cap.")]:
        svc = key[4:]
        if svc not in service_names:
            raise UnknownService(f"override for undeclared service {svc!r}", lineno)
        overrides[svc] = _int(fields, key, lineno, minimum=1)
    _no_extras(fields, lineno)
    node_ids.add(nid)
    scenario.nodes.append(NodeSpec(nid, energy, overrides))


def _parse_edge(scenario, fields, node_ids, lineno):
    _require(fields, "a", lineno)
    _require(fields, "b", lineno)
    a = _int(fields, "a", lineno, minimum=0)
    b = _int(fields, "b", lineno, minimum=0)
    _no_extras(fields, lineno)
    if a == b:
        raise MalformedLine(f"self-loop on node {a}", lineno)
    for n in (a, b):
        if n not in node_ids:
            raise DanglingEdge(f"edge references undeclared node {n}", lineno)
    scenario.edges.append((min(a, b), max(a, b)))


def _parse_energy(scenario, fields, service_names, lineno):
    e = scenario.energy
    if "idle" in fields:
        e.idle = _int(fields, "idle", lineno, minimum=0)
    if "tx" in fields:
        e.tx = _int(fields, "tx", lineno, minimum=0)
    if "rx" in fields:
        e.rx = _int(fields, "rx", lineno, minimum=0)
    if "request" in fields:
        e.request_default = _int(fields, "request", lineno, minimum=0)
    for key in [k for k in fields if k.startswith("request.")]:
        svc = key[8:]
        if svc not in service_names:
            raise UnknownService(f"energy cost for undeclared service {svc!r}", lineno)
        e.request[svc] = _int(fields, key, lineno, minimum=0)
    _no_extras(fields, lineno)


def _parse_item(fields, service_names, node_ids, amount_key, lineno):
    for key in ("at", "node", "service", amount_key):
        _require(fields, key, lineno)
    at = _int(fields, "at", lineno, minimum=0)
    node = _int(fields, "node", lineno, minimum=0)
    service = fields.pop("service")
    amount = _int(fields, amount_key, lineno, minimum=0)
    _no_extras(fields, lineno)
    if service not in service_names:
        raise UnknownService(f"undeclared service {service!r}", lineno)
    if node not in node_ids:
        raise MalformedLine(f"undeclared node {node}", lineno)
    return at, node, service, amount


def _parse_run(scenario, fields, lineno):
    r = scenario.run
    if "ticks" in fields:
        r.ticks = _int(fields, "ticks", lineno, minimum=1)
    if "window" in fields:
        r.window = _int(fields, "window", lineno, minimum=1)
    if "mode" in fields:
        mode = fields.pop("mode")
        if mode not in ("dynamic", "static"):
            raise MalformedLine(f"mode must be dynamic or static, got {mode!r}", lineno)
        r.mode = mode
    if "seed" in fields:
        r.seed = _int(fields, "seed", lineno)
    if "latency" in fields:
        r.latency = _int(fields, "latency", lineno, minimum=1)
    if "drop" in fields:
        r.drop = _float(fields, "drop", lineno)
        if r.drop > 1.0:
            raise MalformedLine(f"drop must be <= 1.0, got {r.drop}", lineno)
    if "report_every" in fields:
        r.report_every = _int(fields, "report_every", lineno, minimum=1)
    if "quiesce_ticks" in fields:
        r.quiesce_ticks = _int(fields, "quiesce_ticks", lineno, minimum=0)
    if "staleness_max" in fields:
        r.staleness_max = _int(fields, "staleness_max", lineno, minimum=0)
    if "energy_tolerance" in fields:
        r.energy_tolerance = _float(fields, "energy_tolerance", lineno)
    _no_extras(fields, lineno)


def serialize_scenario(scenario: Scenario) -> str:
    """Canonical text for a Scenario; parse(serialize(s)) == s."""
    out = ["[services]"]
    for s in scenario.services:
        line = f"name={s.name}"
        if s.capacity is not None:
            line += f" capacity={s.capacity}"
        out.append(line)
    out.append("")
    out.append("[nodes]")
    for n in scenario.nodes:
        line = f"id={n.id} energy={n.energy}"
        for svc, cap in n.overrides.items():
            line += f" cap.{svc}={cap}"
        out.append(line)
    out.append("")
    out.append("[edges]")
    for a, b in scenario.edges:
        out.append(f"a={a} b={b}")
    out.append("")
    e = scenario.energy
    out.append("[energy]")
    line = f"idle={e.idle} tx={e.tx} rx={e.rx} request={e.request_default}"
    for svc, cost in e.request.items():
        line += f" request.{svc}={cost}"
    out.append(line)
    out.append("")
    out.append("[workload]")
    for w in scenario.workload:
        out.append(f"at={w.at} node={w.node} service={w.service} n={w.n}")
    out.append("")
    out.append("[inject]")
    for i in scenario.injections:
        out.append(f"at={i.at} node={i.node} service={i.service} load={i.load}")
    out.append("")
    r = scenario.run
    out.append("[run]")
    out.append(
        f"ticks={r.ticks} window={r.window} mode={r.mode} seed={r.seed} "
        f"latency={r.latency} drop={r.drop} report_every={r.report_every} "
        f"quiesce_ticks={r.quiesce_ticks} staleness_max={r.staleness_max} "
        f"energy_tolerance={r.energy_tolerance}"
    )
    return "\n".join(out) + "\n"
