"""Partition the node topology into 1-hop clusters and elect heads.

The sweep is a greedy dominating set: repeatedly pick the unassigned node
with the most residual energy (ties to the lowest id) as a head and absorb
its unassigned neighbors as members. Every member is therefore adjacent to
its head, which is what the intra-cluster messaging rule relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

from .detection import DetectionAgent
from .model import Status


@dataclass(frozen=True)
class Topology:
    nodes: frozenset[int]
    edges: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        for a, b in self.edges:
            if a == b:
                raise ValueError(f"self-loop on node {a}")
            if a not in self.nodes or b not in self.nodes:
                raise ValueError(f"edge ({a}, {b}) references an unknown node")

    @staticmethod
    def build(nodes, edges) -> "Topology":
        norm = frozenset((min(a, b), max(a, b)) for a, b in edges)
        return Topology(frozenset(nodes), norm)

    def neighbors(self, node: int) -> set[int]:
        out = set()
        for a, b in self.edges:
            if a == node:
                out.add(b)
            elif b == node:
                out.add(a)
        return out


@dataclass(frozen=True)
class Cluster:
    head: int
    members: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        if self.head in self.members:
            raise ValueError("cluster head cannot be its own member")

    @property
    def nodes(self) -> frozenset[int]:
        return self.members | {self.head}


def elect_head(candidates, energies) -> int:
    """Candidate with maximal energy; ties broken by lowest id."""
    if not candidates:
        raise ValueError("cannot elect a head from no candidates")
    return max(sorted(candidates), key=lambda n: (energies[n], -n))


def form_clusters(topology: Topology, energies: dict[int, int]) -> list[Cluster]:
    """Partition all nodes into clusters; isolated nodes become singletons.

    Returned in election order, which is deterministic for a given
    (topology, energies) pair.
    """
    if not topology.nodes:
        raise ValueError("topology is empty")
    unassigned = set(topology.nodes)
    clusters = []
    while unassigned:
        head = elect_head(unassigned, energies)
        unassigned.discard(head)
        members = frozenset(topology.neighbors(head) & unassigned)
        unassigned -= members
        clusters.append(Cluster(head, members))
    return clusters


def deploy_agents(sim, clusters) -> dict[int, DetectionAgent]:
    """Send one AgentDeploy per member and self-host an agent on each head.

    Member agents are instantiated when the deploy message is delivered;
    the returned dict holds the heads' self-hosted agents. A head found
    depleted before deployment has its cluster re-formed first.
    """
    agents: dict[int, DetectionAgent] = {}
    for cluster in list(clusters):
        head_dev = sim.devices[cluster.head]
        if head_dev.status is Status.DEPLETED:
            live = [
                sub for sub in reform_cluster(sim, cluster.head)
                if sim.devices[sub.head].status is not Status.DEPLETED
            ]
            agents.update(deploy_agents(sim, live))
            continue
        agents[cluster.head] = DetectionAgent(host=cluster.head, controller=cluster.head)
        for member in sorted(cluster.members):
            sim.send(cluster.head, member, "agent_deploy")
    return agents


def reform_cluster(sim, old_head: int) -> list[Cluster]:
    """Re-cluster the running members of a dead head's cluster.

    The old head becomes a depleted singleton; the members are re-swept over
    their induced subgraph so the member-adjacent-to-head invariant survives.
    The new clusters are installed into the kernel's routing registry.
    """
    members = sorted(sim.clusters.get(old_head, set()))
    sim.drop_cluster(old_head)
    running = [m for m in members if sim.devices[m].status is not Status.DEPLETED]
    new_clusters = []
    if running:
        nodes = set(running)
        edges = set()
        for m in running:
            for nb in sim.devices[m].neighbors:
                if nb in nodes:
                    edges.add((min(m, nb), max(m, nb)))
        sub = Topology.build(nodes, edges)
        energies = {m: sim.devices[m].energy_mj for m in running}
        new_clusters = form_clusters(sub, energies)
    new_clusters.append(Cluster(old_head))
    sim.install_clusters(new_clusters)
    return new_clusters
