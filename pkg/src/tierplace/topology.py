"""Four-tier topology: devices behind gateways, gateways behind network
edges, edges linked to cloud data centers.

Containment below the edge tier is a forest (one gateway per device, one
edge per gateway); the only routing freedom is which data center an edge
talks to. All types are immutable and all queries are pure, so a topology
can be shared freely across threads.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass
from enum import IntEnum

__all__ = [
    "Layer",
    "Link",
    "Node",
    "Route",
    "Topology",
    "TopologyError",
    "nearest_device",
    "route",
    "validate_topology",
]


class TopologyError(ValueError):
    """A malformed query against an otherwise usable topology."""


class Layer(IntEnum):
    """Hosting tiers, ordered from the data source toward the data center."""

    DEVICE = 0
    GATEWAY = 1
    EDGE = 2
    CLOUD = 3

    @property
    def label(self) -> str:
        return self.name.title()

    @classmethod
    def from_label(cls, label: str) -> "Layer":
        try:
            return cls[str(label).upper()]
        except KeyError:
            raise ValueError(f"unknown layer: {label!r}") from None


@dataclass(frozen=True)
class Node:
    """One host. Devices and gateways carry a parent pointer toward the cloud.

    A device that cannot compute is modeled with capacity_cpu = 0, not with
    a separate flag. cpu_cost_rate is the price of one CPU unit for one
    charging period; speed scales stage processing latency.
    """

    id: str
    layer: Layer
    parent: str | None = None
    capacity_cpu: float = 0.0
    cpu_cost_rate: float = 0.0
    speed: float = 1.0
    location: tuple[float, float] | None = None


@dataclass(frozen=True)
class Link:
    src: str
    dst: str
    latency_ms: float = 0.0
    traffic_cost_rate: float = 0.0  # cost per decimal GB (8000 Mb)
    bandwidth_mbps: float | None = None  # None means unbounded

    @property
    def key(self) -> str:
        return f"{self.src}->{self.dst}"


@dataclass(frozen=True)
class Route:
    """A device-to-DC path: node ids in tier order plus the links between them."""

    nodes: tuple[str, ...]
    links: tuple[Link, ...]

    @property
    def latency_ms(self) -> float:
        return sum(link.latency_ms for link in self.links)


class Topology:
    """Node/link graph over the four tiers.

    Raw construction lists are kept alongside the lookup tables so that
    validate_topology can report duplicates instead of silently collapsing
    them. Treat instances as immutable after construction.
    """

    def __init__(
        self,
        nodes: Iterable[Node],
        tree_links: Iterable[Link] = (),
        dc_links: Iterable[Link] = (),
    ) -> None:
        self.node_list: tuple[Node, ...] = tuple(nodes)
        self.tree_link_list: tuple[Link, ...] = tuple(tree_links)
        self.dc_link_list: tuple[Link, ...] = tuple(dc_links)
        self.nodes: dict[str, Node] = {n.id: n for n in self.node_list}
        self._uplink: dict[str, Link] = {l.src: l for l in self.tree_link_list}
        self._dc: dict[tuple[str, str], Link] = {
            (l.src, l.dst): l for l in self.dc_link_list
        }

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise TopologyError(f"unknown node: {node_id}") from None

    def has_node(self, node_id: str) -> bool:
        return node_id in self.nodes

    def in_layer(self, layer: Layer) -> list[Node]:
        return sorted(
            (n for n in self.nodes.values() if n.layer == layer), key=lambda n: n.id
        )

    def devices(self) -> list[Node]:
        return self.in_layer(Layer.DEVICE)

    def gateways(self) -> list[Node]:
        return self.in_layer(Layer.GATEWAY)

    def edges(self) -> list[Node]:
        return self.in_layer(Layer.EDGE)

    def clouds(self) -> list[Node]:
        return self.in_layer(Layer.CLOUD)

    def parent_of(self, node_id: str) -> Node | None:
        parent = self.node(node_id).parent
        return self.nodes.get(parent) if parent is not None else None

    def uplink(self, node_id: str) -> Link | None:
        return self._uplink.get(node_id)

    def dc_link(self, edge_id: str, dc_id: str) -> Link | None:
        return self._dc.get((edge_id, dc_id))

    def dcs_of_edge(self, edge_id: str) -> list[str]:
        return sorted(dst for (src, dst) in self._dc if src == edge_id)


def validate_topology(topology: Topology) -> list[tuple[str, str]]:
    """Check every structural invariant; return (kind, offender) pairs.

    An empty list means the topology is well formed. Violations are data,
    not exceptions, so callers can report all of them at once.
    """
    violations: list[tuple[str, str]] = []
    seen: set[str] = set()
    for node in topology.node_list:
        if node.id in seen:
            violations.append(("duplicate id", node.id))
        seen.add(node.id)

    parent_layer = {Layer.DEVICE: Layer.GATEWAY, Layer.GATEWAY: Layer.EDGE}
    for node in topology.node_list:
        if node.layer in parent_layer:
            if node.parent is None:
                violations.append(("missing parent", node.id))
            elif node.parent not in topology.nodes:
                violations.append(("unknown parent", node.id))
            elif topology.nodes[node.parent].layer != parent_layer[node.layer]:
                violations.append(("parent-layer mismatch", node.id))
        elif node.parent is not None:
            violations.append(("unexpected parent", node.id))
        if node.capacity_cpu < 0:
            violations.append(("invalid capacity", node.id))
        if node.cpu_cost_rate < 0:
            violations.append(("invalid cost rate", node.id))
        if node.speed <= 0:
            violations.append(("invalid speed", node.id))

    seen_links: set[tuple[str, str]] = set()
    for link in topology.tree_link_list + topology.dc_link_list:
        if (link.src, link.dst) in seen_links:
            violations.append(("duplicate link", link.key))
        seen_links.add((link.src, link.dst))
        if link.src not in topology.nodes or link.dst not in topology.nodes:
            violations.append(("unknown endpoint", link.key))
            continue
        if link.latency_ms < 0 or link.traffic_cost_rate < 0:
            violations.append(("invalid link value", link.key))
        if link.bandwidth_mbps is not None and link.bandwidth_mbps <= 0:
            violations.append(("invalid link value", link.key))

    for link in topology.tree_link_list:
        child = topology.nodes.get(link.src)
        if child is not None and child.parent != link.dst:
            violations.append(("link-parent mismatch", link.key))
    for node in topology.node_list:
        if node.layer in parent_layer and node.parent in topology.nodes:
            if topology.uplink(node.id) is None:
                violations.append(("missing uplink", node.id))

    for link in topology.dc_link_list:
        src = topology.nodes.get(link.src)
        dst = topology.nodes.get(link.dst)
        if src is None or dst is None:
            continue
        if src.layer != Layer.EDGE or dst.layer != Layer.CLOUD:
            violations.append(("invalid dc link", link.key))
    for edge in topology.edges():
        if not topology.dcs_of_edge(edge.id):
            violations.append(("edge without DC", edge.id))

    return violations


def route(topology: Topology, device_id: str, dc_id: str) -> Route:
    """Return the unique Device->Gateway->Edge->Cloud path.

    Raises TopologyError("invalid endpoint") when either endpoint sits on
    the wrong tier, and TopologyError("no route") when the device's edge is
    not linked to the requested data center.
    """
    device = topology.node(device_id)
    dc = topology.node(dc_id)
    if device.layer != Layer.DEVICE or dc.layer != Layer.CLOUD:
        raise TopologyError(
            f"invalid endpoint: expected Device -> Cloud, got "
            f"{device.layer.label} -> {dc.layer.label}"
        )
    gateway = topology.parent_of(device_id)
    if gateway is None or gateway.layer != Layer.GATEWAY:
        raise TopologyError(f"no route: {device_id} has no gateway")
    edge = topology.parent_of(gateway.id)
    if edge is None or edge.layer != Layer.EDGE:
        raise TopologyError(f"no route: {gateway.id} has no edge")
    up_device = topology.uplink(device_id)
    up_gateway = topology.uplink(gateway.id)
    dc_hop = topology.dc_link(edge.id, dc_id)
    if up_device is None or up_gateway is None:
        raise TopologyError(f"no route: missing uplink below {edge.id}")
    if dc_hop is None:
        raise TopologyError(f"no route: {edge.id} is not linked to {dc_id}")
    return Route(
        nodes=(device_id, gateway.id, edge.id, dc_id),
        links=(up_device, up_gateway, dc_hop),
    )


def nearest_device(topology: Topology, target: tuple[float, float]) -> str:
    """Locate the device closest (Euclidean) to target; ties go to the smaller id."""
    best: tuple[float, str] | None = None
    tx, ty = target
    for node in topology.devices():
        if node.location is None:
            continue
        dx = node.location[0] - tx
        dy = node.location[1] - ty
        key = (dx * dx + dy * dy, node.id)
        if best is None or key < best:
            best = key
    if best is None:
        raise TopologyError("no candidate device")
    return best[1]
