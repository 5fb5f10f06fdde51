"""Problem-instance data model: directed network, cloud nodes, service requests."""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Mapping

NodeId = str


class EmptyNetwork(ValueError):
    pass


class InstanceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Link:
    tail: NodeId
    head: NodeId
    capacity: float
    delay: float


@dataclass(frozen=True)
class CloudNode:
    node: NodeId
    capacity: float
    # function id -> NFV delay at this node
    functions: Mapping[str, float]

    def supports(self, function: str) -> bool:
        return function in self.functions


@dataclass(frozen=True)
class Network:
    nodes: tuple[NodeId, ...]
    links: tuple[Link, ...]
    cloud_nodes: tuple[CloudNode, ...]

    def __post_init__(self):
        object.__setattr__(self, "_link_index", {(l.tail, l.head): l for l in self.links})
        object.__setattr__(self, "_cloud_index", {c.node: c for c in self.cloud_nodes})

    def link(self, tail: NodeId, head: NodeId) -> Link | None:
        return self._link_index.get((tail, head))

    def cloud(self, node: NodeId) -> CloudNode | None:
        return self._cloud_index.get(node)

    @property
    def cloud_ids(self) -> tuple[NodeId, ...]:
        return tuple(c.node for c in self.cloud_nodes)

    def candidates(self, function: str) -> list[NodeId]:
        """Cloud nodes able to run ``function``, in declaration order."""
        return [c.node for c in self.cloud_nodes if c.supports(function)]

    def nfv_delay(self, node: NodeId, function: str) -> float:
        return self._cloud_index[node].functions[function]


@dataclass(frozen=True)
class ServiceRequest:
    id: Hashable
    source: NodeId
    destination: NodeId
    chain: tuple[str, ...]
    rates: tuple[float, ...]
    latency_threshold: float

    @property
    def length(self) -> int:
        return len(self.chain)


@dataclass(frozen=True)
class Instance:
    network: Network
    services: tuple[ServiceRequest, ...] = ()
    path_budget: int = 2
    # free-form provenance (generator seed etc.); not part of the problem
    meta: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def with_services(self, services: Iterable[ServiceRequest]) -> "Instance":
        return Instance(self.network, tuple(services), self.path_budget, self.meta)

    def with_path_budget(self, p: int) -> "Instance":
        return Instance(self.network, self.services, p, self.meta)

    def service(self, k: Hashable) -> ServiceRequest:
        for svc in self.services:
            if svc.id == k:
                return svc
        raise KeyError(k)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    location: str
    message: str = ""

    def __str__(self):
        return f"{self.code} at {self.location}: {self.message}"


def _finite_nonneg(x: float) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x) and x >= 0


def validate_instance(inst: Instance) -> list[Diagnostic]:
    """Check every data-model invariant; an empty list means the instance is well formed."""
    out: list[Diagnostic] = []
    net = inst.network
    nodes = set(net.nodes)
    if len(nodes) != len(net.nodes):
        out.append(Diagnostic("duplicate_node", "nodes", "node ids must be unique"))

    seen = set()
    for idx, l in enumerate(net.links):
        loc = f"links[{idx}]({l.tail}->{l.head})"
        if l.tail not in nodes or l.head not in nodes:
            out.append(Diagnostic("unknown_node", loc, "link endpoint not in nodes"))
        if l.tail == l.head:
            out.append(Diagnostic("self_loop", loc))
        if (l.tail, l.head) in seen:
            out.append(Diagnostic("duplicate_link", loc))
        seen.add((l.tail, l.head))
        if not _finite_nonneg(l.capacity):
            out.append(Diagnostic("bad_capacity", loc, f"capacity={l.capacity}"))
        if not _finite_nonneg(l.delay):
            out.append(Diagnostic("bad_delay", loc, f"delay={l.delay}"))

    cloud_seen = set()
    for c in net.cloud_nodes:
        loc = f"cloud_nodes[{c.node}]"
        if c.node not in nodes:
            out.append(Diagnostic("unknown_node", loc, "cloud node not in nodes"))
        if c.node in cloud_seen:
            out.append(Diagnostic("duplicate_cloud_node", loc))
        cloud_seen.add(c.node)
        if not _finite_nonneg(c.capacity):
            out.append(Diagnostic("bad_capacity", loc, f"capacity={c.capacity}"))
        for f, d in c.functions.items():
            if not _finite_nonneg(d):
                out.append(Diagnostic("bad_delay", f"{loc}.{f}", f"delay={d}"))

    if not isinstance(inst.path_budget, int) or inst.path_budget < 1:
        out.append(Diagnostic("bad_path_budget", "path_budget", f"P={inst.path_budget}"))

    ids = set()
    for svc in inst.services:
        loc = f"services[{svc.id}]"
        if svc.id in ids:
            out.append(Diagnostic("duplicate_service", loc))
        ids.add(svc.id)
        for role, n in (("source", svc.source), ("destination", svc.destination)):
            if n not in nodes:
                out.append(Diagnostic("unknown_node", f"{loc}.{role}"))
            elif n in cloud_seen:
                out.append(Diagnostic(f"{role}_is_cloud", f"{loc}.{role}",
                                      f"{n} is a cloud node; endpoints must lie outside V"))
        if svc.source == svc.destination:
            out.append(Diagnostic("source_equals_destination", loc))
        if len(svc.chain) < 1:
            out.append(Diagnostic("empty_chain", loc))
        if len(svc.rates) != len(svc.chain) + 1:
            out.append(Diagnostic("rates_length", loc,
                                  f"expected {len(svc.chain) + 1} rates, got {len(svc.rates)}"))
        for s, r in enumerate(svc.rates):
            if not _finite_nonneg(r):
                out.append(Diagnostic("bad_rate", f"{loc}.rates[{s}]", f"rate={r}"))
        if not (isinstance(svc.latency_threshold, (int, float)) and svc.latency_threshold > 0):
            out.append(Diagnostic("bad_threshold", loc))
        for s, f in enumerate(svc.chain, start=1):
            if not net.candidates(f):
                out.append(Diagnostic("unsatisfiable_function", f"{loc}.chain[{s}]",
                                      f"no cloud node supports {f}"))
    return out


def dijkstra(adj: Mapping[NodeId, list[tuple[NodeId, float]]], src: NodeId) -> dict[NodeId, float]:
    dist = {src: 0.0}
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, w in adj.get(u, ()):
            nd = d + w
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def shortest_path_stats(net: Network, weights: Mapping[tuple[NodeId, NodeId], float] | None = None,
                        pairs: Iterable[tuple[NodeId, NodeId]] | None = None):
    """All-pairs shortest-path distances and their mean over reachable ordered pairs.

    ``weights`` overrides link delays (the generator passes Euclidean lengths).
    ``pairs`` restricts the mean to the given ordered pairs; by default every
    ordered pair of distinct nodes is considered. Unreachable pairs map to inf
    and are left out of the mean.
    """
    if not net.links:
        raise EmptyNetwork("network has no links")
    adj: dict[NodeId, list[tuple[NodeId, float]]] = {}
    for l in net.links:
        w = l.delay if weights is None else weights[(l.tail, l.head)]
        adj.setdefault(l.tail, []).append((l.head, w))
    if pairs is None:
        pairs = [(a, b) for a in net.nodes for b in net.nodes if a != b]
    dist: dict[tuple[NodeId, NodeId], float] = {}
    cache: dict[NodeId, dict[NodeId, float]] = {}
    for a, b in pairs:
        if a not in cache:
            cache[a] = dijkstra(adj, a)
        dist[(a, b)] = cache[a].get(b, math.inf)
    finite = [d for d in dist.values() if math.isfinite(d)]
    mean = sum(finite) / len(finite) if finite else math.inf
    return mean, dist


# --- JSON ------------------------------------------------------------------

def instance_to_dict(inst: Instance) -> dict:
    net = inst.network
    doc = {
        "nodes": list(net.nodes),
        "links": [{"tail": l.tail, "head": l.head, "capacity": l.capacity, "delay": l.delay}
                  for l in net.links],
        "cloud_nodes": [
            {"node": c.node, "capacity": c.capacity,
             "functions": [{"id": f, "delay": d} for f, d in c.functions.items()]}
            for c in net.cloud_nodes
        ],
        "services": [
            {"id": s.id, "source": s.source, "destination": s.destination, "chain": list(s.chain),
             "rates": list(s.rates), "latency_threshold": s.latency_threshold}
            for s in inst.services
        ],
        "path_budget": inst.path_budget,
    }
    if inst.meta:
        doc["meta"] = dict(inst.meta)
    return doc


def instance_from_dict(doc: Mapping) -> Instance:
    try:
        links = tuple(Link(str(l["tail"]), str(l["head"]), float(l["capacity"]), float(l["delay"]))
                      for l in doc["links"])
        clouds = tuple(
            CloudNode(str(c["node"]), float(c["capacity"]),
                      {str(f["id"]): float(f["delay"]) for f in c["functions"]})
            for c in doc["cloud_nodes"]
        )
        services = tuple(
            ServiceRequest(s["id"], str(s["source"]), str(s["destination"]),
                           tuple(str(f) for f in s["chain"]), tuple(float(r) for r in s["rates"]),
                           float(s["latency_threshold"]))
            for s in doc["services"]
        )
        net = Network(tuple(str(n) for n in doc["nodes"]), links, clouds)
        return Instance(net, services, int(doc["path_budget"]), dict(doc.get("meta", {})))
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceFormatError(f"malformed instance document: {exc!r}") from exc


def render(inst: Instance) -> str:
    return json.dumps(instance_to_dict(inst), indent=2)


def parse(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(str(exc)) from exc
    return instance_from_dict(doc)
