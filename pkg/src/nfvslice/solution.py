"""Decoding solver output into a slice plan and re-checking it from first principles."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Hashable

import numpy as np

from .formulation import OMEGA, R, RL, THETA, X, Y, Z, Family, ModelIR
from .mblp import MblpSolution
from .net_model import Instance, NodeId

log = logging.getLogger(__name__)

RATE_EPS = 1e-9
CHECK_TOL = 1e-6


class DecodeIncoherent(RuntimeError):
    pass


class UnknownService(KeyError):
    pass


@dataclass
class RoutedPath:
    nodes: tuple[NodeId, ...]
    rate: float
    delay: float = 0.0
    # path index in the model; several routes may share one when its links branch
    slot: int | None = None

    @property
    def links(self) -> list[tuple[NodeId, NodeId]]:
        return list(zip(self.nodes, self.nodes[1:]))


@dataclass
class SegmentPlan:
    s: int
    tail: NodeId
    head: NodeId
    paths: list[RoutedPath] = field(default_factory=list)

    @property
    def delay(self) -> float:
        return max((p.delay for p in self.paths), default=0.0)


@dataclass
class ServicePlan:
    service_id: Hashable
    placement: dict[int, NodeId]
    segments: list[SegmentPlan]
    nfv_delays: dict[int, float] = field(default_factory=dict)


@dataclass
class SlicePlan:
    services: list[ServicePlan]
    activated: list[NodeId]
    path_budget: int
    variant: str = "full"
    objective: float = 0.0

    def service(self, k: Hashable) -> ServicePlan:
        for sp in self.services:
            if sp.service_id == k:
                return sp
        raise UnknownService(k)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "path_budget": self.path_budget,
            "objective": self.objective,
            "activated": list(self.activated),
            "services": [
                {
                    "id": sp.service_id,
                    "placement": {str(s): v for s, v in sorted(sp.placement.items())},
                    "nfv_delays": {str(s): d for s, d in sorted(sp.nfv_delays.items())},
                    "segments": [
                        {"s": seg.s, "tail": seg.tail, "head": seg.head,
                         "paths": [{"nodes": list(p.nodes), "rate": p.rate, "delay": p.delay, "slot": p.slot}
                                   for p in seg.paths]}
                        for seg in sp.segments
                    ],
                    "delay": delay_breakdown(self, sp.service_id),
                }
                for sp in self.services
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "SlicePlan":
        services = []
        for s in doc["services"]:
            segs = [SegmentPlan(int(g["s"]), g["tail"], g["head"],
                                [RoutedPath(tuple(p["nodes"]), float(p["rate"]), float(p.get("delay", 0.0)), p.get("slot"))
                                 for p in g["paths"]])
                    for g in s["segments"]]
            services.append(ServicePlan(s["id"], {int(k): v for k, v in s["placement"].items()}, segs,
                                        {int(k): float(v) for k, v in s.get("nfv_delays", {}).items()}))
        return cls(services, list(doc["activated"]), int(doc["path_budget"]), doc.get("variant", "full"),
                   float(doc.get("objective", 0.0)))


def _walk_delay(inst: Instance, nodes) -> float:
    total = 0.0
    for a, b in zip(nodes, nodes[1:]):
        link = inst.network.link(a, b)
        total += link.delay if link is not None else float("inf")
    return total


def _extract_walk(arcs: list[tuple[NodeId, NodeId]], weight: dict, tail: NodeId, head: NodeId):
    """Simple tail->head path inside the indicated arcs, preferring heavily loaded arcs."""
    out: dict[NodeId, list[tuple[NodeId, NodeId]]] = {}
    for a in arcs:
        out.setdefault(a[0], []).append(a)
    for lst in out.values():
        lst.sort(key=lambda a: -weight.get(a, 0.0))
    stack = [(tail, [tail])]
    seen = set()
    while stack:
        node, path = stack.pop()
        if node == head:
            return path
        if node in seen:
            continue
        seen.add(node)
        for a in reversed(out.get(node, [])):
            if a[1] not in path:
                stack.append((a[1], path + [a[1]]))
    return None


def _decompose(flow: dict[tuple[NodeId, NodeId], float], tail: NodeId, head: NodeId):
    """Split an arc flow into simple tail->head routes; circulations are discarded."""
    left = dict(flow)
    routes = []
    for _ in range(len(flow) + 1):
        arcs = [a for a, f in left.items() if f > RATE_EPS]
        walk = _extract_walk(arcs, left, tail, head)
        if walk is None:
            break
        hops = list(zip(walk, walk[1:]))
        amount = min(left[a] for a in hops)
        for a in hops:
            left[a] -= amount
        routes.append((tuple(walk), amount))
    return routes


def decode(model: ModelIR, sol: MblpSolution, inst: Instance) -> SlicePlan:
    if sol.values is None:
        raise ValueError("cannot decode a solution without values")
    net = inst.network
    multipath = model.variant != "single-path"
    P = model.path_budget
    services = []
    for svc in inst.services:
        k, ell = svc.id, svc.length
        placement = {}
        for s, f in enumerate(svc.chain, start=1):
            hosts = [v for v in net.candidates(f) if sol.value(X(k, s, v)) > 0.5]
            if len(hosts) != 1:
                raise DecodeIncoherent(f"service {k} function {s}: placed on {hosts}")
            placement[s] = hosts[0]
        nfv = {s: net.nfv_delay(v, svc.chain[s - 1]) for s, v in placement.items()}
        segments = []
        for s in range(ell + 1):
            a = svc.source if s == 0 else placement[s]
            b = svc.destination if s == ell else placement[s + 1]
            seg = SegmentPlan(s, a, b)
            merged: dict[tuple, float] = {}
            for p in range(1, P + 1):
                arcs = [(l.tail, l.head) for l in net.links
                        if sol.value(Z(k, s, a, b, p, l.tail, l.head)) > 0.5]
                walk = _extract_walk(arcs, {}, a, b)
                if walk is None:
                    raise DecodeIncoherent(f"service {k} segment {s} path {p}: indicated links do not reach {b}")
                if len(walk) - 1 < len(arcs):
                    log.warning("service %s segment %s path %s: pruned %d detached link(s)",
                                k, s, p, len(arcs) - len(walk) + 1)
                if not multipath:
                    routes = [(tuple(walk), svc.rates[s])]
                else:
                    # the path's own link rates decide where traffic goes
                    flow = {arc: sol.value(RL(k, s, a, b, p, *arc)) for arc in arcs}
                    routes = _decompose(flow, a, b)
                    total = sol.value(R(k, s, a, b, p))
                    if abs(sum(r for _, r in routes) - total) > 1e-6:
                        raise DecodeIncoherent(f"service {k} segment {s} path {p}: link rates do not carry {total}")
                for nodes, rate in routes:
                    if rate > RATE_EPS:
                        merged[(nodes, p)] = merged.get((nodes, p), 0.0) + rate
            for (nodes, p), rate in merged.items():
                seg.paths.append(RoutedPath(nodes, rate, _walk_delay(inst, nodes), p))
            segments.append(seg)
        services.append(ServicePlan(k, placement, segments, nfv))
    activated = [v for v in net.cloud_ids if sol.value(Y(v)) > 0.5]
    return SlicePlan(services, activated, P, model.variant, sol.objective)


def encode(plan: SlicePlan, model: ModelIR, inst: Instance) -> np.ndarray | None:
    """Map a plan onto the columns of ``model``.

    Returns None when the plan needs a column the model lacks (more paths
    than its budget, or a pruned link). The caller still has to check rows.
    """
    x = np.zeros(len(model.columns))

    def put(key, val) -> bool:
        j = model.index.get(key)
        if j is None:
            return False
        x[j] = val
        return True

    for v in plan.activated:
        if not put(Y(v), 1.0):
            return None
    for sp in plan.services:
        k = sp.service_id
        for s, v in sp.placement.items():
            if not put(X(k, s, v), 1.0):
                return None
        for seg in sp.segments:
            put(OMEGA(k, seg.s, seg.tail, seg.head), 1.0)
            put(THETA(k, seg.s), seg.delay)
            if len(seg.paths) > model.path_budget:
                return None
            walks = [(path.nodes, path.rate) for path in seg.paths]
            if walks:
                # every path index must still route; spare ones repeat the first walk at rate 0
                walks += [(walks[0][0], 0.0)] * (model.path_budget - len(walks))
            for p, (nodes, rate) in enumerate(walks, start=1):
                put(R(k, seg.s, seg.tail, seg.head, p), rate)
                for i, j in zip(nodes, nodes[1:]):
                    if not put(Z(k, seg.s, seg.tail, seg.head, p, i, j), 1.0):
                        return None
                    put(RL(k, seg.s, seg.tail, seg.head, p, i, j), rate)
    return x


def delay_breakdown(plan: SlicePlan, k: Hashable) -> dict:
    sp = plan.service(k)
    comm = sum(seg.delay for seg in sp.segments)
    nfv = sum(sp.nfv_delays.values())
    return {"segments": [seg.delay for seg in sp.segments], "communication": comm, "nfv": nfv,
            "total": comm + nfv}


def e2e_delay(plan: SlicePlan, k: Hashable) -> float:
    """Communication delay (per segment, the slowest used path) plus NFV delay."""
    return delay_breakdown(plan, k)["total"]


def power_report(plan: SlicePlan, inst: Instance, beta1: float = 10.0, beta2: float = 1.0,
                 delta: float = 1.0) -> dict:
    """Power of the plan under the linear model; reported only, never optimized."""
    n_cloud = len(inst.network.cloud_nodes)
    active = len(plan.activated)
    load = sum(sum(svc.rates[1:]) for svc in inst.services)
    c = beta2 * n_cloud + delta * load
    return {"activated": active, "constant": c, "power": (beta1 - beta2) * active + c,
            "beta1": beta1, "beta2": beta2, "delta": delta}


# --- validation ---------------------------------------------------------------

VALIDATED_FAMILIES = (
    Family.placement_once, Family.assign_exactly_one, Family.node_capacity, Family.activation,
    Family.segment_rate, Family.path_link_indicator, Family.link_rate_coupling, Family.link_capacity,
    Family.rate_conservation, Family.indicator_conservation, Family.e2e_threshold,
)


@dataclass
class FamilyCheck:
    family: str
    passed: bool = True
    worst_slack: float = float("inf")
    offending: list[str] = field(default_factory=list)

    def record(self, slack: float, where: str, tol: float = CHECK_TOL):
        slack += 0.0  # no negative zero in reports
        self.worst_slack = min(self.worst_slack, slack)
        if slack < -tol:
            self.passed = False
            self.offending.append(where)


@dataclass
class ValidationReport:
    checks: list[FamilyCheck]
    delays: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[FamilyCheck]:
        return [c for c in self.checks if not c.passed]

    def check(self, family: str) -> FamilyCheck:
        for c in self.checks:
            if c.family == family:
                return c
        raise KeyError(family)

    def to_text(self) -> str:
        lines = []
        for c in self.checks:
            slack = "inf" if c.worst_slack == float("inf") else f"{c.worst_slack:.9g}"
            where = (" offending=" + ";".join(c.offending)) if c.offending else ""
            lines.append(f"{'PASS' if c.passed else 'FAIL'} {c.family} worst_slack={slack}{where}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "checks": [{"family": c.family, "passed": c.passed,
                        "worst_slack": None if c.worst_slack == float("inf") else c.worst_slack,
                        "offending": list(c.offending)} for c in self.checks],
            "delays": self.delays,
        }


def validate(plan: SlicePlan, inst: Instance) -> ValidationReport:
    """Re-derive loads, routes and delays from the plan and instance alone."""
    net = inst.network
    checks = {f.value: FamilyCheck(f.value) for f in VALIDATED_FAMILIES}
    node_load: dict[NodeId, float] = {v: 0.0 for v in net.cloud_ids}
    link_load: dict[tuple[NodeId, NodeId], float] = {}
    delays = {}
    by_id = {sp.service_id: sp for sp in plan.services}

    for svc in inst.services:
        k, ell = svc.id, svc.length
        sp = by_id.get(k)
        if sp is None:
            checks["assign_exactly_one"].record(-1.0, f"k={k}:missing")
            continue
        for s, f in enumerate(svc.chain, start=1):
            v = sp.placement.get(s)
            if v is None:
                checks["assign_exactly_one"].record(-1.0, f"k={k},s={s}:unplaced")
                continue
            cloud = net.cloud(v)
            checks["assign_exactly_one"].record(0.0 if cloud is not None and cloud.supports(f) else -1.0,
                                                f"k={k},s={s},v={v}:unsupported")
            if cloud is not None:
                node_load[v] += svc.rates[s]
            checks["activation"].record(0.0 if v in plan.activated else -1.0, f"k={k},s={s},v={v}")
        extra = set(sp.placement) - set(range(1, ell + 1))
        for s in sorted(extra):
            checks["assign_exactly_one"].record(-1.0, f"k={k},s={s}:not in chain")
        hosts = [v for s, v in sorted(sp.placement.items()) if 1 <= s <= ell]
        for v in sorted(set(hosts)):
            checks["placement_once"].record(1.0 - hosts.count(v), f"k={k},v={v}")

        segs = {seg.s: seg for seg in sp.segments}
        comm = 0.0
        for s in range(ell + 1):
            a = svc.source if s == 0 else sp.placement.get(s)
            b = svc.destination if s == ell else sp.placement.get(s + 1)
            seg = segs.get(s)
            lam = svc.rates[s]
            where = f"k={k},s={s}"
            if seg is None:
                checks["segment_rate"].record(-lam if lam > 0 else 0.0, where + ":missing")
                continue
            total = sum(p.rate for p in seg.paths)
            checks["segment_rate"].record(-abs(total - lam), where)
            slots = {p.slot if p.slot is not None else ("route", q) for q, p in enumerate(seg.paths)}
            checks["indicator_conservation"].record(plan.path_budget - len(slots), where + ":paths")
            worst = 0.0
            for q, path in enumerate(seg.paths):
                pw = f"{where},path={q}"
                ok_ends = len(path.nodes) >= 2 and path.nodes[0] == a and path.nodes[-1] == b
                checks["path_link_indicator"].record(0.0 if ok_ends else -1.0, pw)
                checks["link_rate_coupling"].record(min(path.rate, lam - path.rate), pw)
                simple = len(set(path.nodes)) == len(path.nodes)
                checks["indicator_conservation"].record(0.0 if simple else -1.0, pw + ":repeats")
                d = 0.0
                connected = True
                for arc in path.links:
                    link = net.link(*arc)
                    if link is None:
                        connected = False
                        continue
                    d += link.delay
                    link_load[arc] = link_load.get(arc, 0.0) + path.rate
                checks["rate_conservation"].record(0.0 if connected else -1.0, pw)
                worst = max(worst, d if connected else float("inf"))
            comm += worst
        nfv = sum(net.nfv_delay(v, svc.chain[s - 1]) for s, v in sp.placement.items()
                  if 1 <= s <= ell and net.cloud(v) is not None and net.cloud(v).supports(svc.chain[s - 1]))
        delays[str(k)] = {"communication": comm, "nfv": nfv, "total": comm + nfv,
                          "threshold": svc.latency_threshold}
        checks["e2e_threshold"].record(svc.latency_threshold - (comm + nfv), f"k={k}")

    for v, load in node_load.items():
        checks["node_capacity"].record(net.cloud(v).capacity - load, f"v={v}")
    for arc, load in sorted(link_load.items()):
        link = net.link(*arc)
        checks["link_capacity"].record(link.capacity - load, f"i={arc[0]},j={arc[1]}")
    return ValidationReport(list(checks.values()), delays)
