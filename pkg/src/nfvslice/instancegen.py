"""Seeded random instances on a square region and the bundled five-node toy network."""

from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass

from .net_model import CloudNode, Instance, Link, Network, ServiceRequest, shortest_path_stats


class RetryExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    node_count: int = 6
    cloud_count: int = 3
    region: float = 100.0
    link_probability: float = 0.6
    node_capacity: tuple[float, float] = (6.0, 12.0)
    link_capacity: tuple[float, float] = (0.5, 3.5)
    function_count: int = 5
    chain_length: int = 3
    # functions offered by each restricted cloud node; one node offers all
    restricted_functions: int = 2
    nfv_delay: tuple[float, float] = (0.8, 1.2)
    rate: float = 1.0
    slack: tuple[float, float] = (0.0, 2.0)
    service_count: int = 1
    path_budget: int = 2
    max_attempts: int = 100

    def __post_init__(self):
        for name in ("node_capacity", "link_capacity", "nfv_delay", "slack"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: empty range [{lo}, {hi}]")
        if not 0.0 <= self.link_probability <= 1.0:
            raise ValueError("link_probability must lie in [0, 1]")
        if self.cloud_count > self.node_count - 2:
            raise ValueError("need at least two non-cloud nodes for sources and destinations")
        if self.chain_length > self.function_count:
            raise ValueError("chain functions are distinct, so chain_length <= function_count")
        if self.cloud_count < 1 or self.chain_length < 1:
            raise ValueError("need at least one cloud node and one function per chain")
        if self.restricted_functions > self.function_count:
            raise ValueError("restricted_functions exceeds function_count")


def _attempt(cfg: GenConfig, rng: random.Random):
    nodes = [f"n{i}" for i in range(cfg.node_count)]
    pos = {n: (rng.uniform(0, cfg.region), rng.uniform(0, cfg.region)) for n in nodes}
    pairs = []
    for a in range(cfg.node_count):
        for b in range(a + 1, cfg.node_count):
            if rng.random() < cfg.link_probability:
                pairs.append((nodes[a], nodes[b], rng.uniform(*cfg.link_capacity)))
    if not pairs:
        return None
    length = {}
    for a, b, _ in pairs:
        d = math.dist(pos[a], pos[b])
        length[(a, b)] = length[(b, a)] = d
    skeleton = Network(tuple(nodes), tuple(Link(a, b, 0.0, 0.0) for a, b in length), ())
    d_bar, dist = shortest_path_stats(skeleton, weights=length)

    links = []
    for a, b, cap in pairs:
        links.append(Link(a, b, cap, length[(a, b)] / d_bar))
        links.append(Link(b, a, cap, length[(a, b)] / d_bar))

    functions = [f"f{i}" for i in range(1, cfg.function_count + 1)]
    cloud_ids = sorted(rng.sample(nodes, cfg.cloud_count), key=nodes.index)
    universal = rng.choice(cloud_ids)
    clouds = []
    for v in cloud_ids:
        cap = rng.uniform(*cfg.node_capacity)
        offered = functions if v == universal else sorted(rng.sample(functions, cfg.restricted_functions),
                                                         key=functions.index)
        clouds.append(CloudNode(v, cap, {f: rng.uniform(*cfg.nfv_delay) for f in offered}))

    edge_nodes = [n for n in nodes if n not in cloud_ids]
    services = []
    for k in range(1, cfg.service_count + 1):
        src, dst = rng.sample(edge_nodes, 2)
        if not math.isfinite(dist[(src, dst)]):
            return None
        chain = tuple(rng.sample(functions, cfg.chain_length))
        alpha = rng.uniform(*cfg.slack)
        theta = 3 + (6 * dist[(src, dst)] / d_bar + alpha)
        services.append(ServiceRequest(k, src, dst, chain, (cfg.rate,) * (cfg.chain_length + 1), theta))

    net = Network(tuple(nodes), tuple(links), tuple(clouds))
    meta = {"seed": cfg.seed, "generator": asdict(cfg), "d_bar": d_bar,
            "positions": {n: list(p) for n, p in pos.items()}}
    return Instance(net, tuple(services), cfg.path_budget, meta)


def generate(cfg: GenConfig) -> Instance:
    """Sample an instance; topologies leaving some service unroutable are redrawn."""
    rng = random.Random(cfg.seed)
    for _ in range(cfg.max_attempts):
        inst = _attempt(cfg, rng)
        if inst is not None:
            return inst
    raise RetryExhausted(f"seed {cfg.seed}: no routable topology in {cfg.max_attempts} attempts")


def fig1_network() -> Network:
    links = tuple(Link(a, b, cap, 1.0) for a, b, cap in (
        ("A", "B", 2.0), ("A", "C", 2.0), ("B", "E", 2.0), ("C", "E", 2.0),
        ("C", "B", 2.0), ("E", "D", 4.0), ("D", "B", 2.0),
    ))
    clouds = (
        CloudNode("C", 4.0, {"f2": 1.0}),
        CloudNode("E", 4.0, {"f1": 1.0, "f2": 1.0}),
    )
    return Network(("A", "B", "C", "D", "E"), links, clouds)


def fig1_instance(variant: str = "two-service", path_budget: int = 2) -> Instance:
    """The toy network with either the two-service or the single rate-4 service request."""
    net = fig1_network()
    if variant == "two-service":
        services = (
            ServiceRequest(1, "A", "D", ("f1",), (1.0, 1.0), 4.0),
            ServiceRequest(2, "A", "B", ("f2",), (1.0, 1.0), 3.0),
        )
    elif variant == "rate4":
        services = (ServiceRequest(1, "A", "D", ("f1",), (4.0, 4.0), 4.0),)
    else:
        raise ValueError(f"unknown toy variant {variant!r}")
    return Instance(net, services, path_budget, {"fixture": f"fig1-{variant}"})
