import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats
from scipy.sparse.csgraph import shortest_path

from nfvslice.instancegen import GenConfig, RetryExhausted, fig1_instance, fig1_network, generate
from nfvslice.net_model import render, validate_instance


def _chi2_uniform(samples, lo, hi, bins=5):
    counts = [0] * bins
    for x in samples:
        counts[min(int((x - lo) / (hi - lo) * bins), bins - 1)] += 1
    return stats.chisquare(counts).pvalue


def _many(n_links=1000):
    """Enough generated instances to collect ``n_links`` undirected link draws."""
    caps, nodes, nfv = [], [], []
    seed = 0
    while len(caps) < n_links:
        inst = generate(GenConfig(seed=seed))
        net = inst.network
        caps.extend(l.capacity for l in net.links if l.tail < l.head)
        nodes.extend(c.capacity for c in net.cloud_nodes)
        nfv.extend(d for c in net.cloud_nodes for d in c.functions.values())
        seed += 1
    return caps[:n_links], nodes, nfv


@pytest.fixture(scope="module")
def samples():
    return _many()


def test_same_seed_same_document():
    cfg = GenConfig(seed=11, service_count=3)
    assert render(generate(cfg)) == render(generate(cfg))


def test_different_seeds_differ():
    assert render(generate(GenConfig(seed=1))) != render(generate(GenConfig(seed=2)))


def test_link_capacity_mean(samples):
    caps = samples[0]
    assert len(caps) == 1000
    assert 1.8 <= sum(caps) / len(caps) <= 2.2


def test_ranges_and_uniformity(samples):
    caps, nodes, nfv = samples
    assert all(0.5 <= c <= 3.5 for c in caps)
    assert all(6.0 <= c <= 12.0 for c in nodes)
    assert all(0.8 <= d <= 1.2 for d in nfv)
    assert _chi2_uniform(caps, 0.5, 3.5) > 0.01
    assert _chi2_uniform(nodes[:1000], 6.0, 12.0) > 0.01
    assert _chi2_uniform(nfv[:1000], 0.8, 1.2) > 0.01


@given(st.integers(0, 10_000), st.integers(1, 4))
def test_generated_instances_are_well_formed(seed, k):
    inst = generate(GenConfig(seed=seed, service_count=k))
    net = inst.network
    assert validate_instance(inst) == []
    assert len(net.nodes) == 6 and len(net.cloud_nodes) == 3
    offered = sorted(len(c.functions) for c in net.cloud_nodes)
    assert offered == [2, 2, 5]
    # links come in pairs sharing capacity and delay
    for l in net.links:
        back = net.link(l.head, l.tail)
        assert back is not None and (back.capacity, back.delay) == (l.capacity, l.delay)
    clouds = set(net.cloud_ids)
    d_bar = inst.meta["d_bar"]
    pos = inst.meta["positions"]
    lengths = {(l.tail, l.head): math.dist(pos[l.tail], pos[l.head]) for l in net.links}
    for l in net.links:
        assert l.delay == pytest.approx(lengths[(l.tail, l.head)] / d_bar)
    idx = {v: i for i, v in enumerate(net.nodes)}
    w = np.zeros((6, 6))
    for (a, b), d in lengths.items():
        w[idx[a], idx[b]] = d
    sp = shortest_path(w, directed=True)
    for svc in inst.services:
        assert svc.source not in clouds and svc.destination not in clouds
        assert svc.source != svc.destination
        assert len(set(svc.chain)) == 3
        assert svc.rates == (1.0,) * 4
        dist = sp[idx[svc.source], idx[svc.destination]]
        assert math.isfinite(dist)
        assert 3 + 6 * dist / d_bar - 1e-9 <= svc.latency_threshold <= 3 + 6 * dist / d_bar + 2 + 1e-9


@pytest.mark.parametrize("kw", [
    dict(node_capacity=(12.0, 6.0)),
    dict(link_probability=1.5),
    dict(cloud_count=5),
    dict(chain_length=6),
    dict(cloud_count=0),
    dict(restricted_functions=9),
])
def test_config_invariants(kw):
    with pytest.raises(ValueError):
        GenConfig(**kw)


def test_unroutable_topologies_exhaust_retries():
    with pytest.raises(RetryExhausted):
        generate(GenConfig(link_probability=0.0, max_attempts=5))


def test_fig1_network_as_drawn():
    net = fig1_network()
    assert len(net.links) == 7
    assert {(l.tail, l.head) for l in net.links} == {
        ("A", "B"), ("A", "C"), ("B", "E"), ("C", "E"), ("C", "B"), ("E", "D"), ("D", "B")}
    assert net.link("E", "D").capacity == 4.0
    assert net.cloud("E").capacity == 4.0 and net.cloud("C").capacity == 4.0
    assert set(net.cloud("C").functions) == {"f2"}
    assert set(net.cloud("E").functions) == {"f1", "f2"}


@pytest.mark.parametrize("variant", ["two-service", "rate4"])
def test_fig1_instances_validate(variant):
    assert validate_instance(fig1_instance(variant)) == []


def test_fig1_unknown_variant():
    with pytest.raises(ValueError):
        fig1_instance("three-service")
