import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from micro import micro_instance
from nfvslice.formulation import (OMEGA, VARIANTS, X, Family, InvalidInstance, Kind, ModelBuilder,
                                  UnsatisfiableFunction, build, linearize_product)
from nfvslice.instancegen import GenConfig, generate
from nfvslice.lp_core import solve_lp
from nfvslice.mblp import solve_mblp
from nfvslice.net_model import ServiceRequest


def expected_counts(inst, variant, P):
    """Count columns and rows by enumerating index tuples straight from the instance."""
    net = inst.network
    multipath = variant != "single-path"
    latency = variant != "no-latency"
    clouds = [c.node for c in net.cloud_nodes]
    cand = {f: [c.node for c in net.cloud_nodes if f in c.functions] for c in net.cloud_nodes for f in c.functions}
    cols = {k: 0 for k in Kind}
    rows = {f: 0 for f in Family}
    cols[Kind.Y_activate] = len(clouds)
    used_links, loaded_clouds = set(), set()
    for svc in inst.services:
        ell = len(svc.chain)
        hosts = [cand.get(f, []) for f in svc.chain]
        cols[Kind.X_place] += sum(map(len, hosts))
        rows[Family.activation] += sum(map(len, hosts))
        rows[Family.assign_exactly_one] += ell
        rows[Family.placement_once] += len({v for h in hosts for v in h})
        loaded_clouds.update(v for h in hosts for v in h)
        if latency:
            cols[Kind.THETA_segdelay] += ell + 1
            rows[Family.segment_delay] += (ell + 1) * P
            rows[Family.e2e_threshold] += 1
        for s in range(ell + 1):
            tails = [svc.source] if s == 0 else hosts[s - 1]
            heads = [svc.destination] if s == ell else hosts[s]
            for a, b in itertools.product(tails, heads):
                if a == b:
                    continue
                if 0 < s < ell:
                    cols[Kind.OMEGA_pairplace] += 1
                    rows[Family.linearize] += 3
                arcs = [(l.tail, l.head) for l in net.links if l.head != a and l.tail != b]
                used_links.update(arcs)
                touched = {a, b} | {n for arc in arcs for n in arc}
                cols[Kind.Z_pathlink] += P * len(arcs)
                rows[Family.path_link_indicator] += P * len(arcs)
                rows[Family.indicator_conservation] += P * len(touched)
                if multipath:
                    cols[Kind.R_pathrate] += P
                    cols[Kind.R_linkrate_onpath] += P * len(arcs)
                    rows[Family.segment_rate] += 1
                    rows[Family.link_rate_coupling] += P * len(arcs)
                    rows[Family.rate_conservation] += P * len(touched)
    rows[Family.node_capacity] = len(loaded_clouds)
    rows[Family.link_capacity] = len(used_links)
    return ({k: v for k, v in cols.items() if v}, {f: v for f, v in rows.items() if v})


def _instances():
    from nfvslice.instancegen import fig1_instance
    yield "fig1", fig1_instance("two-service")
    yield "rate4", fig1_instance("rate4")
    for seed in range(4):
        yield f"gen{seed}", generate(GenConfig(seed=seed, service_count=1 + seed % 3))
    for seed in range(4):
        yield f"micro{seed}", micro_instance(seed)


@pytest.mark.parametrize("variant", VARIANTS)
@pytest.mark.parametrize("name, inst", list(_instances()))
def test_counts_match_enumeration(name, inst, variant):
    model = build(inst, variant)
    cols, rows = expected_counts(inst, variant, model.path_budget)
    assert model.counts_by_kind() == cols
    assert model.counts_by_family() == rows


def test_every_row_is_tagged_and_named_uniquely():
    model = build(generate(GenConfig(seed=3, service_count=2)), "full")
    names = [r.name for r in model.rows if r.tag is not Family.linearize]
    assert len(set(names)) == len(names)
    lin = [r.name for r in model.rows if r.tag is Family.linearize]
    assert len(lin) == 3 * len(set(lin))
    assert all(isinstance(r.tag, Family) for r in model.rows)
    assert all(0 <= c < len(model.columns) for r in model.rows for c in r.cols)


def test_row_naming_scheme(two_service):
    names = {r.name for r in build(two_service, "full").rows}
    assert "indicator_conservation[k=1,s=0,vs=A,vt=E,p=2,i=A]" in names
    assert "link_capacity[i=E,j=D]" in names
    assert "e2e_threshold[k=2]" in names
    assert "node_capacity[vs=E]" in names


def test_column_kinds_and_bounds(two_service):
    model = build(two_service, "full")
    for c in model.columns:
        if c.key.kind.binary:
            assert (c.lb, c.ub) == (0.0, 1.0)
        else:
            assert c.lb == 0.0


def test_capability_filtering(two_service):
    model = build(two_service, "full")
    assert model.has(X(1, 1, "E")) and not model.has(X(1, 1, "C"))
    assert model.has(X(2, 1, "C")) and model.has(X(2, 1, "E"))


def test_unsatisfiable_function(two_service):
    bad = two_service.with_services([ServiceRequest(1, "A", "D", ("f7",), (1.0, 1.0), 4.0)])
    with pytest.raises(UnsatisfiableFunction):
        build(bad)


def test_invalid_instance_rejected(two_service):
    with pytest.raises(InvalidInstance):
        build(two_service.with_path_budget(0))
    with pytest.raises(ValueError):
        build(two_service, "triple-path")


def test_empty_service_model(two_service):
    model = build(two_service.with_services([]), "full")
    assert model.counts_by_kind() == {Kind.Y_activate: 2}
    assert model.rows == ()
    sol = solve_mblp(model)
    assert sol.optimal and sol.objective == 0


def test_linearization_truth_table():
    bld = ModelBuilder()
    a, b = X(1, 1, "u"), X(1, 2, "w")
    bld.add_var(a)
    bld.add_var(b)
    w, rows = linearize_product(bld, a, b)
    assert w == OMEGA(1, 1, "u", "w") and len(rows) == 3
    again, more = linearize_product(bld, a, b)
    assert again == w and more == []
    model = bld.freeze("full", 1)
    ja, jb, jw = model.col(a), model.col(b), model.col(w)
    for va, vb in itertools.product((0, 1), repeat=2):
        feasible = []
        for vw in (0, 1):
            x = np.zeros(3)
            x[[ja, jb, jw]] = va, vb, vw
            if not model.violations(x):
                feasible.append(vw)
        assert feasible == [va * vb]


def test_linearize_rejects_uncataloged():
    bld = ModelBuilder()
    bld.add_var(X(1, 1, "u"))
    with pytest.raises(KeyError):
        linearize_product(bld, X(1, 1, "u"), X(1, 2, "w"))


@pytest.mark.parametrize("seed", range(6))
def test_doubling_paths_doubles_path_columns(seed):
    inst = generate(GenConfig(seed=seed, service_count=2))
    one, two = build(inst, "full", path_budget=1), build(inst, "full", path_budget=2)
    for kind in (Kind.Z_pathlink, Kind.R_pathrate, Kind.R_linkrate_onpath):
        assert two.counts_by_kind().get(kind, 0) == 2 * one.counts_by_kind().get(kind, 0)


def test_symmetry_rows_are_optional(two_service):
    plain = build(two_service, "full")
    sym = build(two_service, "full", symmetry_breaking=True)
    assert Family.symmetry not in plain.counts_by_family()
    assert sym.counts_by_family()[Family.symmetry] > 0
    assert solve_mblp(sym).objective == solve_mblp(plain).objective


@given(st.integers(0, 400))
def test_relaxation_ordering(seed):
    inst = micro_instance(seed)
    full = solve_mblp(build(inst, "full"))
    if full.optimal:
        blind = solve_mblp(build(inst, "no-latency"))
        assert blind.optimal and blind.objective <= full.objective


@given(st.integers(0, 400))
def test_path_budget_monotonicity(seed):
    inst = micro_instance(seed)
    p1 = solve_mblp(build(inst, "full", path_budget=1))
    if p1.optimal:
        p2 = solve_mblp(build(inst, "full", path_budget=2))
        assert p2.optimal and p2.objective <= p1.objective


@given(st.integers(0, 400))
def test_single_path_embeds_into_multipath(seed):
    inst = micro_instance(seed)
    sp = solve_mblp(build(inst, "single-path"))
    if sp.optimal:
        full = solve_mblp(build(inst, "full", path_budget=2))
        assert full.optimal and full.objective <= sp.objective


def test_lp_relaxation_is_a_lower_bound(two_service):
    model = build(two_service, "full")
    relax = solve_lp(model.lp)
    assert relax.optimal and relax.objective <= 2 + 1e-9
