import copy
import json

import pytest
from hypothesis import given, strategies as st

from micro import micro_instance
from nfvslice.formulation import THETA, build
from nfvslice.instancegen import GenConfig, generate
from nfvslice.mblp import MblpStatus, solve_mblp
from nfvslice.net_model import CloudNode, Instance, Link, Network, ServiceRequest
from nfvslice.solution import (RoutedPath, SegmentPlan, ServicePlan, SlicePlan, UnknownService, decode,
                               delay_breakdown, e2e_delay, encode, power_report, validate)


def _solve(inst, variant, **kw):
    model = build(inst, variant, **kw)
    sol = solve_mblp(model)
    return model, sol


def _plan(inst, variant, **kw):
    model, sol = _solve(inst, variant, **kw)
    assert sol.status is MblpStatus.OPTIMAL
    return model, sol, decode(model, sol, inst)


def _failed(report):
    return {c.family for c in report.failures}


@pytest.fixture
def full_plan(two_service):
    return _plan(two_service, "full")[2]


def test_toy_full_plan_places_and_routes(two_service, full_plan):
    assert sorted(full_plan.activated) == ["C", "E"]
    assert full_plan.service(1).placement == {1: "E"}
    assert full_plan.service(2).placement == {1: "C"}
    s1 = [p.nodes for seg in full_plan.service(1).segments for p in seg.paths]
    assert s1 == [("A", "B", "E"), ("E", "D")]
    s2 = [p.nodes for seg in full_plan.service(2).segments for p in seg.paths]
    assert s2 == [("A", "C"), ("C", "B")]


def test_toy_full_plan_delays(full_plan):
    assert e2e_delay(full_plan, 1) == pytest.approx(4.0, abs=1e-6)
    assert e2e_delay(full_plan, 2) == pytest.approx(3.0, abs=1e-6)


def test_toy_full_plan_validates(two_service, full_plan):
    rep = validate(full_plan, two_service)
    assert rep.ok, rep.to_text()
    assert len(rep.checks) == 11


def test_latency_blind_toy_misses_threshold(two_service):
    _, _, plan = _plan(two_service, "no-latency")
    assert plan.activated == ["E"]
    rep = validate(plan, two_service)
    assert _failed(rep) == {"e2e_threshold"}
    assert rep.delays["2"]["total"] == pytest.approx(5.0, abs=1e-6)
    assert rep.check("e2e_threshold").offending == ["k=2"]


def test_rate4_splits_over_two_paths(rate4):
    _, _, plan = _plan(rate4, "full")
    seg0, seg1 = plan.service(1).segments
    assert sorted((p.nodes, p.rate) for p in seg0.paths) == [(("A", "B", "E"), 2.0), (("A", "C", "E"), 2.0)]
    assert [(p.nodes, p.rate) for p in seg1.paths] == [(("E", "D"), 4.0)]
    assert validate(plan, rate4).ok


def test_single_path_rate4_is_infeasible(rate4):
    _, sol = _solve(rate4, "single-path")
    assert sol.status is MblpStatus.INFEASIBLE


def test_decoded_delays_never_exceed_theta_columns(two_service):
    model, sol, plan = _plan(two_service, "full")
    for sp in plan.services:
        for seg in sp.segments:
            assert seg.delay <= sol.value(THETA(sp.service_id, seg.s)) + 1e-6


# --- mutations ----------------------------------------------------------------

def test_mutation_rate_bump_fails(two_service, full_plan):
    bad = copy.deepcopy(full_plan)
    bad.service(1).segments[0].paths[0].rate += 1
    assert "segment_rate" in _failed(validate(bad, two_service))


def test_mutation_swapped_placement_fails(two_service, full_plan):
    bad = copy.deepcopy(full_plan)
    p1, p2 = bad.service(1).placement, bad.service(2).placement
    p1[1], p2[1] = p2[1], p1[1]
    assert _failed(validate(bad, two_service))


def test_mutation_dropped_path_fails(two_service, full_plan):
    bad = copy.deepcopy(full_plan)
    bad.service(2).segments[1].paths.clear()
    assert "segment_rate" in _failed(validate(bad, two_service))


def test_two_functions_on_one_node_fail_placement_once():
    net = Network(("s", "u", "t"), (Link("s", "u", 5.0, 1.0), Link("u", "t", 5.0, 1.0)),
                  (CloudNode("u", 10.0, {"f1": 0.5, "f2": 0.5}),))
    svc = ServiceRequest(1, "s", "t", ("f1", "f2"), (1.0, 1.0, 1.0), 10.0)
    inst = Instance(net, (svc,), 1)
    plan = SlicePlan(
        [ServicePlan(1, {1: "u", 2: "u"}, [
            SegmentPlan(0, "s", "u", [RoutedPath(("s", "u"), 1.0)]),
            SegmentPlan(1, "u", "u", []),
            SegmentPlan(2, "u", "t", [RoutedPath(("u", "t"), 1.0)]),
        ], {1: 0.5, 2: 0.5})],
        ["u"], 1)
    assert "placement_once" in _failed(validate(plan, inst))


def test_too_many_paths_fail_path_budget(rate4):
    _, _, plan = _plan(rate4, "full")
    plan.path_budget = 1
    assert "indicator_conservation" in _failed(validate(plan, rate4))


def test_link_overload_is_reported(rate4):
    _, _, plan = _plan(rate4, "full")
    seg0 = plan.service(1).segments[0]
    seg0.paths = [RoutedPath(("A", "B", "E"), 4.0, 2.0, 1)]
    rep = validate(plan, rate4)
    assert _failed(rep) == {"link_capacity"}
    assert rep.check("link_capacity").worst_slack == pytest.approx(-2.0)


# --- delays and power ---------------------------------------------------------

def test_max_rule_over_paths():
    seg = SegmentPlan(0, "a", "b", [RoutedPath(("a", "b"), 1.0, 2.0), RoutedPath(("a", "c", "b"), 1.0, 3.0)])
    plan = SlicePlan([ServicePlan(1, {}, [seg], {})], [], 2)
    assert e2e_delay(plan, 1) == 3.0
    assert delay_breakdown(plan, 1)["segments"] == [3.0]


def test_zero_delays_give_zero():
    seg = [SegmentPlan(0, "a", "v", [RoutedPath(("a", "v"), 1.0, 0.0)]),
           SegmentPlan(1, "v", "b", [RoutedPath(("v", "b"), 1.0, 0.0)])]
    plan = SlicePlan([ServicePlan(1, {1: "v"}, seg, {1: 0.0})], ["v"], 1)
    assert e2e_delay(plan, 1) == 0.0


def test_unknown_service(full_plan):
    with pytest.raises(UnknownService):
        e2e_delay(full_plan, 99)


def test_power_identity(two_service, full_plan):
    b1, b2, d = 7.0, 2.0, 0.5
    rep = power_report(full_plan, two_service, b1, b2, d)
    n_act = len(full_plan.activated)
    n_cloud = len(two_service.network.cloud_nodes)
    load = sum(sum(s.rates[1:]) for s in two_service.services)
    assert rep["power"] == b1 * n_act + b2 * (n_cloud - n_act) + d * load


def test_empty_service_list_gives_empty_plan(two_service):
    inst = Instance(two_service.network, (), 2)
    model, sol = _solve(inst, "full")
    assert sol.status is MblpStatus.OPTIMAL and sol.objective == 0
    plan = decode(model, sol, inst)
    assert plan.services == [] and plan.activated == []
    assert validate(plan, inst).ok


# --- serialization and encoding -----------------------------------------------

def test_plan_json_round_trip(two_service, full_plan):
    again = SlicePlan.from_dict(json.loads(full_plan.to_json()))
    assert again.to_dict() == full_plan.to_dict()
    assert validate(again, two_service).to_dict() == validate(full_plan, two_service).to_dict()


def test_report_text_is_line_per_family(two_service, full_plan):
    text = validate(full_plan, two_service).to_text()
    lines = text.splitlines()
    assert len(lines) == 11 and all(l.startswith("PASS ") for l in lines)


@pytest.mark.parametrize("variant", ["full", "single-path", "no-latency"])
def test_encode_reproduces_a_feasible_point(two_service, variant):
    model, sol, plan = _plan(two_service, variant)
    x = encode(plan, model, two_service)
    assert x is not None
    assert model.violations(x, 1e-6) == []
    assert model.objective_value(x) == sol.objective


def test_single_path_plan_embeds_into_multi_path_model(two_service):
    _, _, plan = _plan(two_service, "single-path")
    full = build(two_service, "full")
    x = encode(plan, full, two_service)
    assert x is not None and full.violations(x, 1e-6) == []


def test_encode_refuses_plans_over_budget(rate4):
    _, _, plan = _plan(rate4, "full")
    assert encode(plan, build(rate4, "single-path"), rate4) is None


@given(st.integers(0, 400))
def test_optimal_micro_plans_validate(seed):
    inst = micro_instance(seed)
    for variant in ("full", "single-path"):
        model, sol = _solve(inst, variant)
        if sol.status is MblpStatus.OPTIMAL:
            rep = validate(decode(model, sol, inst), inst)
            assert rep.ok, rep.to_text()


@pytest.mark.parametrize("seed", range(4))
def test_generated_plans_validate(seed):
    inst = generate(GenConfig(seed=seed, service_count=1))
    model, sol = _solve(inst, "full")
    if sol.status is MblpStatus.OPTIMAL:
        plan = decode(model, sol, inst)
        rep = validate(plan, inst)
        assert rep.ok, rep.to_text()
        for sp in plan.services:
            for seg in sp.segments:
                assert sum(p.rate for p in seg.paths) == pytest.approx(inst.services[0].rates[seg.s], abs=1e-6)
