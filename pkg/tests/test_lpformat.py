import numpy as np
import pytest
from scipy.optimize import Bounds, LinearConstraint, milp

from micro import micro_models
from nfvslice.formulation import VARIANTS, build
from nfvslice.lpformat import read_lp, write_lp
from nfvslice.mblp import MblpStatus, solve_mblp


def _milp(lp):
    """Solve a parsed LP text with HiGHS; returns (status, objective)."""
    names = lp.variables
    idx = {n: i for i, n in enumerate(names)}
    n = len(names)
    c = np.zeros(n)
    for name, v in lp.objective.items():
        c[idx[name]] = v
    A = np.zeros((len(lp.rows), n))
    lo = np.full(len(lp.rows), -np.inf)
    hi = np.full(len(lp.rows), np.inf)
    for r, (terms, rel, rhs) in enumerate(lp.rows.values()):
        for name, v in terms.items():
            A[r, idx[name]] = v
        if rel in ("<=", "="):
            hi[r] = rhs
        if rel in (">=", "="):
            lo[r] = rhs
    lb, ub = np.zeros(n), np.ones(n)
    for name, (a, b) in lp.bounds.items():
        lb[idx[name]], ub[idx[name]] = a, b
    integ = np.array([1 if name in set(lp.binaries) else 0 for name in names])
    res = milp(c, constraints=LinearConstraint(A, lo, hi) if len(lp.rows) else (), integrality=integ,
               bounds=Bounds(lb, ub))
    return res.status, (res.fun + lp.constant if res.status == 0 else None)


@pytest.mark.parametrize("variant", VARIANTS)
def test_counts_survive_round_trip(two_service, variant):
    model = build(two_service, variant)
    lp = read_lp(write_lp(model))
    assert len(lp.rows) == len(model.rows)
    assert len(lp.binaries) == len(model.binary_columns)
    assert len(lp.bounds) == len(model.columns) - len(model.binary_columns)
    assert set(lp.variables) <= {c.key.name for c in model.columns}


def test_coefficients_survive_round_trip(two_service):
    model = build(two_service, "full")
    lp = read_lp(write_lp(model))
    names = [c.key.name for c in model.columns]
    seen = {}
    for r, (terms, rel, rhs) in zip(model.rows, lp.rows.values()):
        assert rel == r.rel and rhs == r.rhs
        assert terms == {names[j]: v for j, v in zip(r.cols, r.vals)}
        seen[r.name] = seen.get(r.name, 0) + 1
    # linearized products contribute three rows under one bracket name
    assert {n for n, k in seen.items() if k > 1} == {n for n in seen if n.startswith("linearize")}


def test_writer_output_is_stable(two_service):
    model = build(two_service, "full")
    assert write_lp(model) == write_lp(build(two_service, "full"))
    text = write_lp(model)
    assert text.startswith("\\ variant=full path_budget=2")
    assert text.rstrip().endswith("End")


@pytest.mark.parametrize("fixture,variant,expected", [
    ("two_service", "full", 2.0),
    ("two_service", "no-latency", 1.0),
    ("rate4", "full", 1.0),
    ("rate4", "single-path", None),
])
def test_third_party_solver_agrees(request, fixture, variant, expected):
    inst = request.getfixturevalue(fixture)
    status, obj = _milp(read_lp(write_lp(build(inst, variant))))
    if expected is None:
        assert status == 2
    else:
        assert status == 0 and obj == pytest.approx(expected, abs=1e-6)


@pytest.mark.parametrize("seed,variant,model", micro_models(12, cap=30), ids=lambda v: str(v)[:12])
def test_third_party_solver_agrees_on_micro_models(seed, variant, model):
    status, obj = _milp(read_lp(write_lp(model)))
    ours = solve_mblp(model)
    if ours.status is MblpStatus.OPTIMAL:
        assert status == 0 and obj == pytest.approx(ours.objective, abs=1e-6)
    else:
        assert ours.status is MblpStatus.INFEASIBLE and status == 2


@pytest.mark.parametrize("text", [
    "Minimize\n obj: + 1.0 x\nSubject To\n c: + 1.0 x >= 1.0\n",
    "Minimize\n obj: + 1.0\nEnd\n",
    " stray\nEnd\n",
])
def test_malformed_text_is_rejected(text):
    with pytest.raises(ValueError):
        read_lp(text)


@pytest.mark.parametrize("variant", VARIANTS)
def test_simplex_reads_lp_text(two_service, variant):
    from nfvslice.lp_core import LinearProgram, solve_lp
    model = build(two_service, variant)
    lp, binaries = LinearProgram.from_lp_text(write_lp(model))
    assert len(binaries) == len(model.binary_columns)
    assert lp.shape == model.lp.shape
    direct, parsed = solve_lp(model.lp), solve_lp(lp)
    assert parsed.status == direct.status
    assert parsed.objective == pytest.approx(direct.objective, abs=1e-9)
