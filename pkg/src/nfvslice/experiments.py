"""Seeded feasibility and delay studies over random instances.

Each instance is solved three ways: the multi-path model, the single-path
model and the latency-blind model whose decoded plan is then checked against
the end-to-end thresholds. Reports carry no timings, so reruns with the same
seeds produce identical files.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .formulation import build
from .instancegen import GenConfig, RetryExhausted, generate
from .mblp import MblpStatus, solve_mblp
from .net_model import Instance
from .solution import decode, encode, validate

WORKERS_ENV = "NFVSLICE_WORKERS"
VARIANTS = ("full", "single-path", "no-latency")
CSV_COLUMNS = (
    "service_count", "seed", "variant", "status", "feasible", "objective", "validated", "postcheck",
    "activated", "nfv_delay", "comm_delay", "total_delay", "nodes", "lp_solves", "lp_iterations", "root_bound",
)
CSV_HELP = (
    "one row per (instance, variant), sorted by service count, seed, variant. "
    "Columns: " + ", ".join(CSV_COLUMNS) + ". Delays are per-service means over the instance; "
    "feasible=1 only for a validated plan (no-latency also needs the threshold post-check)."
)


class ConsistencyError(AssertionError):
    """Two variants disagree in a way the model hierarchy rules out."""


@dataclass(frozen=True)
class StudyConfig:
    template: GenConfig = GenConfig()
    service_counts: tuple[int, ...] = (1, 2, 3, 4)
    instances: int = 20
    base_seed: int = 0
    path_budget: int = 2
    node_limit: int = 200_000
    time_limit: float | None = 60.0
    workers: int | None = None

    def __post_init__(self):
        if self.instances < 0:
            raise ValueError("instances must be non-negative")
        if self.path_budget < 1:
            raise ValueError("path_budget must be at least 1")

    def instance_config(self, service_count: int, idx: int) -> GenConfig:
        # the same seed across service counts keeps the topologies comparable
        return dataclasses.replace(self.template, seed=self.base_seed + idx, service_count=service_count,
                                   path_budget=self.path_budget)


def _blank(service_count: int, seed: int, variant: str, status: str) -> dict:
    row = dict.fromkeys(CSV_COLUMNS)
    row.update(service_count=service_count, seed=seed, variant=variant, status=status, feasible=0)
    return row


def _solve_variant(inst: Instance, variant: str, cfg: StudyConfig):
    model = build(inst, variant)
    sol = solve_mblp(model, node_limit=cfg.node_limit, time_limit=cfg.time_limit)
    plan = report = None
    if sol.has_solution:
        plan = decode(model, sol, inst)
        report = validate(plan, inst)
    return model, sol, plan, report


def _fill(row: dict, sol, plan, report, latency_checked: bool):
    st = sol.stats
    # an infeasible root has no finite bound; leave the cell empty
    root = st.root_bound if st.root_bound is not None and math.isfinite(st.root_bound) else None
    row.update(status=sol.status.value, nodes=st.nodes, lp_solves=st.lp_solves, lp_iterations=st.lp_iterations,
               root_bound=root)
    if plan is None:
        return
    structural = all(c.passed for c in report.checks if c.family != "e2e_threshold")
    e2e = report.check("e2e_threshold").passed
    row["objective"] = sol.objective
    row["validated"] = int(structural and (e2e or not latency_checked))
    if not latency_checked:
        row["postcheck"] = int(e2e)
    row["feasible"] = int(structural and e2e)
    d = report.delays
    if d:
        n = len(d)
        nfv = sum(v["nfv"] for v in d.values()) / n
        comm = sum(v["communication"] for v in d.values()) / n
        row.update(nfv_delay=nfv, comm_delay=comm, total_delay=sum(v["total"] for v in d.values()) / n)
    else:
        row.update(nfv_delay=0.0, comm_delay=0.0, total_delay=0.0)
    row["activated"] = len(plan.activated)


def run_instance(cfg: StudyConfig, service_count: int, idx: int) -> list[dict]:
    """Solve one instance under all three variants; rows come back in VARIANTS order."""
    gen = cfg.instance_config(service_count, idx)
    try:
        inst = generate(gen)
    except RetryExhausted:
        return [_blank(service_count, gen.seed, v, "NoInstance") for v in VARIANTS]

    rows = {v: _blank(service_count, gen.seed, v, "") for v in VARIANTS}
    full_model = build(inst, "full", path_budget=cfg.path_budget)

    # the restricted variants run first; a validated plan seeds the multi-path search
    starts = []
    _, sp_sol, sp_plan, sp_rep = _solve_variant(inst, "single-path", cfg)
    _fill(rows["single-path"], sp_sol, sp_plan, sp_rep, latency_checked=True)
    _, nl_sol, nl_plan, nl_rep = _solve_variant(inst, "no-latency", cfg)
    _fill(rows["no-latency"], nl_sol, nl_plan, nl_rep, latency_checked=False)
    for plan, row in ((sp_plan, rows["single-path"]), (nl_plan, rows["no-latency"])):
        if row["feasible"]:
            x = encode(plan, full_model, inst)
            if x is None:
                continue  # routes split inside one path slot can outnumber the budget
            if full_model.violations(x, 1e-6):
                raise ConsistencyError(f"seed {gen.seed} K={service_count}: validated {row['variant']} plan "
                                       "does not embed into the multi-path model")
            starts.append((full_model.objective_value(x), len(starts), x))
    incumbent = min(starts, key=lambda t: t[:2])[2] if starts else None

    sol = solve_mblp(full_model, node_limit=cfg.node_limit, time_limit=cfg.time_limit, incumbent=incumbent)
    plan = report = None
    if sol.has_solution:
        plan = decode(full_model, sol, inst)
        report = validate(plan, inst)
    _fill(rows["full"], sol, plan, report, latency_checked=True)
    _check_consistency(rows, gen.seed, service_count)
    return [rows[v] for v in VARIANTS]


def _check_consistency(rows: dict, seed: int, k: int):
    full, sp, nl = rows["full"], rows["single-path"], rows["no-latency"]
    where = f"seed {seed} K={k}"
    if full["status"] == MblpStatus.OPTIMAL.value and not full["feasible"]:
        raise ConsistencyError(f"{where}: optimal multi-path plan failed validation")
    if sp["status"] == MblpStatus.OPTIMAL.value and not sp["validated"]:
        raise ConsistencyError(f"{where}: optimal single-path plan failed validation")
    if nl["status"] == MblpStatus.OPTIMAL.value and not nl["validated"]:
        raise ConsistencyError(f"{where}: optimal latency-blind plan failed structural validation")
    if sp["feasible"]:
        if not full["feasible"]:
            raise ConsistencyError(f"{where}: single-path feasible but multi-path not")
        if full["status"] == MblpStatus.OPTIMAL.value and full["objective"] > sp["objective"] + 1e-9:
            raise ConsistencyError(f"{where}: multi-path objective exceeds single-path objective")
    if full["status"] == MblpStatus.OPTIMAL.value and nl["status"] == MblpStatus.OPTIMAL.value:
        if nl["objective"] > full["objective"] + 1e-9:
            raise ConsistencyError(f"{where}: latency-blind objective exceeds multi-path objective")
    if full["feasible"] and nl["status"] == MblpStatus.INFEASIBLE.value:
        raise ConsistencyError(f"{where}: relaxation infeasible while multi-path feasible")


def _worker_count(cfg: StudyConfig) -> int:
    if cfg.workers is not None:
        return max(1, cfg.workers)
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _star(args):
    return run_instance(*args)


def collect(cfg: StudyConfig) -> list[dict]:
    jobs = [(cfg, k, idx) for k in cfg.service_counts for idx in range(cfg.instances)]
    workers = _worker_count(cfg)
    if workers == 1 or len(jobs) <= 1:
        results = [_star(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_star, jobs))
    rows = [r for group in results for r in group]
    order = {v: i for i, v in enumerate(VARIANTS)}
    rows.sort(key=lambda r: (r["service_count"], r["seed"], order[r["variant"]]))
    return rows


def _mean(values):
    values = list(values)
    return float(np.mean(values)) if values else None


def feasibility_aggregates(rows: list[dict], service_counts) -> dict:
    out = {}
    for k in service_counts:
        sub = [r for r in rows if r["service_count"] == k]
        point = {"instances": len({r["seed"] for r in sub})}
        for v in VARIANTS:
            vr = [r for r in sub if r["variant"] == v]
            point[v] = {
                "feasible": sum(r["feasible"] for r in vr),
                "budget_exceeded": sum(r["status"] == MblpStatus.BUDGET_EXCEEDED.value for r in vr),
            }
        nl = [r for r in sub if r["variant"] == "no-latency"]
        point["postcheck"] = {"pass": sum(r["postcheck"] == 1 for r in nl),
                              "fail": sum(r["postcheck"] == 0 for r in nl)}
        out[str(k)] = point
    return out


def delay_aggregates(rows: list[dict], service_counts) -> dict:
    """Means over instances where the multi-path model is feasible."""
    out = {}
    for k in service_counts:
        ok = [r for r in rows if r["service_count"] == k and r["variant"] == "full" and r["feasible"]]
        out[str(k)] = {
            "feasible_instances": len(ok),
            "mean_activated": _mean(r["activated"] for r in ok),
            "mean_nfv_delay": _mean(r["nfv_delay"] for r in ok),
            "mean_comm_delay": _mean(r["comm_delay"] for r in ok),
            "mean_total_delay": _mean(r["total_delay"] for r in ok),
        }
    return out


@dataclass
class ExperimentReport:
    kind: str
    config: StudyConfig
    rows: list[dict] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({c: _cell(r[c]) for c in CSV_COLUMNS})
        return buf.getvalue()

    def to_json(self) -> str:
        cfg = dataclasses.asdict(self.config)
        cfg.pop("workers")
        doc = {"kind": self.kind, "config": cfg, "rows": len(self.rows), "aggregates": self.aggregates}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def write(self, csv_path, json_path):
        with open(csv_path, "w", newline="") as fh:
            fh.write(self.to_csv())
        with open(json_path, "w") as fh:
            fh.write(self.to_json())


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def read_csv_rows(text: str) -> list[dict]:
    """Parse a report CSV back into typed rows."""
    ints = {"service_count", "seed", "feasible", "validated", "postcheck", "activated", "nodes", "lp_solves",
            "lp_iterations"}
    floats = {"objective", "nfv_delay", "comm_delay", "total_delay", "root_bound"}
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        row = {}
        for c in CSV_COLUMNS:
            v = r[c]
            if v == "":
                row[c] = None
            elif c in ints:
                row[c] = int(v)
            elif c in floats:
                row[c] = float(v)
            else:
                row[c] = v
        rows.append(row)
    return rows


def run_feasibility_study(cfg: StudyConfig, rows: list[dict] | None = None) -> ExperimentReport:
    rows = collect(cfg) if rows is None else rows
    return ExperimentReport("feasibility", cfg, rows, feasibility_aggregates(rows, cfg.service_counts))


def run_delay_study(cfg: StudyConfig, rows: list[dict] | None = None) -> ExperimentReport:
    """Delay statistics; ``rows`` from an earlier study on the same config can be reused."""
    rows = collect(cfg) if rows is None else rows
    return ExperimentReport("delay", cfg, rows, delay_aggregates(rows, cfg.service_counts))
