"""Command-line front end: ``python -m nfvslice <command> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .formulation import VARIANTS, InvalidInstance, UnsatisfiableFunction, build
from .instancegen import GenConfig, RetryExhausted, fig1_instance, generate
from .lpformat import write_lp
from .mblp import MblpStatus, solve_mblp
from .net_model import InstanceFormatError, parse, render
from .solution import SlicePlan, decode, power_report, validate

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_BUDGET = 0, 1, 2, 3


class InputError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return sys.stdin.read() if path == "-" else Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc


def _emit(text: str, path: str | None):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
    return lo, hi


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


_GEN_FLAGS = {
    # flag: (GenConfig field, type)
    "--seed": ("seed", int),
    "--nodes": ("node_count", int),
    "--clouds": ("cloud_count", int),
    "--region": ("region", float),
    "--link-probability": ("link_probability", float),
    "--node-capacity": ("node_capacity", _range),
    "--link-capacity": ("link_capacity", _range),
    "--functions": ("function_count", int),
    "--chain-length": ("chain_length", int),
    "--restricted-functions": ("restricted_functions", int),
    "--nfv-delay": ("nfv_delay", _range),
    "--rate": ("rate", float),
    "--slack": ("slack", _range),
    "--services": ("service_count", int),
    "--paths": ("path_budget", int),
    "--max-attempts": ("max_attempts", int),
}


def _add_gen_flags(p: argparse.ArgumentParser, skip=()):
    defaults = GenConfig()
    for flag, (name, typ) in _GEN_FLAGS.items():
        if name in skip:
            continue
        p.add_argument(flag, dest=name, type=typ, default=None,
                       help=f"default {getattr(defaults, name)!r}")


def _gen_config(args, **override) -> GenConfig:
    kw = {name: getattr(args, name) for _, (name, _) in _GEN_FLAGS.items()
          if getattr(args, name, None) is not None}
    kw.update(override)
    try:
        return GenConfig(**kw)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _cmd_generate(args) -> int:
    try:
        inst = generate(_gen_config(args))
    except RetryExhausted as exc:
        raise InputError(str(exc)) from exc
    _emit(render(inst) + "\n", args.output)
    return EXIT_OK


def _cmd_fig1(args) -> int:
    _emit(render(fig1_instance(args.variant, args.paths)) + "\n", args.output)
    return EXIT_OK


def _cmd_solve(args) -> int:
    inst = parse(_read(args.instance))
    try:
        model = build(inst, args.variant, path_budget=args.paths)
    except (InvalidInstance, UnsatisfiableFunction) as exc:
        raise InputError(str(exc)) from exc
    if args.write_lp:
        Path(args.write_lp).write_text(write_lp(model))
    trace = open(args.trace, "w") if args.trace else None
    try:
        sol = solve_mblp(model, node_limit=args.node_limit, time_limit=args.time_limit, trace=trace)
    finally:
        if trace is not None:
            trace.close()
    doc = {"status": sol.status.value, "objective": sol.objective if sol.has_solution else None,
           "stats": sol.stats.as_dict(timing=args.timing)}
    if sol.has_solution:
        plan = decode(model, sol, inst)
        report = validate(plan, inst)
        doc.update(plan=plan.to_dict(), validation=report.to_dict(), power=power_report(plan, inst))
        if args.plan:
            Path(args.plan).write_text(plan.to_json() + "\n")
        if args.report:
            Path(args.report).write_text(report.to_text())
    _emit(json.dumps(doc, indent=2) + "\n", args.output)
    if sol.status is MblpStatus.INFEASIBLE:
        return EXIT_INFEASIBLE
    if sol.status is MblpStatus.BUDGET_EXCEEDED:
        return EXIT_BUDGET
    return EXIT_OK


def _cmd_validate(args) -> int:
    inst = parse(_read(args.instance))
    try:
        plan = SlicePlan.from_dict(json.loads(_read(args.plan)))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed plan: {exc!r}") from exc
    report = validate(plan, inst)
    _emit(json.dumps(report.to_dict(), indent=2) + "\n" if args.json else report.to_text(), args.output)
    return EXIT_OK


def _cmd_experiment(args) -> int:
    template = _gen_config(args)
    cfg = ex.StudyConfig(template=template, service_counts=args.service_counts, instances=args.instances,
                         base_seed=args.base_seed, path_budget=args.paths, node_limit=args.node_limit,
                         time_limit=args.time_limit, workers=args.workers)
    run = ex.run_feasibility_study if args.study == "feasibility" else ex.run_delay_study
    report = run(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.write(out / f"{args.study}.csv", out / f"{args.study}.json")
    sys.stdout.write(report.to_json())
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nfvslice", description="Latency-aware network slicing: models, solver, studies.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a random instance as JSON")
    _add_gen_flags(g)
    g.add_argument("-o", "--output")
    g.set_defaults(func=_cmd_generate)

    f = sub.add_parser("fig1", help="emit the bundled five-node toy instance")
    f.add_argument("--variant", choices=("two-service", "rate4"), default="two-service")
    f.add_argument("--paths", type=int, default=2)
    f.add_argument("-o", "--output")
    f.set_defaults(func=_cmd_fig1)

    s = sub.add_parser("solve", help="solve one instance; exit 2 if infeasible, 3 if out of budget")
    s.add_argument("instance", help="instance JSON path or - for stdin")
    s.add_argument("--variant", choices=VARIANTS, default="full")
    s.add_argument("--paths", type=int, default=None, help="path budget (default: from the instance)")
    s.add_argument("--node-limit", type=int, default=200_000)
    s.add_argument("--time-limit", type=float, default=60.0)
    s.add_argument("--trace", help="write one line per search node here")
    s.add_argument("--write-lp", help="export the model in LP text format")
    s.add_argument("--plan", help="also write the plan JSON here")
    s.add_argument("--report", help="also write the validation report text here")
    s.add_argument("--timing", action="store_true", help="include wall time in the stats")
    s.add_argument("-o", "--output")
    s.set_defaults(func=_cmd_solve)

    v = sub.add_parser("validate", help="check a plan against an instance (always exits 0 on readable input)")
    v.add_argument("instance")
    v.add_argument("plan")
    v.add_argument("--json", action="store_true")
    v.add_argument("-o", "--output")
    v.set_defaults(func=_cmd_validate)

    e = sub.add_parser("experiment", help="run a seeded study and write CSV + JSON",
                       epilog="CSV: " + ex.CSV_HELP)
    e.add_argument("study", choices=("feasibility", "delay"))
    e.add_argument("--service-counts", type=_int_list, default=(1, 2, 3, 4))
    e.add_argument("--instances", type=int, default=20)
    e.add_argument("--base-seed", type=int, default=0)
    e.add_argument("--paths", type=int, default=2)
    e.add_argument("--node-limit", type=int, default=200_000)
    e.add_argument("--time-limit", type=float, default=60.0)
    e.add_argument("--workers", type=int, default=None, help=f"default: ${ex.WORKERS_ENV} or CPU count")
    e.add_argument("--out-dir", default="reports")
    _add_gen_flags(e, skip=("seed", "service_count", "path_budget"))
    e.set_defaults(func=_cmd_experiment)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags; 2 is reserved for infeasible solves
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, InstanceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
